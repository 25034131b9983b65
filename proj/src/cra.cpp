#include "freshma/cra.hpp"

#include <cmath>
#include <sstream>

namespace freshma {

int TreeSplitState::active_layer() const {
    int x = -1;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i] != -1) x = static_cast<int>(i);
    return x;
}

const SparseMatrix& CraSpec::start(int n) const {
    if (n < 0) throw InvalidParameter("negative queue length");
    return y[std::min<std::size_t>(n, n_max())];
}

std::vector<TreeSplitState> enumerate_tree_states(int N, int R) {
    std::vector<TreeSplitState> out;
    std::vector<int> cur(R + 1);
    // non-increasing sequences over {-1..N}
    auto rec = [&](auto&& self, int pos, int bound) -> void {
        if (pos == R + 1) {
            out.push_back({cur});
            return;
        }
        for (int v = -1; v <= bound; ++v) {
            cur[pos] = v;
            self(self, pos + 1, v);
        }
    };
    rec(rec, 0, N);
    return out;
}

CraSpec tree_splitting_cra(int N, int R) {
    if (N < 1 || R < 1) throw InvalidParameter("tree splitting needs N >= 1 and R >= 1");
    CraSpec spec;
    spec.kind = CraKind::TreeSplitting;
    spec.max_packets = N;
    spec.max_depth = R;
    spec.tree_states = TableSpace<TreeSplitState>(enumerate_tree_states(N, R));
    const auto& T = spec.tree_states;
    spec.size = T.size();
    spec.empty_state = T.encode({std::vector<int>(R + 1, -1)});

    SparseBuilder b0(spec.size, spec.size), b1(spec.size, spec.size);
    for (std::size_t i = 0; i < spec.size; ++i) {
        const auto& st = T.decode(i);
        int x = st.active_layer();
        if (x < 0) {
            b0.add(i, 1.0);  // nothing running: the state persists
        } else {
            int mx = st.layers[x];
            auto next = st;
            if (mx == 0) {
                next.layers[x] = -1;  // idle slot: the layer is done
                b0.add(T.encode(next), 1.0);
            } else if (mx == 1) {
                for (int k = x; k <= R; ++k) next.layers[k] = -1;
                for (int l = 0; l < x; ++l) next.layers[l] -= 1;
                b1.add(T.encode(next), 1.0);
            } else if (x == R) {
                // Deepest layer collides: those signals leave the procedure.
                for (int k = 0; k < x; ++k) next.layers[k] -= mx;
                next.layers[x] = -1;
                b0.add(T.encode(next), 1.0);
            } else {
                double scale = std::ldexp(1.0, -mx);
                for (int k = 0; k <= mx; ++k) {
                    next.layers[x + 1] = k;
                    b0.add(T.encode(next), binomial(mx, k) * scale);
                }
            }
        }
        b0.end_row();
        b1.end_row();
    }
    spec.x0 = b0.finish();
    spec.x1 = b1.finish();

    for (int n = 0; n <= N; ++n) {
        SparseBuilder by(spec.size, spec.size);
        for (std::size_t i = 0; i < spec.size; ++i) {
            const auto& st = T.decode(i);
            if (st.idle() && n > 0) {
                auto next = st;
                next.layers[0] = std::min(n, N);
                by.add(T.encode(next), 1.0);
            } else {
                by.add(i, 1.0);
            }
            by.end_row();
        }
        spec.y.push_back(by.finish());
    }
    return spec;
}

double aloha_gamma(int queue_len) {
    if (queue_len <= 0) return 0.0;
    if (queue_len == 1) return 1.0;
    double i = queue_len;
    return std::pow(1.0 - 1.0 / i, i - 1.0);
}

CraSpec aloha_cra(int n_max) {
    if (n_max < 0) throw InvalidParameter("aloha_cra needs n_max >= 0");
    CraSpec spec;
    spec.kind = CraKind::Aloha;
    spec.memoryless = true;
    spec.size = static_cast<std::size_t>(n_max) + 1;
    spec.empty_state = 0;
    SparseBuilder b0(spec.size, spec.size), b1(spec.size, spec.size);
    for (int n = 0; n <= n_max; ++n) {
        double g = aloha_gamma(n);
        b0.add(n, 1.0 - g);
        if (n > 0) b1.add(n - 1, g);
        b0.end_row();
        b1.end_row();
    }
    spec.x0 = b0.finish();
    spec.x1 = b1.finish();
    for (int n = 0; n <= n_max; ++n) {
        SparseBuilder by(spec.size, spec.size);
        for (std::size_t i = 0; i < spec.size; ++i) {
            by.add(n, 1.0);
            by.end_row();
        }
        spec.y.push_back(by.finish());
    }
    return spec;
}

CraValidation validate_cra(const CraSpec& spec, double tol) {
    auto fail = [](std::size_t row, const std::string& what) {
        CraValidation v;
        v.ok = false;
        v.row = row;
        std::ostringstream os;
        os << "row " << row << ": " << what;
        v.message = os.str();
        return v;
    };
    auto entries_ok = [&](const SparseMatrix& m) {
        for (double v : m.val)
            if (v < -tol || v > 1.0 + tol) return false;
        return true;
    };
    if (spec.x0.rows != spec.size || spec.x1.rows != spec.size) return fail(0, "matrix dimension mismatch");
    for (std::size_t i = 0; i < spec.size; ++i) {
        double s = spec.x0.row_sum(i) + spec.x1.row_sum(i);
        if (std::abs(s - 1.0) > tol) return fail(i, "X0 + X1 row sums to " + std::to_string(s));
    }
    if (!entries_ok(spec.x0) || !entries_ok(spec.x1)) return fail(0, "entry outside [0,1]");
    for (std::size_t n = 0; n < spec.y.size(); ++n) {
        if (!entries_ok(spec.y[n])) return fail(0, "Y" + std::to_string(n) + " entry outside [0,1]");
        for (std::size_t i = 0; i < spec.size; ++i)
            if (std::abs(spec.y[n].row_sum(i) - 1.0) > tol)
                return fail(i, "Y" + std::to_string(n) + " row does not sum to 1");
    }
    return {};
}

}  // namespace freshma
