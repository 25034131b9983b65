#include "freshma/aoii_exact.hpp"

#include <bit>
#include <cmath>
#include <deque>
#include <set>

namespace freshma {

std::vector<std::pair<int, double>> arrival_step_kernel(int age, double a_bar, int N) {
    if (age > 0) return {{std::min(age + 1, N), 1.0}};
    if (a_bar <= 0.0) return {{0, 1.0}};
    if (a_bar >= 1.0) return {{1, 1.0}};
    return {{0, 1.0 - a_bar}, {1, a_bar}};
}

namespace {

void check_common(int M, int N, int c, double lambda) {
    if (M < 1 || N < 1 || c < 1) throw InvalidParameter("AoII chain needs M, N, c >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("AoII chain needs lambda >= 0");
}

// Applies the independent per-node arrival step to ages [first, first+M) of
// an intermediate state and reports every outcome.
template <class F>
void for_each_arrival(const std::vector<int>& mid, std::size_t first, int M, int N, double a_bar, F&& emit) {
    std::vector<std::size_t> empty;
    std::vector<int> out = mid;
    for (int i = 0; i < M; ++i) {
        int q = mid[first + i];
        if (q > 0) out[first + i] = std::min(q + 1, N);
        else empty.push_back(first + i);
    }
    if (a_bar <= 0.0) {
        emit(out, 1.0);
        return;
    }
    const std::size_t k = empty.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
        double p = 1.0;
        for (std::size_t b = 0; b < k; ++b) {
            bool hit = (mask >> b) & 1;
            out[empty[b]] = hit ? 1 : 0;
            p *= hit ? a_bar : 1.0 - a_bar;
        }
        if (p > 0.0) emit(out, p);
    }
}

double mean_of(const std::vector<int>& st, std::size_t first, int M) {
    double s = 0.0;
    for (int i = 0; i < M; ++i) s += st[first + i];
    return s / M;
}

}  // namespace

AoiiChain build_polling_aoii_chain(int M, int N, int c, double lambda, const AoiiOptions& opt) {
    check_common(M, N, c, lambda);
    const int td_max = opt.service == ServiceModel::OnePacket ? c : c * N;
    std::vector<int> radices;
    radices.push_back(M);
    for (int i = 0; i < M; ++i) radices.push_back(N + 1);
    radices.push_back(td_max + 1);
    double approx = M * std::pow(N + 1.0, M) * (td_max + 1);
    if (approx > static_cast<double>(opt.max_states))
        throw StateSpaceTooLarge("polling chain would have " + std::to_string(approx) + " states");
    MixedRadixSpace space(radices);
    const double a_bar = 1.0 - std::exp(-lambda / M);

    AoiiChain chain;
    chain.scheme = "polling";
    chain.M = M;
    chain.N = N;
    chain.c = c;
    chain.lambda = lambda;
    chain.states.reserve(space.size());
    chain.mean_age.reserve(space.size());

    SparseBuilder b(space.size(), space.size());
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
        auto st = space.decode(idx);
        chain.states.push_back(st);
        chain.mean_age.push_back(mean_of(st, 1, M));
        auto mid = st;
        int s = st[0], td = st[M + 1];
        if (td == 0) {
            int next = (s + 1) % M;
            mid[0] = next;
            int q = st[1 + next];
            mid[M + 1] = opt.service == ServiceModel::OnePacket ? c * (q > 0) : c * q;
        } else {
            mid[M + 1] = td - 1;
            if (td == 1) mid[1 + s] = 0;
        }
        for_each_arrival(mid, 1, M, N, a_bar, [&](const std::vector<int>& out, double p) {
            b.add(space.encode(out), p);
        });
        b.end_row();
    }
    chain.matrix = SparseStochasticMatrix(b.finish());
    chain.start_state = 0;
    return chain;
}

namespace {

struct RaLayout {
    int M;
    std::size_t cra = 0, td = 1, tx = 2;
    std::size_t role(int i) const { return 3 + i; }
    std::size_t age(int i) const { return 3 + M + i; }
    std::size_t width() const { return 3 + 2 * M; }
};

// Step 1 of the random-access chain: reservation/transmission progress.
std::vector<std::pair<std::vector<int>, double>> ra_first_step(const std::vector<int>& st, const RaLayout& L,
                                                              int c, const CraSpec& cra) {
    std::vector<std::pair<std::vector<int>, double>> out;
    const int M = L.M;
    int td = st[L.td];
    if (td > 0) {
        auto mid = st;
        mid[L.td] = td - 1;
        if (td == 1) {
            int who = st[L.tx];
            if (who < 0) throw ModelConstructionError("transmission without a transmitting node");
            mid[L.age(who)] = 0;
            mid[L.tx] = -1;
        }
        out.emplace_back(std::move(mid), 1.0);
        return out;
    }

    // Nodes with fresh information that are neither contending nor sending.
    std::vector<int> waiting;
    for (int i = 0; i < M; ++i)
        if (st[L.age(i)] > 0 && st[L.role(i)] == -1 && st[L.tx] != i) waiting.push_back(i);

    if (cra.kind == CraKind::Aloha) {
        int n = static_cast<int>(waiting.size());
        double g = cra.x1.row_sum(std::min<std::size_t>(n, cra.size - 1));
        if (n == 0 || g <= 0.0) {
            out.emplace_back(st, 1.0);
            return out;
        }
        if (g < 1.0) out.emplace_back(st, 1.0 - g);
        for (int who : waiting) {
            auto mid = st;
            mid[L.tx] = who;
            mid[L.td] = c;
            out.emplace_back(std::move(mid), g / n);
        }
        return out;
    }
    if (cra.kind != CraKind::TreeSplitting) throw InvalidParameter("unsupported CRA for the AoII chain");

    auto base = st;
    std::size_t s = static_cast<std::size_t>(st[L.cra]);
    const auto& T = cra.tree_states;
    if (T.decode(s).idle() && !waiting.empty()) {
        const auto& Y = cra.start(static_cast<int>(waiting.size()));
        s = Y.col[Y.row_ptr[s]];
        for (int i : waiting) base[L.role(i)] = 0;
    }
    const auto& ts = T.decode(s);
    int x = ts.active_layer();
    if (x < 0) {
        base[L.cra] = static_cast<int>(s);
        out.emplace_back(std::move(base), 1.0);
        return out;
    }
    int mx = ts.layers[x];
    std::vector<int> at_x;
    for (int i = 0; i < M; ++i)
        if (base[L.role(i)] == x) at_x.push_back(i);
    if (static_cast<int>(at_x.size()) != mx)
        throw ModelConstructionError("infeasible joint state: layer count does not match node layers");

    auto single_target = [](const SparseMatrix& X, std::size_t row) {
        if (X.row_ptr[row + 1] - X.row_ptr[row] != 1) throw ModelConstructionError("expected a deterministic CRA row");
        return X.col[X.row_ptr[row]];
    };
    const int R = cra.max_depth;
    if (mx == 0) {
        base[L.cra] = static_cast<int>(single_target(cra.x0, s));
        out.emplace_back(std::move(base), 1.0);
    } else if (mx == 1) {
        base[L.cra] = static_cast<int>(single_target(cra.x1, s));
        base[L.role(at_x[0])] = -1;
        base[L.tx] = at_x[0];
        base[L.td] = c;
        out.emplace_back(std::move(base), 1.0);
    } else if (x == R) {
        base[L.cra] = static_cast<int>(single_target(cra.x0, s));
        for (int i : at_x) base[L.role(i)] = -1;
        out.emplace_back(std::move(base), 1.0);
    } else {
        for (std::size_t mask = 0; mask < (std::size_t{1} << mx); ++mask) {
            int k = std::popcount(mask);
            auto split = ts;
            split.layers[x + 1] = k;
            std::size_t target = T.encode(split);
            double p = cra.x0.at(s, target) / binomial(mx, k);
            auto mid = base;
            mid[L.cra] = static_cast<int>(target);
            for (int b = 0; b < mx; ++b)
                if ((mask >> b) & 1) mid[L.role(at_x[b])] = x + 1;
            out.emplace_back(std::move(mid), p);
        }
    }
    return out;
}

}  // namespace

AoiiChain build_ra_aoii_chain(int M, int N, int c, double lambda, const CraSpec& cra, const AoiiOptions& opt) {
    check_common(M, N, c, lambda);
    if (cra.kind == CraKind::TreeSplitting && cra.max_packets < M)
        throw InvalidParameter("tree-splitting CRA must admit all M nodes in one procedure");
    if (cra.kind == CraKind::Aloha && cra.size < static_cast<std::size_t>(M) + 1)
        throw InvalidParameter("Aloha CRA must cover queue lengths up to M");
    RaLayout L{M};
    const double a_bar = 1.0 - std::exp(-lambda / M);

    std::vector<int> init(L.width(), 0);
    init[L.cra] = static_cast<int>(cra.empty_state);
    init[L.tx] = -1;
    for (int i = 0; i < M; ++i) init[L.role(i)] = -1;

    auto successors = [&](const std::vector<int>& st, auto&& emit) {
        for (auto& [mid, p1] : ra_first_step(st, L, c, cra))
            for_each_arrival(mid, L.age(0), M, N, a_bar,
                             [&](const std::vector<int>& out, double p2) { emit(out, p1 * p2); });
    };

    // Reachability closure; infeasible combinations never appear.
    std::set<std::vector<int>> seen{init};
    std::deque<std::vector<int>> frontier{init};
    while (!frontier.empty()) {
        auto st = std::move(frontier.front());
        frontier.pop_front();
        successors(st, [&](const std::vector<int>& out, double) {
            if (seen.insert(out).second) {
                if (seen.size() > opt.max_states) throw StateSpaceTooLarge("random-access chain exceeds state cap");
                frontier.push_back(out);
            }
        });
    }
    TableSpace<std::vector<int>> space(std::vector<std::vector<int>>(seen.begin(), seen.end()));

    AoiiChain chain;
    chain.scheme = cra.kind == CraKind::Aloha ? "aloha" : "tree";
    chain.M = M;
    chain.N = N;
    chain.c = c;
    chain.lambda = lambda;
    chain.states = space.states();
    SparseBuilder b(space.size(), space.size());
    for (const auto& st : chain.states) {
        chain.mean_age.push_back(mean_of(st, L.age(0), M));
        successors(st, [&](const std::vector<int>& out, double p) { b.add(space.encode(out), p); });
        b.end_row();
    }
    chain.matrix = SparseStochasticMatrix(b.finish());
    chain.start_state = space.encode(init);
    return chain;
}

SteadyState solve_aoii_chain(const AoiiChain& chain, const SolverOptions& opt) {
    SolverOptions o = opt;
    o.start_state = chain.start_state;
    return solve_steady_state(chain.matrix, o);
}

double average_aoii(const AoiiChain& chain, const SteadyState& pi) {
    return expectation(pi, [&](std::size_t i) { return chain.mean_age[i]; });
}

double average_aoii(const AoiiChain& chain, const SolverOptions& opt) {
    return average_aoii(chain, solve_aoii_chain(chain, opt));
}

}  // namespace freshma
