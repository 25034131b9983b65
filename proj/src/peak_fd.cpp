#include "freshma/peak_fd.hpp"

#include "freshma/cra.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace freshma {

namespace {

void check_params(const FdParams& p) {
    if (p.K < 1 || p.c < 1) throw InvalidParameter("FD needs K >= 1 and c >= 1");
    if (!(p.lambda >= 0.0)) throw InvalidParameter("FD needs lambda >= 0");
    if (!(p.w1 > 0.0 && p.w1 < 1.0)) throw InvalidParameter("FD needs 0 < w1 < 1");
    if (p.N1 < 1 || p.N2 < 1) throw InvalidParameter("FD needs N1, N2 >= 1");
}

// Value with its derivative along w1.
struct Dual {
    double v = 0.0, d = 0.0;
};

// Distribution of (y, z) after `slots` reservation slots starting from q1.
void slot_dp(int q1, int slots, const std::vector<Dual>& arrivals, int y_max, int z_max,
             std::vector<Dual>& out) {
    const int W = z_max + 1;
    std::vector<Dual> cur((y_max + 1) * W), next((y_max + 1) * W);
    cur[0].v = 1.0;
    const int a_cap = static_cast<int>(arrivals.size()) - 1;
    for (int slot = 0; slot < slots; ++slot) {
        std::fill(next.begin(), next.end(), Dual{});
        const int y_hi = std::min(y_max, slot * a_cap);
        for (int y = 0; y <= y_hi; ++y)
            for (int z = 0; z <= std::min(slot, z_max); ++z) {
                Dual p = cur[y * W + z];
                if (p.v == 0.0 && p.d == 0.0) continue;
                const int k = q1 + y - z;
                const double g = aloha_gamma(k);
                for (int won = 0; won <= 1; ++won) {
                    double pz = won ? g : 1.0 - g;
                    if (pz == 0.0) continue;
                    for (int a = 0; a <= a_cap; ++a) {
                        Dual& t = next[(y + a) * W + z + won];
                        t.v += p.v * pz * arrivals[a].v;
                        t.d += pz * (p.d * arrivals[a].v + p.v * arrivals[a].d);
                    }
                }
            }
        cur.swap(next);
    }
    out = std::move(cur);
}

}  // namespace

FrameShape frame_shape(const FdParams& p) {
    check_params(p);
    FrameShape s;
    s.T1 = 1.0 / p.w1;
    s.T2 = p.c / (1.0 - p.w1);
    s.ratio = p.K * p.c * p.w1 / (1.0 - p.w1);
    // guard the integer case against round-off just below an integer
    double fl = std::floor(s.ratio + 1e-12);
    s.slots_low = static_cast<int>(fl);
    s.slots_high = s.slots_low + 1;
    s.sigma = std::clamp(1.0 - s.ratio + fl, 0.0, 1.0);
    s.dsigma = -p.K * p.c / ((1.0 - p.w1) * (1.0 - p.w1));
    s.rate = p.lambda * s.T1 / p.K;
    s.drate = -s.rate / p.w1;
    s.y_cap = std::max(1, poisson_support(s.rate, 1e-12));
    return s;
}

std::pair<double, double> fd_feasible_interval(int K, int c, double lambda) {
    return {lambda * std::exp(1.0) / K, 1.0 - lambda * c};
}

double fd_max_lambda(int K, int c) { return K / (std::exp(1.0) + K * c); }

bool fd_is_stable(const FdParams& p) {
    auto [lo, hi] = fd_feasible_interval(p.K, p.c, p.lambda);
    return p.w1 > lo && p.w1 < hi;
}

double FrameKernel::total() const {
    double s = 0.0;
    for (double v : h) s += v;
    return s;
}

FrameKernel fd_frame_kernel(int q1, const FdParams& p) { return fd_frame_kernel(q1, p, frame_shape(p)); }

FrameKernel fd_frame_kernel(int q1, const FdParams&, const FrameShape& s) {
    if (q1 < 0) throw InvalidParameter("negative reservation queue");
    // Per-slot arrival law, tail lumped at y_cap, with d/dw1 through the rate.
    std::vector<Dual> arr(s.y_cap + 1);
    double used = 0.0, dused = 0.0;
    for (int y = 0; y < s.y_cap; ++y) {
        double pm = poisson_pmf(s.rate, y);
        double dpm = (poisson_pmf(s.rate, y - 1) - pm) * s.drate;
        arr[y] = {pm, dpm};
        used += pm;
        dused += dpm;
    }
    arr[s.y_cap] = {std::max(0.0, 1.0 - used), -dused};

    FrameKernel k;
    k.z_max = s.slots_high;
    k.y_max = s.slots_high * s.y_cap;
    std::vector<Dual> lo, hi;
    slot_dp(q1, s.slots_low, arr, k.y_max, k.z_max, lo);
    slot_dp(q1, s.slots_high, arr, k.y_max, k.z_max, hi);
    k.h.resize(lo.size());
    k.dh.resize(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        k.h[i] = s.sigma * lo[i].v + (1.0 - s.sigma) * hi[i].v;
        k.dh[i] = s.sigma * lo[i].d + (1.0 - s.sigma) * hi[i].d + s.dsigma * (lo[i].v - hi[i].v);
    }
    return k;
}

FdChain build_fd_chain(const FdParams& p) {
    FdChain ch;
    ch.params = p;
    ch.shape = frame_shape(p);
    ch.stable = fd_is_stable(p);
    const int N1 = p.N1, N2 = p.N2;
    const std::size_t dim = static_cast<std::size_t>(N1 + 1) * (N2 + 1);
    std::vector<FrameKernel> kernels;
    kernels.reserve(N1 + 1);
    for (int q1 = 0; q1 <= N1; ++q1) kernels.push_back(fd_frame_kernel(q1, p, ch.shape));

    SparseBuilder b(dim, dim), db(dim, dim);
    ch.accepted.assign(dim, 0.0);
    for (int q2 = 0; q2 <= N2; ++q2)
        for (int q1 = 0; q1 <= N1; ++q1) {
            const auto& k = kernels[q1];
            const int base2 = std::max(q2 - 1, 0);
            double acc = 0.0;
            for (int y = 0; y <= k.y_max; ++y)
                for (int z = 0; z <= k.z_max; ++z) {
                    double h = k.at(y, z), dh = k.d_at(y, z);
                    if (h == 0.0 && dh == 0.0) continue;
                    int raw1 = q1 + y - z, raw2 = base2 + z;
                    int n1 = std::min(raw1, N1), n2 = std::min(raw2, N2);
                    std::size_t to = ch.index(n2, n1);
                    b.add(to, h);
                    db.add(to, dh);
                    acc += h * (y - (raw1 - n1) - (raw2 - n2));
                }
            ch.accepted[ch.index(q2, q1)] = acc;
            b.end_row();
            db.end_row();
        }
    ch.matrix = SparseStochasticMatrix(b.finish());
    ch.dmatrix = db.finish();
    return ch;
}

FdResult fd_evaluate(const FdParams& p, bool with_derivative) {
    if (!(p.lambda > 0.0)) throw InvalidParameter("FD peak AoII needs lambda > 0");
    auto ch = build_fd_chain(p);
    auto pi = solve_steady_state(ch.matrix);
    const std::size_t dim = ch.matrix.dimension();
    const int N1 = p.N1;
    FdResult r;
    r.stable = ch.stable;
    r.residual = pi.residual;
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        int q2 = static_cast<int>(i / (N1 + 1)), q1 = static_cast<int>(i % (N1 + 1));
        r.mean_q1 += pi[i] * q1;
        r.mean_q2 += pi[i] * q2;
        acc += pi[i] * ch.accepted[i];
    }
    r.L_bar = r.mean_q1 + r.mean_q2;
    const double frame = p.K * ch.shape.T2;
    r.peak_aoii = frame / 2.0 + p.K / p.lambda * r.L_bar;
    r.lambda_eff = acc * p.K / frame;
    r.loss_rate = std::max(0.0, 1.0 - r.lambda_eff / p.lambda);

    if (with_derivative) {
        // d pi = -pi dP Q^{-1}, Q = P - I + 1 1^T
        Eigen::MatrixXd Qt = Eigen::MatrixXd::Ones(dim, dim);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
        const auto& P = ch.matrix.raw();
        const auto& dP = ch.dmatrix;
        for (std::size_t i = 0; i < dim; ++i) {
            Qt(i, i) -= 1.0;
            for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k) Qt(P.col[k], i) += P.val[k];
            for (std::size_t k = dP.row_ptr[i]; k < dP.row_ptr[i + 1]; ++k) rhs(dP.col[k]) -= pi[i] * dP.val[k];
        }
        Eigen::VectorXd dpi = Qt.partialPivLu().solve(rhs);
        double dL = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dL += dpi(i) * (static_cast<int>(i / (N1 + 1)) + static_cast<int>(i % (N1 + 1)));
        const double one_minus = 1.0 - p.w1;
        r.derivative = p.K * p.c / (2.0 * one_minus * one_minus) + p.K / p.lambda * dL;
    }
    return r;
}

double fd_peak_aoii(const FdParams& p) { return fd_evaluate(p, false).peak_aoii; }

double fd_peak_aoii_derivative(const FdParams& p) {
    if (p.lambda == 0.0) {
        double om = 1.0 - p.w1;
        return p.K * p.c / (2.0 * om * om);
    }
    return fd_evaluate(p, true).derivative;
}

FdOptimum optimize_fd_bandwidth(const FdParams& base, double eps) {
    if (!(base.lambda > 0.0)) throw InvalidParameter("optimizer needs lambda > 0");
    const double bound = fd_max_lambda(base.K, base.c);
    if (base.lambda >= bound) {
        std::ostringstream os;
        os.precision(6);
        os << "infeasible: lambda = " << base.lambda << " >= K/(e + K c) = " << bound
           << "; no bandwidth split stabilizes both channels";
        throw InfeasibleParameters(os.str());
    }
    auto [lo, hi] = fd_feasible_interval(base.K, base.c, base.lambda);
    FdOptimum out;
    auto eval = [&](double w, bool deriv) {
        FdParams q = base;
        q.w1 = w;
        ++out.evaluations;
        return fd_evaluate(q, deriv);
    };

    const int G = 24;
    std::vector<double> grid(G), ell(G), der(G);
    for (int i = 0; i < G; ++i) {
        grid[i] = lo + (i + 0.5) * (hi - lo) / G;
        auto r = eval(grid[i], true);
        ell[i] = r.peak_aoii;
        der[i] = r.derivative;
    }
    // Sign pattern must be (-...-)(+...+) for the derivative bisection.
    int first_pos = G;
    for (int i = 0; i < G; ++i)
        if (der[i] > 0.0) {
            first_pos = i;
            break;
        }
    bool monotone = first_pos > 0 && first_pos < G;
    for (int i = first_pos; i < G && monotone; ++i)
        if (der[i] <= 0.0) monotone = false;

    if (monotone) {
        double a = grid[first_pos - 1], b = grid[first_pos];
        while (b - a >= eps) {
            double m = 0.5 * (a + b);
            if (eval(m, true).derivative > 0.0) b = m;
            else a = m;
        }
        out.lower = a;
        out.upper = b;
    } else {
        out.used_fallback = true;
        int best = 0;
        for (int i = 1; i < G; ++i)
            if (ell[i] < ell[best]) best = i;  // strict: ties keep the lower w1
        double a = best > 0 ? grid[best - 1] : lo + 1e-9;
        double b = best + 1 < G ? grid[best + 1] : hi - 1e-9;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = eval(x1, false).peak_aoii, f2 = eval(x2, false).peak_aoii;
        while (b - a >= eps) {
            if (f1 <= f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = eval(x1, false).peak_aoii;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = eval(x2, false).peak_aoii;
            }
        }
        out.lower = a;
        out.upper = b;
    }
    out.w1 = 0.5 * (out.lower + out.upper);
    out.peak_aoii = eval(out.w1, false).peak_aoii;
    return out;
}

}  // namespace freshma
