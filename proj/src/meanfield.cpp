#include "freshma/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace freshma {

namespace {

void check_common(int M, double lambda, int c, double gamma) {
    if (M < 1 || c < 1) throw InvalidParameter("mean-field model needs M >= 1 and c >= 1");
    if (!(lambda >= 0.0)) throw InvalidParameter("mean-field model needs lambda >= 0");
    if (lambda / M >= 1.0) throw InvalidParameter("mean-field model needs lambda/M < 1 (at most one arrival per slot)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidParameter("reservation throughput gamma must lie in (0, 1]");
}

struct PeakSolve {
    MfFixedPoint fp;
    bool ok = false;
};

PeakSolve solve_for_buffer(MfPeakModel m, const MfOptions& opt) {
    PeakSolve out;
    auto& fp = out.fp;
    fp.N = m.N;
    const std::size_t n = m.size();
    std::vector<double> pi(n, 1.0 / n);
    auto clip = [&](double a) {
        if (a > 1.0) {
            fp.saturated = true;
            return 1.0;
        }
        return a;
    };
    fp.saturated = false;
    auto coup = mf_peak_coupling(m, pi);
    double alpha = clip(coup.alpha), h_used = coup.h_bar;
    int alternations = 0;
    double last_step = 0.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        fp.saturated = false;
        SolverOptions so;
        so.start_state = 0;
        auto ss = solve_steady_state(mf_peak_matrix(m, alpha), so);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(ss[i] - pi[i]));
        pi = ss.probabilities;
        auto next = mf_peak_coupling(m, pi);
        const double target = clip(next.alpha);
        fp.iterations = it;
        if (change < opt.tol && std::abs(target - alpha) < opt.tol) {
            fp.pi = pi;
            fp.alpha = alpha;
            fp.h_bar = next.h_bar;
            fp.eta = next.eta;
            fp.alpha_residual = std::abs(alpha - next.alpha);
            fp.hbar_residual = std::abs(h_used - next.h_bar);
            out.ok = true;
            return out;
        }
        // engage averaging after 5 sign-alternating updates
        const double step = target - alpha;
        alternations = (step * last_step < 0.0) ? alternations + 1 : 0;
        last_step = step;
        if (alternations >= 5) fp.damped = true;
        alpha = fp.damped ? 0.5 * (alpha + target) : target;
        h_used = next.h_bar;
    }
    std::ostringstream os;
    os << "mean-field fixed point did not converge in " << opt.max_iterations << " iterations";
    throw ConvergenceFailure(os.str(), last_step);
}

}  // namespace

SparseStochasticMatrix mf_peak_matrix(const MfPeakModel& m, double alpha) {
    if (m.N < 1) throw InvalidParameter("buffer cap N must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in [0, 1]");
    const double a = m.per_node_rate();
    const int N = m.N, c = m.c;
    auto up = [N](int q) { return std::min(q + 1, N); };
    SparseBuilder b(m.size(), m.size());
    b.add(m.index(1, 0), a);
    b.add(0, 1.0 - a);
    b.end_row();
    for (int q = 1; q <= N; ++q)
        for (int td = 0; td <= c; ++td) {
            if (td == 0) {
                b.add(m.index(up(q), 1), alpha * a);
                b.add(m.index(q, 1), alpha * (1.0 - a));
                b.add(m.index(up(q), 0), (1.0 - alpha) * a);
                b.add(m.index(q, 0), (1.0 - alpha) * (1.0 - a));
            } else if (td < c) {
                b.add(m.index(up(q), td + 1), a);
                b.add(m.index(q, td + 1), 1.0 - a);
            } else {
                b.add(m.index(q, 1), a);  // one leaves, one arrives
                b.add(q == 1 ? 0 : m.index(q - 1, 1), 1.0 - a);
            }
            b.end_row();
        }
    return SparseStochasticMatrix(b.finish());
}

MfCoupling mf_peak_coupling(const MfPeakModel& m, const std::vector<double>& pi) {
    const double busy = 1.0 - pi[0];
    double packets = 0.0;
    for (int q = 1; q <= m.N; ++q)
        for (int td = 0; td <= m.c; ++td) packets += q * pi[m.index(q, td)];
    MfCoupling r;
    r.h_bar = busy > 0.0 ? packets / busy : 1.0;
    r.eta = 1.0 / (1.0 + m.gamma * r.h_bar * m.c);
    r.alpha = busy > 0.0 ? r.eta * m.gamma / (m.M * busy) : std::numeric_limits<double>::infinity();
    return r;
}

MfFixedPoint mf_peak_fixed_point(const MfPeakModel& model, const MfOptions& opt) {
    check_common(model.M, model.lambda, model.c, model.gamma);
    if (model.lambda == 0.0) {
        MfFixedPoint fp;
        fp.N = std::max(model.N, 1);
        MfPeakModel m = model;
        m.N = fp.N;
        fp.pi.assign(m.size(), 0.0);
        fp.pi[0] = 1.0;
        fp.degenerate = true;
        fp.peak_aoii = std::numeric_limits<double>::quiet_NaN();
        return fp;
    }
    MfPeakModel m = model;
    const bool automatic = m.N == 0;
    if (automatic) m.N = 16;
    for (;;) {
        auto fp = solve_for_buffer(m, opt).fp;
        fp.top_mass = 0.0;
        for (int td = 0; td <= m.c; ++td) fp.top_mass += fp.pi[m.index(m.N, td)];
        for (int q = 1; q <= m.N; ++q)
            for (int td = 0; td <= m.c; ++td) fp.mean_queue += q * fp.pi[m.index(q, td)];
        fp.peak_aoii = fp.mean_queue / m.per_node_rate();
        if (!automatic || fp.top_mass < opt.top_mass_target) return fp;
        if (m.N * 2 > opt.max_buffer) {
            std::ostringstream os;
            os << "mean-field buffer cap reached " << opt.max_buffer << " with top-state mass " << fp.top_mass
               << "; the node queue looks unstable";
            throw InfeasibleParameters(os.str());
        }
        m.N *= 2;
    }
}

MfAoiiResult mf_aoii_closed_form(int M, double lambda, int c, double gamma) {
    check_common(M, lambda, c, gamma);
    if (!(lambda > 0.0)) throw InvalidParameter("mean-field AoII needs lambda > 0");
    const double lb = lambda / M;
    MfAoiiResult r;
    r.eta = 1.0 / (1.0 + gamma * c);  // one packet per access
    const double eg = r.eta * gamma;
    r.quad_a = -M * (1.0 / lb + c);
    r.quad_b = M + eg * c + eg / lb;
    r.quad_d = eg;
    // a x^2 + b x - d = 0
    const double disc = r.quad_b * r.quad_b + 4.0 * r.quad_a * r.quad_d;
    auto infeasible = [&](const char* why) {
        std::ostringstream os;
        os << "mean-field AoII model infeasible (" << why << ") at M=" << M << " lambda=" << lambda << " c=" << c
           << " gamma=" << gamma;
        return InfeasibleParameters(os.str());
    };
    if (disc < 0.0) throw infeasible("negative discriminant");
    r.pi1 = (-r.quad_b + std::sqrt(disc)) / (2.0 * r.quad_a);
    const double inv_alpha = 1.0 / r.pi1 - c - 1.0 / lb;
    if (!(r.pi1 > 0.0 && r.pi1 < 1.0) || !(inv_alpha >= 1.0 - 1e-12))
        throw infeasible("reservation success probability would exceed 1; load too low for the coupling");
    r.alpha = std::min(1.0, 1.0 / inv_alpha);
    r.pi0 = r.pi1 / lb;
    r.avg_aoii = (1.0 / (r.alpha * r.alpha) + c / r.alpha + c * (c + 1) / 2.0) * r.pi1;
    return r;
}

MfAoiiChainCheck mf_aoii_chain_check(int M, double lambda, int c, double gamma, int s_max) {
    const auto cf = mf_aoii_closed_form(M, lambda, c, gamma);
    const double alpha = cf.alpha, lb = lambda / M;
    MfAoiiChainCheck out;
    if (s_max <= 0)
        s_max = alpha >= 1.0 ? 2 : std::max(2, static_cast<int>(std::ceil(std::log(1e-10) / std::log(1.0 - alpha))) + 1);
    out.s_max = s_max;
    const std::size_t n = static_cast<std::size_t>(c + 1 + s_max);
    auto idx = [c](int s) { return static_cast<std::size_t>(s + c); };
    SparseBuilder b(n, n);
    for (int s = -c; s <= s_max; ++s) {
        if (s < 0) {
            b.add(idx(s + 1), 1.0);
        } else if (s == 0) {
            b.add(idx(1), lb);
            b.add(idx(0), 1.0 - lb);
        } else {
            b.add(idx(-c), alpha);
            b.add(idx(std::min(s + 1, s_max)), 1.0 - alpha);
        }
        b.end_row();
    }
    auto ss = solve_steady_state(SparseStochasticMatrix(b.finish()));
    out.pi = ss.probabilities;
    double waiting = 0.0, age_sum = 0.0;
    for (int s = 1; s <= s_max; ++s) {
        waiting += out.pi[idx(s)];
        age_sum += s * out.pi[idx(s)];
    }
    const double x_bar = age_sum / waiting;
    out.avg_aoii = age_sum;
    for (int s = -c; s < 0; ++s) out.avg_aoii += (x_bar + s + c + 1) * out.pi[idx(s)];
    return out;
}

}  // namespace freshma
