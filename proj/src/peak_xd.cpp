#include "freshma/peak_xd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace freshma {

// ---------------------------------------------------------------- MDP core

void MdpModel::add_choice(int action_label, double choice_cost,
                          const std::vector<std::pair<std::size_t, double>>& row) {
    action.push_back(action_label);
    cost.push_back(choice_cost);
    for (auto [j, p] : row) {
        col.push_back(j);
        val.push_back(p);
    }
    row_ptr.push_back(col.size());
}

void MdpModel::end_state() {
    choice_ptr.push_back(action.size());
    num_states = choice_ptr.size() - 1;
}

double MdpModel::max_row_error() const {
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < row_ptr.size(); ++k) {
        double sum = 0.0;
        for (std::size_t e = row_ptr[k]; e < row_ptr[k + 1]; ++e) sum += val[e];
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

ValueIterationResult value_iteration(const MdpModel& mdp, const ValueIterationOptions& opt) {
    const std::size_t n = mdp.num_states;
    if (n == 0) throw InvalidParameter("empty MDP");
    if (!(opt.tau >= 0.0 && opt.tau < 1.0)) throw InvalidParameter("tau must lie in [0, 1)");
    const double mix = 1.0 - opt.tau;

    auto q_value = [&](const std::vector<double>& v, std::size_t s, std::size_t k) {
        double acc = 0.0;
        for (std::size_t e = mdp.row_ptr[k]; e < mdp.row_ptr[k + 1]; ++e) acc += mdp.val[e] * v[mdp.col[e]];
        return mdp.cost[k] + opt.tau * v[s] + mix * acc;
    };

    ValueIterationResult r;
    std::vector<double> v(n, 0.0), w(n);
    double span = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opt.max_iterations; ++it) {
        for (std::size_t s = 0; s < n; ++s) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = mdp.choice_ptr[s]; k < mdp.choice_ptr[s + 1]; ++k) best = std::min(best, q_value(v, s, k));
            w[s] = best;
        }
        double hi = -std::numeric_limits<double>::infinity(), lo = -hi;
        for (std::size_t s = 0; s < n; ++s) {
            double d = w[s] - v[s];
            hi = std::max(hi, d);
            lo = std::min(lo, d);
        }
        span = hi - lo;
        r.span_history.push_back(span);
        r.iterations = it;
        // shifting by a constant leaves every later increment unchanged
        const double shift = w[0];
        for (std::size_t s = 0; s < n; ++s) v[s] = w[s] - shift;
        if (span < opt.eps) {
            r.lower = lo;
            r.upper = hi;
            r.average_cost = 0.5 * (hi + lo);
            r.span_at_stop = span;
            break;
        }
    }
    if (!(span < opt.eps)) {
        std::ostringstream os;
        os << "value iteration did not reach span " << opt.eps << " in " << opt.max_iterations << " iterations";
        throw ConvergenceFailure(os.str(), span);
    }

    r.policy.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> qs;
        for (std::size_t k = mdp.choice_ptr[s]; k < mdp.choice_ptr[s + 1]; ++k) {
            qs.push_back(q_value(v, s, k));
            best = std::min(best, qs.back());
        }
        const double tol = opt.tie_tolerance * (1.0 + std::abs(best));
        for (std::size_t k = 0; k < qs.size(); ++k)
            if (qs[k] <= best + tol) {
                r.policy[s] = mdp.choice_ptr[s] + k;
                break;
            }
    }
    r.values = std::move(v);
    return r;
}

SparseStochasticMatrix policy_chain(const MdpModel& mdp, const std::vector<std::size_t>& policy) {
    if (policy.size() != mdp.num_states) throw InvalidParameter("policy size does not match the MDP");
    SparseBuilder b(mdp.num_states, mdp.num_states);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
        const std::size_t k = policy[s];
        if (k < mdp.choice_ptr[s] || k >= mdp.choice_ptr[s + 1]) throw InvalidParameter("policy picks a choice of another state");
        for (std::size_t e = mdp.row_ptr[k]; e < mdp.row_ptr[k + 1]; ++e) b.add(mdp.col[e], mdp.val[e]);
        b.end_row();
    }
    return SparseStochasticMatrix(b.finish());
}

// ---------------------------------------------------------------- XD model

std::uint64_t XdState::key() const {
    auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)); };
    return u(td) | u(interval) << 6 | u(q0) << 12 | u(q1) << 22 | u(q2) << 30 | u(q3) << 38 | u(s) << 56;
}

XdUnits::XdUnits(const XdParams& p) {
    int L = 1;
    for (int i = 2; i <= p.i_max; ++i) L = std::lcm(L, i);
    per_slot = L;
    per_packet = p.c * L;
}

double xd_head_advance_prob(int q0, int q1, int q2, int i) {
    const int nodes = q1 + q2, extra = q0 - q1 - q2;
    if (q2 <= 0 || extra < 0 || i < 1 || i > extra + 1) return 0.0;
    if (nodes == 1) return i == extra + 1 ? 1.0 : 0.0;
    const double p = 1.0 / nodes;
    return binomial(extra, i - 1) * std::pow(p, i - 1) * std::pow(1.0 - p, extra - i + 1);
}

double xd_new_reservation_prob(int M, int q1, int q2, int y, int j) {
    const int empty = M - q1 - q2, held = q1 + q2;
    if (empty < 0 || y < 0 || j < 0 || j > y) return 0.0;
    // C(n - 1, k - 1) ways to put n packets on k nodes; zero nodes only take zero packets.
    auto ways = [](int packets, int nodes) {
        if (nodes == 0) return packets == 0 ? 1.0 : 0.0;
        return binomial(nodes + packets - 1, nodes - 1);
    };
    return ways(j, empty) * ways(y - j, held) / binomial(M + y - 1, M - 1);
}

namespace {

// Distribution of distinct empty nodes hit by y packets placed uniformly on M nodes.
std::vector<double> new_node_law(int M, int empty, int y) {
    std::vector<double> d(empty + 1, 0.0);
    d[0] = 1.0;
    for (int b = 0; b < y; ++b) {
        std::vector<double> n(empty + 1, 0.0);
        for (int k = 0; k <= empty; ++k) {
            if (d[k] == 0.0) continue;
            const double fresh = static_cast<double>(empty - k) / M;
            n[k] += d[k] * (1.0 - fresh);
            if (k < empty) n[k + 1] += d[k] * fresh;
        }
        d.swap(n);
    }
    return d;
}

void check_params(const XdParams& p) {
    if (p.M < 1 || p.c < 1 || p.i_max < 1) throw InvalidParameter("XD needs M, c, i_max >= 1");
    if (p.N2 < 0 || p.N2 > p.M) throw InvalidParameter("XD needs 0 <= N2 <= M");
    if (p.Q0max < p.M) throw InvalidParameter("XD needs Q0max >= M");
    if (!(p.lambda >= 0.0)) throw InvalidParameter("XD needs lambda >= 0");
    if (p.lambda * p.c >= 1.0) {
        std::ostringstream os;
        os << "XD cannot be stabilised: lambda*c = " << p.lambda * p.c << " >= 1";
        throw InfeasibleParameters(os.str());
    }
    // key layout: td, interval 6 bits; q0 10; q1, q2 8; q3 18; s 8
    if (p.M > 255 || p.Q0max > 1023 || p.i_max > 12) throw InvalidParameter("XD parameters exceed the state key range");
    const XdUnits u(p);
    if (static_cast<long long>(p.Q0max + 1) * u.per_packet >= (1LL << 18))
        throw InvalidParameter("XD head work exceeds the state key range; lower Q0max, c or i_max");
}

}  // namespace

double xd_new_node_prob(int M, int empty, int y, int j) {
    if (empty < 0 || empty > M || j < 0 || j > empty) return 0.0;
    return new_node_law(M, empty, y)[j];
}

std::vector<int> xd_actions(const XdParams& p, const XdState& s) {
    if (s.td > 1) return {s.interval};
    std::vector<int> a{0};
    for (int i = p.i_max; i >= 1; --i) a.push_back(i);
    return a;
}

std::vector<XdTransition> xd_step1_kernel(const XdParams& p, const CraSpec& cra, const XdState& s, int action) {
    if (s.td > 1 ? action != s.interval : (action < 0 || action > p.i_max))
        throw InvalidParameter("infeasible XD action for this state");
    const XdUnits u(p);
    XdState base = s;
    base.q3 = std::max(s.q3 - u.removed(action), 0);
    std::vector<XdTransition> out;
    if (action == 0) {
        base.td = 1;
        base.interval = 0;
        out.push_back({base, 1.0});
        return out;
    }
    if (s.td < action) {  // mid-interval
        base.td = s.td + 1;
        base.interval = action;
        out.push_back({base, 1.0});
        return out;
    }
    // interval ends: one contention step if a success could be admitted
    base.td = 1;
    base.interval = 0;
    const bool head_free = base.q3 == 0;
    const bool admitted = s.q1 > 0 && s.q2 + 1 - (head_free ? 1 : 0) <= p.N2;
    if (!admitted) {
        out.push_back({base, 1.0});
        return out;
    }
    const std::size_t from = cra.memoryless ? 0 : static_cast<std::size_t>(s.s);
    const auto& Y = cra.start(s.q1);
    std::map<std::pair<int, int>, double> acc;  // (success, s') -> prob
    for (std::size_t a = Y.row_ptr[from]; a < Y.row_ptr[from + 1]; ++a) {
        const std::size_t sy = Y.col[a];
        const double py = Y.val[a];
        for (std::size_t b = cra.x0.row_ptr[sy]; b < cra.x0.row_ptr[sy + 1]; ++b)
            acc[{0, cra.memoryless ? 0 : static_cast<int>(cra.x0.col[b])}] += py * cra.x0.val[b];
        for (std::size_t b = cra.x1.row_ptr[sy]; b < cra.x1.row_ptr[sy + 1]; ++b)
            acc[{1, cra.memoryless ? 0 : static_cast<int>(cra.x1.col[b])}] += py * cra.x1.val[b];
    }
    for (auto [k, pr] : acc) {
        if (pr == 0.0) continue;
        XdState t = base;
        t.s = k.second;
        if (k.first) {
            t.q1 -= 1;
            t.q2 += 1;
        }
        out.push_back({t, pr});
    }
    return out;
}

std::vector<XdTransition> xd_step2_kernel(const XdParams& p, const XdState& mid) {
    const XdUnits u(p);
    const auto arrivals = poisson_lumped(p.lambda, poisson_support(p.lambda, 1e-12));
    const int y_cap = static_cast<int>(arrivals.size()) - 1;

    std::vector<XdTransition> out;
    auto with_arrivals = [&](XdState t, double prob, int q0_base) {
        const int empty = p.M - t.q1 - t.q2;
        for (int y = 0; y <= y_cap; ++y) {
            if (arrivals[y] == 0.0) continue;
            const int raw = q0_base + y;
            const int kept = std::min(raw, p.Q0max);
            const auto law = new_node_law(p.M, empty, y);
            for (int j = 0; j <= empty; ++j) {
                if (law[j] == 0.0) continue;
                XdState n = t;
                n.q0 = kept;
                n.q1 = t.q1 + j;
                out.push_back({n, prob * arrivals[y] * law[j], static_cast<double>(raw - kept)});
            }
        }
    };

    if (mid.q3 == 0 && mid.q2 > 0) {
        const int extra = mid.q0 - mid.q1 - mid.q2;
        if (extra < 0) throw ModelConstructionError("XD state holds fewer packets than queued nodes");
        for (int i = 1; i <= extra + 1; ++i) {
            const double pi = xd_head_advance_prob(mid.q0, mid.q1, mid.q2, i);
            if (pi == 0.0) continue;
            XdState t = mid;
            t.q2 -= 1;
            t.q3 = i * u.per_packet;
            with_arrivals(t, pi, p.printed_head_load_sign ? mid.q0 + i : mid.q0 - i);
        }
    } else {
        with_arrivals(mid, 1.0, mid.q0);
    }
    return out;
}

double xd_cost(const XdParams& p, const XdState& s, int action) {
    const XdUnits u(p);
    return s.q0 + static_cast<double>(std::max(s.q3 - u.removed(action), 0)) / u.per_packet;
}

XdMdp build_xd_mdp(const XdParams& p) { return build_xd_mdp(p, aloha_cra(p.M)); }

XdMdp build_xd_mdp(const XdParams& p, const CraSpec& cra) {
    check_params(p);
    if (cra.size > 256) throw InvalidParameter("XD supports CRA state spaces up to 256 states");
    XdMdp m;
    m.params = p;
    m.cra = cra;
    XdState start;
    start.s = cra.memoryless ? 0 : static_cast<int>(cra.empty_state);
    std::unordered_map<std::uint64_t, std::size_t> index;
    auto find_or_add = [&](const XdState& s) {
        auto [it, fresh] = index.emplace(s.key(), m.states.size());
        if (fresh) {
            if (m.states.size() >= p.max_states) {
                std::ostringstream os;
                os << "XD reachable set exceeds " << p.max_states << " states";
                throw StateSpaceTooLarge(os.str());
            }
            m.states.push_back(s);
        }
        return it->second;
    };
    find_or_add(start);

    std::map<std::size_t, double> row;
    std::vector<std::pair<std::size_t, double>> flat;
    for (std::size_t at = 0; at < m.states.size(); ++at) {
        const XdState s = m.states[at];
        for (int a : xd_actions(p, s)) {
            row.clear();
            double drop = 0.0;
            for (const auto& t1 : xd_step1_kernel(p, cra, s, a))
                for (const auto& t2 : xd_step2_kernel(p, t1.to)) {
                    const double pr = t1.prob * t2.prob;
                    row[find_or_add(t2.to)] += pr;
                    drop += pr * t2.dropped;
                }
            flat.assign(row.begin(), row.end());
            m.mdp.add_choice(a, xd_cost(p, s, a), flat);
            m.dropped.push_back(drop);
        }
        m.mdp.end_state();
    }
    return m;
}

XdSolution solve_xd(const XdParams& p, const ValueIterationOptions& opt) { return solve_xd(build_xd_mdp(p), opt); }

XdSolution solve_xd(const XdMdp& m, const ValueIterationOptions& opt) {
    XdSolution r;
    r.num_states = m.states.size();
    r.vi = value_iteration(m.mdp, opt);
    r.L_eps = r.vi.average_cost;
    auto P = policy_chain(m.mdp, r.vi.policy);
    auto pi = solve_steady_state(P);
    r.residual = pi.residual;
    double drop = 0.0, free_mass = 0.0, extreme = 0.0;
    for (std::size_t s = 0; s < pi.size(); ++s) {
        const double w = pi[s];
        if (w == 0.0) continue;
        const std::size_t k = r.vi.policy[s];
        const auto& st = m.states[s];
        r.L_policy += w * m.mdp.cost[k];
        drop += w * m.dropped[k];
        r.mean_q1 += w * st.q1;
        r.mean_q2 += w * st.q2;
        if (st.q0 == m.params.Q0max) r.cap_mass += w;
        if (st.td == 1) {
            free_mass += w;
            if (m.mdp.action[k] <= 1) extreme += w;
        }
    }
    r.lambda_eff = std::max(0.0, m.params.lambda - drop);
    r.loss_rate = m.params.lambda > 0.0 ? std::clamp(drop / m.params.lambda, 0.0, 1.0) : 0.0;
    r.peak_aoii = r.lambda_eff > 0.0 ? r.L_policy / r.lambda_eff : std::numeric_limits<double>::quiet_NaN();
    r.extreme_share = free_mass > 0.0 ? extreme / free_mass : 1.0;
    return r;
}

int XdPolicyTable::lookup(const XdState& s) const {
    auto it = index.find(s.key());
    return it == index.end() ? -1 : action[it->second];
}

XdPolicyTable xd_policy_table(const XdMdp& m, const ValueIterationResult& vi) {
    XdPolicyTable t;
    t.params = m.params;
    t.states = m.states;
    t.action.reserve(m.states.size());
    for (std::size_t s = 0; s < m.states.size(); ++s) {
        t.action.push_back(m.mdp.action[vi.policy[s]]);
        t.index.emplace(m.states[s].key(), s);
    }
    return t;
}

}  // namespace freshma
