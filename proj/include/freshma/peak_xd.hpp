#pragma once

#include "freshma/core.hpp"
#include "freshma/cra.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace freshma {

// Generic finite average-cost MDP: each state owns a contiguous block of
// choices, each choice has an action label, a cost and a sparse row.
struct MdpModel {
    std::size_t num_states = 0;
    std::vector<std::size_t> choice_ptr{0};  // size num_states + 1
    std::vector<int> action;
    std::vector<double> cost;
    std::vector<std::size_t> row_ptr{0};  // per choice into col/val
    std::vector<std::size_t> col;
    std::vector<double> val;

    // Append a choice to the state currently being built.
    void add_choice(int action_label, double choice_cost, const std::vector<std::pair<std::size_t, double>>& row);
    void end_state();
    std::size_t choices(std::size_t state) const { return choice_ptr[state + 1] - choice_ptr[state]; }
    double max_row_error() const;
};

struct ValueIterationOptions {
    double eps = 1e-6;
    int max_iterations = 100000;
    // Mixes tau*I into every row so periodic chains converge; 0 gives the plain iteration.
    double tau = 0.5;
    double tie_tolerance = 1e-9;
};

struct ValueIterationResult {
    std::vector<double> values;
    double average_cost = 0.0;  // midpoint of the span bounds
    double lower = 0.0, upper = 0.0;
    std::vector<std::size_t> policy;  // chosen choice index (absolute) per state
    double span_at_stop = 0.0;
    int iterations = 0;
    std::vector<double> span_history;
};

// Throws ConvergenceFailure (residual = final span) when the cap is hit.
ValueIterationResult value_iteration(const MdpModel& mdp, const ValueIterationOptions& opt = {});

// Chain induced by a choice per state.
SparseStochasticMatrix policy_chain(const MdpModel& mdp, const std::vector<std::size_t>& policy);

// ---- dynamic bandwidth (XD) model ----

struct XdParams {
    int M = 3;
    int N2 = 1;
    int c = 3;
    double lambda = 0.1;
    int i_max = 2;
    int Q0max = 10;
    bool printed_head_load_sign = false;  // q0'' = q0' + y + i on head advance
    std::size_t max_states = 2000000;
};

// Action label: interval length i for w1 = 1/i, 0 for w1 = 0.
inline double action_w1(int a) { return a == 0 ? 0.0 : 1.0 / a; }

struct XdState {
    int td = 1;        // slot index within the reservation interval
    int interval = 0;  // interval length in force; 0 when td == 1 (no constraint)
    int q0 = 0;        // packets at all nodes except the loaded head
    int q1 = 0;        // nodes in the reservation queue
    int q2 = 0;        // nodes waiting in the transmission queue
    int q3 = 0;        // head work left, in ticks (see XdUnits)
    int s = 0;         // CRA state

    std::uint64_t key() const;
    bool operator==(const XdState&) const = default;
};

// q3 is kept in integer ticks: one packet is c*L ticks with L = lcm(1..i_max),
// so a slot under w1 = 1/i removes L(i-1)/i ticks and under w1 = 0 removes L.
struct XdUnits {
    int per_slot = 1;    // L
    int per_packet = 1;  // c*L

    explicit XdUnits(const XdParams& p);
    int removed(int action) const { return action == 0 ? per_slot : per_slot * (action - 1) / action; }
};

// P(next head holds i packets); renormalised binomial form.
double xd_head_advance_prob(int q0, int q1, int q2, int i);
// Printed stars-and-bars law of j packets landing on empty nodes.
double xd_new_reservation_prob(int M, int q1, int q2, int y, int j);
// P(y uniformly placed packets hit exactly j distinct nodes among `empty` of M).
double xd_new_node_prob(int M, int empty, int y, int j);

struct XdTransition {
    XdState to;
    double prob = 0.0;
    double dropped = 0.0;  // packets dropped at the q0 cap on this branch
};

// Actions allowed in a state, in tie-breaking order (w1 = 0 first, then 1/i_max .. 1).
std::vector<int> xd_actions(const XdParams& p, const XdState& s);
std::vector<XdTransition> xd_step1_kernel(const XdParams& p, const CraSpec& cra, const XdState& s, int action);
std::vector<XdTransition> xd_step2_kernel(const XdParams& p, const XdState& mid);
double xd_cost(const XdParams& p, const XdState& s, int action);

struct XdMdp {
    XdParams params;
    CraSpec cra;
    std::vector<XdState> states;  // states[0] is the empty system
    MdpModel mdp;
    std::vector<double> dropped;  // expected drops per choice
};

XdMdp build_xd_mdp(const XdParams& p, const CraSpec& cra);
XdMdp build_xd_mdp(const XdParams& p);  // Aloha reservation

struct XdSolution {
    ValueIterationResult vi;
    double L_eps = 0.0;       // value-iteration estimate
    double L_policy = 0.0;    // exact average cost of the extracted policy
    double lambda_eff = 0.0;  // accepted rate under the policy
    double loss_rate = 0.0;
    double peak_aoii = 0.0;   // L_policy / lambda_eff
    double mean_q1 = 0.0, mean_q2 = 0.0;
    double cap_mass = 0.0;    // stationary mass on q0 = Q0max
    double extreme_share = 0.0;  // stationary share of free slots choosing w1 = 0 or 1
    std::size_t num_states = 0;
    double residual = 0.0;
};

XdSolution solve_xd(const XdMdp& m, const ValueIterationOptions& opt = {});
XdSolution solve_xd(const XdParams& p, const ValueIterationOptions& opt = {});

// Action chosen by a solved policy, keyed by state; used by the simulator.
struct XdPolicyTable {
    XdParams params;
    std::vector<XdState> states;
    std::vector<int> action;
    std::unordered_map<std::uint64_t, std::size_t> index;

    int lookup(const XdState& s) const;  // -1 when the state is not tabulated
};
XdPolicyTable xd_policy_table(const XdMdp& m, const ValueIterationResult& vi);

}  // namespace freshma
