#pragma once

#include "freshma/core.hpp"

#include <cmath>
#include <vector>

namespace freshma {

inline double aloha_throughput() { return std::exp(-1.0); }

// Single-node buffer model: state (0,0) plus (q, td) for 1 <= q <= N, 0 <= td <= c.
struct MfPeakModel {
    int M = 100;
    double lambda = 0.2;
    int c = 3;
    int N = 0;  // 0 selects the buffer cap automatically
    double gamma = aloha_throughput();

    double per_node_rate() const { return lambda / M; }
    std::size_t size() const { return static_cast<std::size_t>(N) * (c + 1) + 1; }
    std::size_t index(int q, int td) const { return q == 0 ? 0 : 1 + static_cast<std::size_t>(q - 1) * (c + 1) + td; }
};

// Transition matrix of the node for a given per-slot reservation success probability.
SparseStochasticMatrix mf_peak_matrix(const MfPeakModel& m, double alpha);

struct MfFixedPoint {
    std::vector<double> pi;
    int N = 0;
    double h_bar = 1.0;  // mean buffer content at a successful reservation
    double eta = 1.0;    // share of reservation slots
    double alpha = 0.0;  // success probability the returned pi was computed with
    double peak_aoii = 0.0;
    double mean_queue = 0.0;
    double top_mass = 0.0;  // mass on q = N
    double alpha_residual = 0.0;
    double hbar_residual = 0.0;
    int iterations = 0;
    bool damped = false;
    bool saturated = false;  // alpha was clipped at 1
    bool degenerate = false; // lambda = 0: no packets, peak AoII undefined
};

struct MfOptions {
    double tol = 1e-12;  // successive change in pi
    int max_iterations = 20000;
    double top_mass_target = 1e-6;
    int max_buffer = 4096;
};

// (pi, h_bar, alpha) fixed point; doubles N from 16 until the top-state mass is
// below the target when m.N == 0.
MfFixedPoint mf_peak_fixed_point(const MfPeakModel& m, const MfOptions& opt = {});

// eta and alpha implied by a distribution over the node states.
struct MfCoupling {
    double h_bar, eta, alpha;
};
MfCoupling mf_peak_coupling(const MfPeakModel& m, const std::vector<double>& pi);

struct MfAoiiResult {
    double pi1 = 0.0;
    double pi0 = 0.0;
    double alpha = 0.0;
    double eta = 0.0;
    double avg_aoii = 0.0;
    double quad_a = 0.0, quad_b = 0.0, quad_d = 0.0;
};

// Closed form for the single-packet (AoII) node; throws InfeasibleParameters
// when no root yields a probability alpha in (0, 1].
MfAoiiResult mf_aoii_closed_form(int M, double lambda, int c, double gamma = aloha_throughput());

// Numerical steady state of the truncated single-packet chain (states -c..s_max)
// using the closed-form alpha; s_max = 0 picks the truncation automatically.
struct MfAoiiChainCheck {
    double avg_aoii = 0.0;
    std::vector<double> pi;  // index s + c
    int s_max = 0;
};
MfAoiiChainCheck mf_aoii_chain_check(int M, double lambda, int c, double gamma = aloha_throughput(), int s_max = 0);

}  // namespace freshma
