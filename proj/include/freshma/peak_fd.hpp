#pragma once

#include "freshma/core.hpp"

#include <utility>
#include <vector>

namespace freshma {

struct FdParams {
    int K = 1;
    int c = 3;
    double lambda = 0.1;
    double w1 = 0.5;
    int N1 = 12;
    int N2 = 12;
};

struct FrameShape {
    double T1 = 0.0;      // reservation slot length, 1/w1
    double T2 = 0.0;      // data packet length, c/(1-w1)
    double ratio = 0.0;   // K*T2/T1
    int slots_low = 0;    // floor(ratio)
    int slots_high = 1;   // floor(ratio) + 1
    double sigma = 1.0;   // probability of the short frame
    double dsigma = 0.0;  // d sigma / d w1
    double rate = 0.0;    // new signals per reservation slot, lambda*T1/K
    double drate = 0.0;   // d rate / d w1
    int y_cap = 0;        // per-slot arrivals >= y_cap are lumped into y_cap
};

FrameShape frame_shape(const FdParams& p);

// (lambda*e/K, 1 - lambda*c); empty when lambda >= K/(e + K c).
std::pair<double, double> fd_feasible_interval(int K, int c, double lambda);
double fd_max_lambda(int K, int c);
bool fd_is_stable(const FdParams& p);

// h(y, z | q1) and its w1-derivative; y indexes total new signals, z successes.
struct FrameKernel {
    int y_max = 0, z_max = 0;
    std::vector<double> h, dh;  // row-major (y, z), (y_max+1) x (z_max+1)

    double at(int y, int z) const { return h[static_cast<std::size_t>(y) * (z_max + 1) + z]; }
    double d_at(int y, int z) const { return dh[static_cast<std::size_t>(y) * (z_max + 1) + z]; }
    double total() const;
};

FrameKernel fd_frame_kernel(int q1, const FdParams& p);
FrameKernel fd_frame_kernel(int q1, const FdParams& p, const FrameShape& shape);

struct FdChain {
    FdParams params;
    FrameShape shape;
    SparseStochasticMatrix matrix;  // state index q2*(N1+1) + q1
    SparseMatrix dmatrix;           // elementwise d/dw1
    std::vector<double> accepted;   // expected accepted signals per frame, per state
    bool stable = true;

    std::size_t index(int q2, int q1) const { return static_cast<std::size_t>(q2) * (params.N1 + 1) + q1; }
};

FdChain build_fd_chain(const FdParams& p);

struct FdResult {
    double peak_aoii = 0.0;
    double derivative = 0.0;
    double L_bar = 0.0;
    double mean_q1 = 0.0;
    double mean_q2 = 0.0;
    double lambda_eff = 0.0;
    double loss_rate = 0.0;
    double residual = 0.0;
    bool stable = true;
};

FdResult fd_evaluate(const FdParams& p, bool with_derivative = true);
double fd_peak_aoii(const FdParams& p);
double fd_peak_aoii_derivative(const FdParams& p);

struct FdOptimum {
    double w1 = 0.0;
    double lower = 0.0, upper = 0.0;  // final bracket
    double peak_aoii = 0.0;
    bool used_fallback = false;
    int evaluations = 0;
};

// Minimizes peak AoII over w1 (the w1 field of base is ignored).
FdOptimum optimize_fd_bandwidth(const FdParams& base, double eps = 1e-4);

}  // namespace freshma
