#pragma once

#include "freshma/peak_xd.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

namespace freshma {

enum class SimScheme { PollingAoii, AlohaAoii, TreeAoii, TdPeak, FdPeak, XdPolicy, MeanfieldReference };

std::string scheme_name(SimScheme s);
SimScheme parse_scheme(const std::string& name);  // throws InvalidParameter

struct SimConfig {
    SimScheme scheme = SimScheme::PollingAoii;
    int M = 2;
    int N = 10;  // AoII cap (AoII schemes), buffer cap (TD)
    int c = 3;
    double lambda = 0.1;
    int R = 3;  // tree depth
    int Z1 = 3, Z2 = 1;
    int K = 1;
    double w1 = 0.5;
    int N1 = 12, N2 = 12;
    bool peak_mode = false;  // meanfield-reference: queueing nodes instead of single-packet buffers
    std::shared_ptr<const XdPolicyTable> policy;  // xd-policy
    long long horizon_slots = 1'000'000;  // total, including warm-up (frames for fd-peak)
    long long warmup_slots = 100'000;
    std::uint64_t seed = 1;
    int batches = 20;
    std::ostream* trace = nullptr;
    long long trace_limit = 10'000;
};

struct Estimate {
    double value = 0.0;
    double half_width = 0.0;  // 95% batch-means half-width
};

struct SimMetrics {
    Estimate avg_aoii;       // time average of min(age, N) per node
    Estimate avg_peak_aoii;  // mean age at delivery / mean packet sojourn
    Estimate mean_q1, mean_q2;
    Estimate occupancy;  // customers in the system (nodes with fresh data, or packets)
    Estimate cost;       // xd-policy: packets plus fractional head work after the slot
    Estimate loss_rate;
    Estimate throughput;  // deliveries per slot (per unit time for fd-peak)
    long long arrivals = 0, accepted = 0, deliveries = 0;
    long long measured = 0;      // slots (frames for fd-peak) after warm-up
    bool diverging = false;      // occupancy trend across batches
    long long untabulated = 0;   // xd-policy: states missing from the policy table
    double ci_t = 0.0;           // t quantile behind the half-widths
};

SimMetrics simulate(const SimConfig& config);

// |occupancy / throughput - mean sojourn| / mean sojourn; 0 when nothing was delivered.
double little_consistency(const SimMetrics& m);
// Three combined standard errors of the same normalised quantity.
double little_tolerance(const SimMetrics& m);

}  // namespace freshma
