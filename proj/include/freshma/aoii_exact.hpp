#pragma once

#include "freshma/core.hpp"
#include "freshma/cra.hpp"

#include <string>
#include <utility>
#include <vector>

namespace freshma {

// What a polled node sends: its single freshest packet (c slots), or a
// transmission whose length grows with the age (c * age slots).
enum class ServiceModel { OnePacket, AgeProportional };

struct AoiiOptions {
    ServiceModel service = ServiceModel::OnePacket;
    std::size_t max_states = 2'000'000;
};

struct AoiiChain {
    std::string scheme;
    int M = 0, N = 0, c = 0;
    double lambda = 0.0;
    SparseStochasticMatrix matrix;
    // Per-state descriptor. Polling: (s, q_1..q_M, t_d). Random access:
    // (cra state, t_d, transmitting node or -1, layer_1..layer_M, q_1..q_M).
    std::vector<std::vector<int>> states;
    std::vector<double> mean_age;  // (1/M) sum_i q_i per state
    std::size_t start_state = 0;
};

std::vector<std::pair<int, double>> arrival_step_kernel(int age, double a_bar, int N);

AoiiChain build_polling_aoii_chain(int M, int N, int c, double lambda, const AoiiOptions& opt = {});
AoiiChain build_ra_aoii_chain(int M, int N, int c, double lambda, const CraSpec& cra,
                              const AoiiOptions& opt = {});

SteadyState solve_aoii_chain(const AoiiChain& chain, const SolverOptions& opt = {});
double average_aoii(const AoiiChain& chain, const SolverOptions& opt = {});
double average_aoii(const AoiiChain& chain, const SteadyState& pi);

}  // namespace freshma
