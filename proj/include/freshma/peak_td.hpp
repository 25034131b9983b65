#pragma once

#include "freshma/core.hpp"
#include "freshma/cra.hpp"

namespace freshma {

struct TdFrame {
    int Z1 = 3;  // reservation slots
    int Z2 = 1;  // data packets per frame
    int c = 3;   // slots per data packet

    int frame_length() const { return Z1 + c * Z2; }
    bool is_reservation(int td) const { return td <= Z1; }
    // Slot at whose end a data packet finishes (t_d = Z1 + j*c, j = 1..Z2).
    bool completes_service(int td) const { return td > Z1 && (td - Z1) % c == 0; }
};

// Blocks over (q1, s), size (N+1)*r0, index q1*r0 + s.
struct TdBlocks {
    int N = 0;
    std::size_t r0 = 0;
    SparseMatrix B;   // reservation slot, one success
    SparseMatrix A0;  // reservation slot, no success
    SparseMatrix A1;  // no reservation: arrivals only
};

TdBlocks td_block_matrices(const CraSpec& cra, double lambda, int N);

struct TdChain {
    TdFrame frame;
    int N = 0;
    std::size_t r0 = 0;
    double lambda = 0.0;
    SparseStochasticMatrix matrix;

    std::size_t index(int td, int q2, int q1, std::size_t s) const;
    void decode(std::size_t idx, int& td, int& q2, int& q1, std::size_t& s) const;
};

TdChain assemble_td_chain(const TdFrame& frame, const TdBlocks& blocks, double lambda);

struct TdMetrics {
    double L_bar = 0.0;
    double lambda_eff = 0.0;
    double peak_aoii = 0.0;
    double loss_rate = 0.0;
    double mean_q1 = 0.0;
    double mean_q2 = 0.0;
    double residual = 0.0;
};

// The CRA is needed again for the success probability of each reservation slot.
TdMetrics td_metrics(const TdChain& chain, const CraSpec& cra, const SteadyState& pi);
TdMetrics td_metrics(const TdChain& chain, const CraSpec& cra);

// Convenience: tree-splitting TD with depth R (CRA admits up to N signals).
TdMetrics analyze_td(const TdFrame& frame, int N, int R, double lambda);

}  // namespace freshma
