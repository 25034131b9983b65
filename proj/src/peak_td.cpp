#include "freshma/peak_td.hpp"

#include <cmath>

namespace freshma {

namespace {

// Row of Y_i applied to state s, then the rows of X0 and X1 from there.
template <class F>
void reservation_outcomes(const CraSpec& cra, int queued, std::size_t s, F&& emit) {
    const auto& Y = cra.start(queued);
    for (std::size_t a = Y.row_ptr[s]; a < Y.row_ptr[s + 1]; ++a) {
        std::size_t sy = Y.col[a];
        double py = Y.val[a];
        for (std::size_t b = cra.x0.row_ptr[sy]; b < cra.x0.row_ptr[sy + 1]; ++b)
            emit(false, cra.x0.col[b], py * cra.x0.val[b]);
        for (std::size_t b = cra.x1.row_ptr[sy]; b < cra.x1.row_ptr[sy + 1]; ++b)
            emit(true, cra.x1.col[b], py * cra.x1.val[b]);
    }
}

// Arrivals onto a reservation queue of length `from`, capped at N.
template <class F>
void capped_arrivals(const std::vector<double>& a, int from, int N, F&& emit) {
    double used = 0.0;
    for (int k = 0; from + k < N; ++k) {
        emit(from + k, a[k]);
        used += a[k];
    }
    emit(N, std::max(0.0, 1.0 - used));
}

double accepted_arrivals(const std::vector<double>& a, int from, int N) {
    double used = 0.0, mean = 0.0;
    for (int k = 0; from + k < N; ++k) {
        mean += k * a[k];
        used += a[k];
    }
    return mean + (N - from) * std::max(0.0, 1.0 - used);
}

}  // namespace

TdBlocks td_block_matrices(const CraSpec& cra, double lambda, int N) {
    if (N < 1) throw InvalidParameter("TD needs N >= 1");
    if (!(lambda >= 0.0)) throw InvalidParameter("TD needs lambda >= 0");
    TdBlocks out;
    out.N = N;
    out.r0 = cra.size;
    const std::size_t r0 = cra.size, dim = (N + 1) * r0;
    std::vector<double> a(N + 1);
    for (int k = 0; k <= N; ++k) a[k] = poisson_pmf(lambda, k);

    SparseBuilder bB(dim, dim), bA0(dim, dim), bA1(dim, dim);
    for (int i = 0; i <= N; ++i) {
        for (std::size_t s = 0; s < r0; ++s) {
            reservation_outcomes(cra, i, s, [&](bool success, std::size_t s2, double p) {
                // (q1, s) pairs where the procedure holds more signals than the
                // queue are unreachable; clamping keeps their rows stochastic.
                int after = success ? std::max(i - 1, 0) : i;
                capped_arrivals(a, after, N, [&](int q, double pa) {
                    (success ? bB : bA0).add(q * r0 + s2, p * pa);
                });
            });
            capped_arrivals(a, i, N, [&](int q, double pa) { bA1.add(q * r0 + s, pa); });
            bB.end_row();
            bA0.end_row();
            bA1.end_row();
        }
    }
    out.B = bB.finish();
    out.A0 = bA0.finish();
    out.A1 = bA1.finish();
    return out;
}

std::size_t TdChain::index(int td, int q2, int q1, std::size_t s) const {
    return ((static_cast<std::size_t>(td - 1) * (N + 1) + q2) * (N + 1) + q1) * r0 + s;
}

void TdChain::decode(std::size_t idx, int& td, int& q2, int& q1, std::size_t& s) const {
    s = idx % r0;
    idx /= r0;
    q1 = static_cast<int>(idx % (N + 1));
    idx /= (N + 1);
    q2 = static_cast<int>(idx % (N + 1));
    td = static_cast<int>(idx / (N + 1)) + 1;
}

TdChain assemble_td_chain(const TdFrame& frame, const TdBlocks& blocks, double lambda) {
    if (frame.Z1 < 1 || frame.Z2 < 1 || frame.c < 1) throw InvalidParameter("TD frame parameters must be positive");
    TdChain chain;
    chain.frame = frame;
    chain.N = blocks.N;
    chain.r0 = blocks.r0;
    chain.lambda = lambda;
    const int N = blocks.N, F = frame.frame_length();
    const std::size_t dim = static_cast<std::size_t>(F) * (N + 1) * (N + 1) * blocks.r0;

    auto copy_row = [&](SparseBuilder& b, const SparseMatrix& blk, std::size_t row, int td2, int q2) {
        for (std::size_t k = blk.row_ptr[row]; k < blk.row_ptr[row + 1]; ++k) {
            std::size_t col = blk.col[k];
            b.add(chain.index(td2, q2, static_cast<int>(col / blocks.r0), col % blocks.r0), blk.val[k]);
        }
    };

    SparseBuilder b(dim, dim);
    for (std::size_t idx = 0; idx < dim; ++idx) {
        int td, q2, q1;
        std::size_t s;
        chain.decode(idx, td, q2, q1, s);
        int td2 = td % F + 1;
        std::size_t row = q1 * blocks.r0 + s;
        if (frame.is_reservation(td)) {
            if (q2 < N) {
                copy_row(b, blocks.A0, row, td2, q2);
                copy_row(b, blocks.B, row, td2, q2 + 1);
            } else {
                copy_row(b, blocks.A1, row, td2, q2);  // transmission queue full: no contention
            }
        } else if (frame.completes_service(td)) {
            copy_row(b, blocks.A1, row, td2, std::max(q2 - 1, 0));
        } else {
            copy_row(b, blocks.A1, row, td2, q2);
        }
        b.end_row();
    }
    chain.matrix = SparseStochasticMatrix(b.finish());
    return chain;
}

TdMetrics td_metrics(const TdChain& chain, const CraSpec& cra, const SteadyState& pi) {
    const int N = chain.N;
    std::vector<double> a(N + 1);
    for (int k = 0; k <= N; ++k) a[k] = poisson_pmf(chain.lambda, k);
    std::vector<double> accepted(N + 1);
    for (int i = 0; i <= N; ++i) accepted[i] = accepted_arrivals(a, i, N);

    TdMetrics m;
    m.residual = pi.residual;
    for (std::size_t idx = 0; idx < pi.size(); ++idx) {
        double p = pi[idx];
        if (p == 0.0) continue;
        int td, q2, q1;
        std::size_t s;
        chain.decode(idx, td, q2, q1, s);
        m.mean_q1 += p * q1;
        m.mean_q2 += p * q2;
        double p_success = 0.0;
        if (chain.frame.is_reservation(td) && q2 < N)
            reservation_outcomes(cra, q1, s, [&](bool ok, std::size_t, double pr) {
                if (ok) p_success += pr;
            });
        m.lambda_eff += p * (p_success * accepted[std::max(q1 - 1, 0)] + (1.0 - p_success) * accepted[q1]);
    }
    m.L_bar = m.mean_q1 + m.mean_q2;
    if (!(m.lambda_eff > 0.0)) throw InvalidParameter("degenerate load: effective arrival rate is zero");
    m.peak_aoii = m.L_bar / m.lambda_eff;
    m.loss_rate = std::max(0.0, 1.0 - m.lambda_eff / chain.lambda);
    return m;
}

TdMetrics td_metrics(const TdChain& chain, const CraSpec& cra) {
    SolverOptions o;
    o.start_state = chain.index(1, 0, 0, cra.empty_state);
    return td_metrics(chain, cra, solve_steady_state(chain.matrix, o));
}

TdMetrics analyze_td(const TdFrame& frame, int N, int R, double lambda) {
    auto cra = tree_splitting_cra(N, R);
    auto chain = assemble_td_chain(frame, td_block_matrices(cra, lambda, N), lambda);
    return td_metrics(chain, cra);
}

}  // namespace freshma
