#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace freshma {

// Error taxonomy shared by all modules. The CLI maps these to exit codes.
struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ModelConstructionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateSpaceTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfeasibleParameters : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConvergenceFailure : std::runtime_error {
    ConvergenceFailure(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

struct ArrivalModel {
    double lambda_total = 0.0;
    int num_nodes = 1;

    ArrivalModel(double lambda, int nodes);
    double per_node_rate() const { return lambda_total / num_nodes; }
};

double poisson_pmf(double rate, int count);
double poisson_tail(double rate, int from);

// pmf over 0..cap-1 with the complement lumped into index cap (size cap+1).
std::vector<double> poisson_lumped(double rate, int cap);
// Smallest y such that P(X > y) < tol.
int poisson_support(double rate, double tol);

// Mixed-radix lexicographic index over a fixed-length integer tuple; the last
// coordinate varies fastest.
class MixedRadixSpace {
public:
    MixedRadixSpace() = default;
    explicit MixedRadixSpace(std::vector<int> radices);

    std::size_t size() const { return size_; }
    std::size_t encode(const std::vector<int>& digits) const;
    std::vector<int> decode(std::size_t index) const;
    const std::vector<int>& radices() const { return radices_; }

private:
    std::vector<int> radices_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

// Irregular state space: states enumerated once and kept in sorted order.
template <class State>
class TableSpace {
public:
    TableSpace() = default;
    explicit TableSpace(std::vector<State> states) : states_(std::move(states)) {
        std::sort(states_.begin(), states_.end());
        states_.erase(std::unique(states_.begin(), states_.end()), states_.end());
    }
    std::size_t size() const { return states_.size(); }
    const State& decode(std::size_t i) const { return states_.at(i); }
    // Returns size() when the state is not in the table.
    std::size_t find(const State& s) const {
        auto it = std::lower_bound(states_.begin(), states_.end(), s);
        if (it == states_.end() || *it != s) return states_.size();
        return static_cast<std::size_t>(it - states_.begin());
    }
    std::size_t encode(const State& s) const {
        std::size_t i = find(s);
        if (i == states_.size()) throw ModelConstructionError("state not in table");
        return i;
    }
    const std::vector<State>& states() const { return states_; }

private:
    std::vector<State> states_;
};

// Plain CSR matrix (no stochastic invariant); used for CRA matrix families.
struct SparseMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> val;

    double at(std::size_t i, std::size_t j) const;
    double row_sum(std::size_t i) const;
};

// Accumulates entries row by row; duplicate columns inside a row are merged.
class SparseBuilder {
public:
    SparseBuilder(std::size_t rows, std::size_t cols);
    void add(std::size_t col, double p);
    // Closes the current row and starts the next one.
    void end_row();
    SparseMatrix finish();

private:
    SparseMatrix m_;
    std::map<std::size_t, double> pending_;
};

class SparseStochasticMatrix {
public:
    SparseStochasticMatrix() = default;
    // Throws ModelConstructionError if any row is not a probability vector.
    explicit SparseStochasticMatrix(SparseMatrix m, double tol = 1e-12);

    std::size_t dimension() const { return m_.rows; }
    std::size_t nonzeros() const { return m_.val.size(); }
    const SparseMatrix& raw() const { return m_; }
    double max_row_error() const;
    // y = x P
    std::vector<double> left_multiply(const std::vector<double>& x) const;

    template <class F>
    void for_row(std::size_t i, F&& f) const {
        for (std::size_t k = m_.row_ptr[i]; k < m_.row_ptr[i + 1]; ++k) f(m_.col[k], m_.val[k]);
    }

private:
    SparseMatrix m_;
};

enum class SolverMethod { Auto, Dense, SparseLU, Power };

struct SolverOptions {
    SolverMethod method = SolverMethod::Auto;
    std::size_t start_state = 0;
    std::size_t dense_threshold = 1500;
    double damping = 0.99;
    std::size_t max_iterations = 1000000;
    double tolerance = 1e-10;
};

struct SteadyState {
    std::vector<double> probabilities;
    double residual = 0.0;

    double operator[](std::size_t i) const { return probabilities[i]; }
    std::size_t size() const { return probabilities.size(); }
};

SteadyState solve_steady_state(const SparseStochasticMatrix& P, const SolverOptions& opt = {});
double steady_state_residual(const SparseStochasticMatrix& P, const std::vector<double>& pi);

template <class F>
double expectation(const SteadyState& pi, F&& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
        if (pi.probabilities[i] != 0.0) s += pi.probabilities[i] * f(i);
    return s;
}

double trigger_stage_peak_aoii(int M, int K, double lambda);

double binomial(int n, int k);

}  // namespace freshma
