#include "freshma/core.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <sstream>

namespace freshma {

ArrivalModel::ArrivalModel(double lambda, int nodes) : lambda_total(lambda), num_nodes(nodes) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidParameter("arrival rate must be finite and >= 0");
    if (nodes < 1) throw InvalidParameter("number of nodes must be >= 1");
}

double poisson_pmf(double rate, int count) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw InvalidParameter("Poisson rate must be finite and >= 0");
    if (count < 0) return 0.0;
    if (rate == 0.0) return count == 0 ? 1.0 : 0.0;
    return std::exp(count * std::log(rate) - rate - std::lgamma(count + 1.0));
}

double poisson_tail(double rate, int from) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw InvalidParameter("Poisson rate must be finite and >= 0");
    if (from <= 0) return 1.0;
    double s = 0.0;
    for (int i = 0; i < from; ++i) s += poisson_pmf(rate, i);
    return std::max(0.0, 1.0 - s);
}

std::vector<double> poisson_lumped(double rate, int cap) {
    std::vector<double> p(static_cast<std::size_t>(cap) + 1);
    double s = 0.0;
    for (int i = 0; i < cap; ++i) {
        p[i] = poisson_pmf(rate, i);
        s += p[i];
    }
    p[cap] = std::max(0.0, 1.0 - s);
    return p;
}

int poisson_support(double rate, double tol) {
    int y = 0;
    while (poisson_tail(rate, y + 1) >= tol) ++y;
    return y;
}

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
}

double trigger_stage_peak_aoii(int M, int K, double lambda) {
    if (!(lambda > 0.0)) throw InvalidParameter("trigger-stage peak AoII needs lambda > 0");
    if (K < 1 || M < 1) throw InvalidParameter("trigger-stage peak AoII needs M >= 1 and K >= 1");
    return M * (K - 1) / (2.0 * lambda);
}

// ---------------------------------------------------------------- state spaces

MixedRadixSpace::MixedRadixSpace(std::vector<int> radices) : radices_(std::move(radices)) {
    strides_.assign(radices_.size(), 1);
    size_ = 1;
    for (std::size_t k = radices_.size(); k-- > 0;) {
        if (radices_[k] < 1) throw InvalidParameter("radix must be positive");
        strides_[k] = size_;
        if (size_ > std::numeric_limits<std::size_t>::max() / radices_[k])
            throw StateSpaceTooLarge("mixed-radix space overflows");
        size_ *= radices_[k];
    }
}

std::size_t MixedRadixSpace::encode(const std::vector<int>& digits) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < radices_.size(); ++k) {
        if (digits[k] < 0 || digits[k] >= radices_[k]) throw ModelConstructionError("digit out of range");
        idx += strides_[k] * digits[k];
    }
    return idx;
}

std::vector<int> MixedRadixSpace::decode(std::size_t index) const {
    std::vector<int> d(radices_.size());
    for (std::size_t k = 0; k < radices_.size(); ++k) {
        d[k] = static_cast<int>(index / strides_[k]);
        index %= strides_[k];
    }
    return d;
}

// ---------------------------------------------------------------- sparse

double SparseMatrix::at(std::size_t i, std::size_t j) const {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        if (col[k] == j) return val[k];
    return 0.0;
}

double SparseMatrix::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
    return s;
}

SparseBuilder::SparseBuilder(std::size_t rows, std::size_t cols) {
    m_.rows = rows;
    m_.cols = cols;
}

void SparseBuilder::add(std::size_t col, double p) {
    if (col >= m_.cols) throw ModelConstructionError("column index out of range");
    if (p != 0.0) pending_[col] += p;
}

void SparseBuilder::end_row() {
    for (auto& [c, v] : pending_) {
        m_.col.push_back(c);
        m_.val.push_back(v);
    }
    pending_.clear();
    m_.row_ptr.push_back(m_.col.size());
}

SparseMatrix SparseBuilder::finish() {
    if (!pending_.empty()) end_row();
    if (m_.row_ptr.size() != m_.rows + 1) throw ModelConstructionError("builder row count mismatch");
    return std::move(m_);
}

SparseStochasticMatrix::SparseStochasticMatrix(SparseMatrix m, double tol) : m_(std::move(m)) {
    if (m_.rows != m_.cols) throw ModelConstructionError("transition matrix must be square");
    for (std::size_t i = 0; i < m_.rows; ++i) {
        double s = 0.0;
        for (std::size_t k = m_.row_ptr[i]; k < m_.row_ptr[i + 1]; ++k) {
            double v = m_.val[k];
            if (v < -tol || v > 1.0 + tol) {
                std::ostringstream os;
                os << "row " << i << " has probability " << v << " outside [0,1]";
                throw ModelConstructionError(os.str());
            }
            s += v;
        }
        if (std::abs(s - 1.0) > tol) {
            std::ostringstream os;
            os.precision(17);
            os << "row " << i << " sums to " << s;
            throw ModelConstructionError(os.str());
        }
    }
}

double SparseStochasticMatrix::max_row_error() const {
    double e = 0.0;
    for (std::size_t i = 0; i < m_.rows; ++i) e = std::max(e, std::abs(m_.row_sum(i) - 1.0));
    return e;
}

std::vector<double> SparseStochasticMatrix::left_multiply(const std::vector<double>& x) const {
    std::vector<double> y(m_.rows, 0.0);
    for (std::size_t i = 0; i < m_.rows; ++i) {
        double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t k = m_.row_ptr[i]; k < m_.row_ptr[i + 1]; ++k) y[m_.col[k]] += xi * m_.val[k];
    }
    return y;
}

// ---------------------------------------------------------------- steady state

double steady_state_residual(const SparseStochasticMatrix& P, const std::vector<double>& pi) {
    auto y = P.left_multiply(pi);
    double r = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) r = std::max(r, std::abs(y[i] - pi[i]));
    return r;
}

namespace {

// States reachable from start, then the unique closed communicating class
// among them (iterative Tarjan).
std::vector<std::size_t> closed_class(const SparseMatrix& P, std::size_t start) {
    const std::size_t n = P.rows;
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> index(n, none), low(n, 0), comp(n, none);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge)
    std::size_t counter = 0, ncomp = 0;
    std::vector<std::vector<std::size_t>> comps;

    auto push = [&](std::size_t v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = 1;
        call.emplace_back(v, P.row_ptr[v]);
    };
    push(start);
    while (!call.empty()) {
        auto& [v, e] = call.back();
        if (e < P.row_ptr[v + 1]) {
            std::size_t w = P.col[e++];
            if (P.val[e - 1] <= 0.0) continue;
            if (index[w] == none) {
                push(w);
            } else if (on_stack[w]) {
                low[v] = std::min(low[v], index[w]);
            }
            continue;
        }
        std::size_t vv = v;
        call.pop_back();
        if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[vv]);
        if (low[vv] == index[vv]) {
            comps.emplace_back();
            std::size_t w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack[w] = 0;
                comp[w] = ncomp;
                comps.back().push_back(w);
            } while (w != vv);
            ++ncomp;
        }
    }
    std::vector<std::size_t> closed;
    for (std::size_t c = 0; c < ncomp; ++c) {
        bool is_closed = true;
        for (std::size_t v : comps[c]) {
            for (std::size_t k = P.row_ptr[v]; k < P.row_ptr[v + 1] && is_closed; ++k)
                if (P.val[k] > 0.0 && comp[P.col[k]] != c) is_closed = false;
            if (!is_closed) break;
        }
        if (is_closed) closed.push_back(c);
    }
    if (closed.size() != 1)
        throw ModelConstructionError("chain has " + std::to_string(closed.size()) +
                                     " closed classes reachable from the start state");
    auto members = comps[closed[0]];
    std::sort(members.begin(), members.end());
    return members;
}

std::vector<double> solve_dense(const SparseMatrix& P, const std::vector<std::size_t>& members,
                                const std::vector<std::size_t>& local) {
    const std::size_t m = members.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Ones(m, m);  // (P - I + 11^T)^T
    for (std::size_t a = 0; a < m; ++a) {
        std::size_t i = members[a];
        A(a, a) -= 1.0;
        for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k) A(local[P.col[k]], a) += P.val[k];
    }
    Eigen::VectorXd x = A.partialPivLu().solve(Eigen::VectorXd::Ones(m));
    return std::vector<double>(x.data(), x.data() + m);
}

std::vector<double> solve_sparse(const SparseMatrix& P, const std::vector<std::size_t>& members,
                                 const std::vector<std::size_t>& local) {
    const std::size_t m = members.size();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(P.val.size() + 2 * m);
    // Transposed balance equations; equation 0 replaced by normalization.
    for (std::size_t a = 0; a < m; ++a) {
        std::size_t i = members[a];
        if (a != 0) t.emplace_back(a, a, -1.0);
        for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k) {
            std::size_t b = local[P.col[k]];
            if (b != 0) t.emplace_back(b, a, P.val[k]);
        }
        t.emplace_back(0, a, 1.0);
    }
    Eigen::SparseMatrix<double> A(m, m);
    A.setFromTriplets(t.begin(), t.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw ModelConstructionError("sparse LU factorization failed");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    b(0) = 1.0;
    Eigen::VectorXd x = lu.solve(b);
    return std::vector<double>(x.data(), x.data() + m);
}

std::vector<double> solve_power(const SparseMatrix& P, const std::vector<std::size_t>& members,
                                const std::vector<std::size_t>& local, const SolverOptions& opt) {
    const std::size_t m = members.size();
    std::vector<double> pi(m, 1.0 / m), next(m);
    double r = 0.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t a = 0; a < m; ++a) {
            std::size_t i = members[a];
            for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k) next[local[P.col[k]]] += pi[a] * P.val[k];
        }
        r = 0.0;
        double s = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            r = std::max(r, std::abs(next[a] - pi[a]));
            next[a] = opt.damping * next[a] + (1.0 - opt.damping) * pi[a];
            s += next[a];
        }
        for (auto& v : next) v /= s;
        pi.swap(next);
        if (r < opt.tolerance * 1e-2) return pi;
    }
    throw ConvergenceFailure("power iteration did not converge", r);
}

}  // namespace

SteadyState solve_steady_state(const SparseStochasticMatrix& Pm, const SolverOptions& opt) {
    const SparseMatrix& P = Pm.raw();
    const std::size_t n = P.rows;
    if (n == 0) throw InvalidParameter("empty chain");
    if (opt.start_state >= n) throw InvalidParameter("start state out of range");

    auto members = closed_class(P, opt.start_state);
    std::vector<std::size_t> local(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t a = 0; a < members.size(); ++a) local[members[a]] = a;

    SolverMethod method = opt.method;
    if (method == SolverMethod::Auto)
        method = members.size() <= opt.dense_threshold ? SolverMethod::Dense : SolverMethod::SparseLU;

    std::vector<double> x;
    switch (method) {
        case SolverMethod::Dense: x = solve_dense(P, members, local); break;
        case SolverMethod::SparseLU: x = solve_sparse(P, members, local); break;
        default: x = solve_power(P, members, local, opt); break;
    }

    SteadyState out;
    out.probabilities.assign(n, 0.0);
    double s = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
        double v = x[a] < 0.0 ? 0.0 : x[a];  // round-off negatives
        out.probabilities[members[a]] = v;
        s += v;
    }
    for (auto& v : out.probabilities) v /= s;
    out.residual = steady_state_residual(Pm, out.probabilities);
    if (!(out.residual <= opt.tolerance))
        throw ConvergenceFailure("steady-state residual above tolerance", out.residual);
    return out;
}

}  // namespace freshma
