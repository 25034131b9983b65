#include <doctest.h>

#include "freshma/cra.hpp"

#include <cmath>
#include <deque>
#include <set>

using namespace freshma;

namespace {

// Brute-force count of non-increasing sequences (m0..mR) over {-1..N}.
int count_layer_tuples(int N, int R) {
    int n = 0;
    std::vector<int> m(R + 1, -1);
    auto rec = [&](auto&& self, int pos) -> void {
        if (pos == R + 1) {
            ++n;
            return;
        }
        for (int v = -1; v <= N; ++v) {
            if (pos > 0 && v > m[pos - 1]) continue;
            m[pos] = v;
            self(self, pos + 1);
        }
    };
    rec(rec, 0);
    return n;
}

// Expected procedure length by recursion over split outcomes: n signals at
// depth d, R = deepest layer (collisions there drop the signals).
double crp_length(int n, int d, int R) {
    if (n <= 1) return 1.0;
    if (d == R) return 1.0;
    double p0 = std::ldexp(1.0, -n);
    double rhs = 1.0 + p0 * crp_length(0, d + 1, R);
    for (int k = 1; k <= n; ++k) {
        double pk = binomial(n, k) * std::ldexp(1.0, -n);
        rhs += pk * (crp_length(k, d + 1, R) + crp_length(n - k, d, R));
    }
    return rhs / (1.0 - p0);
}

double crp_length_from_matrices(const CraSpec& cra, int n) {
    std::vector<double> dist(cra.size, 0.0);
    const auto& Y = cra.start(n);
    dist[Y.col[Y.row_ptr[cra.empty_state]]] = 1.0;
    double expected = 0.0;
    for (int t = 0; t < 100000; ++t) {
        double alive = 0.0;
        for (std::size_t i = 0; i < cra.size; ++i)
            if (!cra.tree_states.decode(i).idle()) alive += dist[i];
        if (alive < 1e-17) break;
        expected += alive;
        std::vector<double> next(cra.size, 0.0);
        for (std::size_t i = 0; i < cra.size; ++i) {
            if (dist[i] == 0.0 || cra.tree_states.decode(i).idle()) continue;
            for (const SparseMatrix* X : {&cra.x0, &cra.x1})
                for (std::size_t k = X->row_ptr[i]; k < X->row_ptr[i + 1]; ++k) next[X->col[k]] += dist[i] * X->val[k];
        }
        dist.swap(next);
    }
    return expected;
}

}  // namespace

TEST_CASE("tree state count matches enumeration") {
    CHECK(tree_splitting_cra(1, 1).size == 6);
    for (int N = 1; N <= 4; ++N)
        for (int R = 1; R <= 3; ++R) {
            auto cra = tree_splitting_cra(N, R);
            CHECK(cra.size == static_cast<std::size_t>(count_layer_tuples(N, R)));
            CHECK(cra.size == static_cast<std::size_t>(binomial(N + R + 2, R + 1)));
        }
}

TEST_CASE("validator") {
    CHECK(validate_cra(tree_splitting_cra(2, 2)).ok);
    CHECK(validate_cra(tree_splitting_cra(4, 3)).ok);
    CHECK(validate_cra(aloha_cra(5)).ok);

    auto bad = aloha_cra(3);
    bad.x0.val[bad.x0.row_ptr[2]] -= 0.1;  // row 2 now sums to 0.9
    auto r = validate_cra(bad);
    CHECK_FALSE(r.ok);
    REQUIRE(r.row.has_value());
    CHECK(*r.row == 2);
}

TEST_CASE("split probabilities") {
    auto cra = tree_splitting_cra(2, 2);
    const auto& T = cra.tree_states;
    auto from = T.encode({{2, -1, -1}});
    CHECK(cra.x0.at(from, T.encode({{2, 1, -1}})) == doctest::Approx(0.5));
    CHECK(cra.x0.at(from, T.encode({{2, 0, -1}})) == doctest::Approx(0.25));
    CHECK(cra.x0.at(from, T.encode({{2, 2, -1}})) == doctest::Approx(0.25));

    // every collision-split row with x < R carries exactly unit mass in X0
    auto big = tree_splitting_cra(4, 3);
    for (std::size_t i = 0; i < big.size; ++i) {
        const auto& s = big.tree_states.decode(i);
        int x = s.active_layer();
        if (x >= 0 && x < 3 && s.layers[x] >= 2) {
            CHECK(big.x0.row_sum(i) == doctest::Approx(1.0).epsilon(1e-15));
            CHECK(big.x1.row_sum(i) == 0.0);
        }
    }
}

TEST_CASE("reachable tree states keep monotone layers") {
    const int N = 4, R = 3;
    auto cra = tree_splitting_cra(N, R);
    std::set<std::size_t> seen;
    std::deque<std::size_t> q;
    for (int n = 0; n <= N; ++n) {
        const auto& Y = cra.start(n);
        std::size_t s = Y.col[Y.row_ptr[cra.empty_state]];
        if (seen.insert(s).second) q.push_back(s);
    }
    while (!q.empty()) {
        auto i = q.front();
        q.pop_front();
        const auto& st = cra.tree_states.decode(i);
        int x = st.active_layer();
        for (int k = 1; k <= x; ++k) CHECK(st.layers[k] <= st.layers[k - 1]);
        for (const SparseMatrix* X : {&cra.x0, &cra.x1})
            for (std::size_t k = X->row_ptr[i]; k < X->row_ptr[i + 1]; ++k)
                if (seen.insert(X->col[k]).second) q.push_back(X->col[k]);
    }
    CHECK(seen.count(cra.empty_state) == 1);
}

TEST_CASE("expected procedure length matches split recursion") {
    for (int R : {1, 2, 3}) {
        auto cra = tree_splitting_cra(4, R);
        for (int n = 1; n <= 4; ++n)
            CHECK(crp_length_from_matrices(cra, n) == doctest::Approx(crp_length(n, 0, R)).epsilon(1e-12));
    }
    // two signals, effectively unbounded depth: 5 slots (L = 1 + 1/4 + 1 + L/4 + 1/4 over 3/4)
    auto cra = tree_splitting_cra(2, 30);
    CHECK(crp_length_from_matrices(cra, 2) == doctest::Approx(5.0).epsilon(1e-7));
}

TEST_CASE("aloha success probabilities") {
    CHECK(aloha_gamma(0) == 0.0);
    CHECK(aloha_gamma(1) == 1.0);
    CHECK(aloha_gamma(2) == doctest::Approx(0.5));
    CHECK(aloha_gamma(3) == doctest::Approx(4.0 / 9.0));
    CHECK(std::abs(aloha_gamma(1000) - std::exp(-1.0)) < 1e-3);

    auto cra = aloha_cra(4);
    CHECK(cra.memoryless);
    CHECK(cra.x1.row_sum(1) == 1.0);
    CHECK(cra.x1.row_sum(0) == 0.0);
    CHECK(cra.x1.row_sum(3) == doctest::Approx(4.0 / 9.0));
    CHECK(cra.x1.at(3, 2) == doctest::Approx(4.0 / 9.0));
    // start family resets the state to the queue length
    CHECK(cra.start(3).at(0, 3) == 1.0);
    CHECK(cra.start(9).at(1, 4) == 1.0);
}

TEST_CASE("start family only acts on an idle procedure") {
    auto cra = tree_splitting_cra(3, 2);
    const auto& T = cra.tree_states;
    auto busy = T.encode({{2, 1, -1}});
    CHECK(cra.start(3).at(busy, busy) == 1.0);
    CHECK(cra.start(2).at(cra.empty_state, T.encode({{2, -1, -1}})) == 1.0);
    CHECK(cra.start(0).at(cra.empty_state, cra.empty_state) == 1.0);
}
