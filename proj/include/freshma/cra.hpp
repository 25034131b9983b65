#pragma once

#include "freshma/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace freshma {

// Layers (m0..mR) of a tree-splitting procedure; -1 marks an unused layer.
struct TreeSplitState {
    std::vector<int> layers;

    // Largest index with layers[x] != -1, or -1 when no procedure is running.
    int active_layer() const;
    bool idle() const { return layers.empty() || layers[0] == -1; }
    auto operator<=>(const TreeSplitState&) const = default;
};

enum class CraKind { TreeSplitting, Aloha, Custom };

// Collision-resolution algorithm as a matrix family over procedure states.
struct CraSpec {
    CraKind kind = CraKind::Custom;
    std::size_t size = 0;
    SparseMatrix x0;              // no success in the slot
    SparseMatrix x1;              // exactly one success in the slot
    std::vector<SparseMatrix> y;  // y[n]: start a procedure with n queued signals
    std::size_t empty_state = 0;  // state with no procedure running
    bool memoryless = false;      // state is the queue length itself (Aloha)

    // Tree splitting only.
    int max_packets = 0;
    int max_depth = 0;
    TableSpace<TreeSplitState> tree_states;

    std::size_t n_max() const { return y.empty() ? 0 : y.size() - 1; }
    const SparseMatrix& start(int n) const;
};

CraSpec tree_splitting_cra(int N, int R);
std::vector<TreeSplitState> enumerate_tree_states(int N, int R);

double aloha_gamma(int queue_len);
CraSpec aloha_cra(int n_max);

struct CraValidation {
    bool ok = true;
    std::optional<std::size_t> row;
    std::string message;
};
CraValidation validate_cra(const CraSpec& spec, double tol = 1e-12);

}  // namespace freshma
