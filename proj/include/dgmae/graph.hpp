#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgmae/matrix.hpp"

namespace dgmae {

// Immutable sparse undirected graph in CSR form. Both directions of every
// edge are materialized; no self-loops, no duplicates.
class Graph {
public:
    Graph() = default;

    // Builds from an undirected edge list. Edges may be given in either
    // orientation; duplicates and self-loops are rejected.
    static Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges);

    int num_nodes() const noexcept { return n_; }
    int num_edges() const noexcept { return static_cast<int>(neighbors_.size() / 2); }
    int arc_count() const noexcept { return static_cast<int>(neighbors_.size()); }

    int degree(int i) const { return offsets_[i + 1] - offsets_[i]; }

    std::span<const int> adj(int i) const {
        return std::span<const int>(neighbors_.data() + offsets_[i], neighbors_.data() + offsets_[i + 1]);
    }

    const std::vector<int>& offsets() const noexcept { return offsets_; }
    const std::vector<int>& neighbors() const noexcept { return neighbors_; }

    // Unique undirected edges with u < v, in CSR order.
    std::vector<std::pair<int, int>> edge_list() const;

private:
    int n_ = 0;
    std::vector<int> offsets_;   // n + 1
    std::vector<int> neighbors_; // 2 * |E|, sorted within each row
};

using LabelVector = std::vector<int>;

// --- Degree-normalized operators ---------------------------------------

// (A~ X)_i = sum_{j in N(i)} X_j / sqrt(d_i d_j); zero row when d_i = 0.
Matrix sym_norm_adjacency_apply(const Graph& g, const Matrix& x);

// X - A~ X, the symmetric-normalized Laplacian applied to X. Isolated
// nodes keep their row unchanged (empty neighbor sum).
Matrix laplacian_discrepancy(const Graph& g, const Matrix& x);

// --- Homophily metrics ---------------------------------------------------

// Fraction of undirected edges whose endpoints share a label.
double edge_homophily(const Graph& g, const LabelVector& y);

// Mean over nodes of the mean neighbor cosine similarity; degree-0 nodes
// contribute 0. Cosine terms where either row has zero norm count as 0 and
// bump *zero_norm_terms when provided.
double local_feature_homophily(const Graph& g, const Matrix& x, long* zero_norm_terms = nullptr);

// --- Synthetic generation ------------------------------------------------

struct SyntheticSpec {
    int n = 0;
    int num_classes = 0;
    double homophily = 0.5; // target edge homophily in [0, 1]
    double avg_degree = 4.0;
    int feature_dim = 8;
    double class_sep = 1.0; // pairwise distance between class means
    uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    Graph graph;
    Matrix features;
    LabelVector labels;  // empty when unlabeled
    int num_classes = 0; // 0 when unlabeled

    bool has_labels() const noexcept { return !labels.empty(); }
};

// Round-robin labels; edges by repeated endpoint sampling with same-class
// probability = spec.homophily; Gaussian mixture features.
Dataset generate_synthetic(const SyntheticSpec& spec);

// --- Dataset I/O ----------------------------------------------------------
//
// Text format (UTF-8):
//   n=<int> d=<int> c=<int|0>
//   n feature lines, d space-separated values
//   n label lines (only when c > 0)
//   edges
//   one "u v" line per undirected edge, u < v
// Floats are written with 17 significant digits so a round trip is bit-exact.

Dataset load_graph(const std::string& path);
void save_graph(const std::string& path, const Dataset& ds);

} // namespace dgmae
