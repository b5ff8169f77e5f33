#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smoothlab/numkit.hpp"

namespace smoothlab {

using Edge = std::pair<std::size_t, std::size_t>;

/// Simple undirected graph. Edges are stored once, as (i, j) with i < j, sorted.
class Graph {
public:
    Graph() = default;
    /// Normalizes orientation and drops duplicates. Throws on self-loops or out-of-range ids.
    Graph(std::size_t n, std::vector<Edge> edges);

    std::size_t node_count() const { return n_; }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }

    std::vector<std::size_t> degrees() const;
    std::vector<std::vector<std::size_t>> adjacency_lists() const;
    Matrix adjacency() const;

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
};

/// Parses "i j" lines; '#' lines and blank lines are skipped. n = 1 + max id.
Graph parse_edge_list(std::string_view text);
Graph read_edge_list(const std::filesystem::path& path);
std::string format_edge_list(const Graph& g);

/// Node ids (ascending) of the largest connected component; ties go to the
/// component containing the smallest node id.
std::vector<std::size_t> largest_component_nodes(const Graph& g);
/// Subgraph induced by `nodes`, relabeled 0..nodes.size()-1 in the given order.
Graph induced_subgraph(const Graph& g, const std::vector<std::size_t>& nodes);
Graph largest_component(const Graph& g);
bool is_connected(const Graph& g);

/// Cycle 0-1-...-(n-1)-0 plus chords i -- i + n/2 for even i.
Graph ring_with_chords(std::size_t n);
Graph path_graph(std::size_t n);
Graph complete_graph(std::size_t n);

/// Symmetric bi-stochastic P = Id - (D - A)/c with c = max_degree + slack, plus
/// its spectrum. Immutable once built.
class PropagationMatrix {
public:
    static PropagationMatrix build(const Graph& g, double divisor_slack = 1.0);

    const Matrix& matrix() const { return p_; }
    std::size_t size() const { return p_.rows(); }
    /// Second-largest absolute eigenvalue.
    double lambda() const { return lambda_; }
    double spectral_gap() const { return 1.0 - lambda_; }
    /// ‖P u - u‖ for u = 1_n/√n.
    double top_eigenvector_check() const { return top_check_; }
    /// Descending.
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }
    double divisor() const { return divisor_; }

    /// Hex digest of the matrix entries, used to tie checkpoints to a graph.
    std::string content_hash() const;

private:
    PropagationMatrix() = default;

    Matrix p_;
    double lambda_ = 0.0;
    double top_check_ = 0.0;
    double divisor_ = 0.0;
    std::vector<double> eigenvalues_;
};

inline PropagationMatrix build_propagation(const Graph& g, double divisor_slack = 1.0) {
    return PropagationMatrix::build(g, divisor_slack);
}

/// Two-community contextual stochastic block model.
struct CsbmParams {
    std::size_t n = 300;
    double p_in = 0.12;
    double p_out = 0.024;
    std::size_t dim = 8;
    double mu = 1.0;
    double noise_std = 1.0;
};

struct CsbmSample {
    Graph graph;
    Matrix features;
    std::vector<int> labels;
    /// Original generator ids of the kept nodes (largest component).
    std::vector<std::size_t> original_ids;
};

/// Nodes [0, n/2) are class 0 with feature mean -mu·u, the rest class 1 with
/// +mu·u, u = 1_d/√d. Output is restricted to the largest component.
CsbmSample csbm_generate(const CsbmParams& params, std::uint64_t seed);

} // namespace smoothlab
