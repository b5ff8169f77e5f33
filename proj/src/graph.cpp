#include "smoothlab/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "smoothlab/digest.hpp"
#include "smoothlab/error.hpp"
#include "smoothlab/rng.hpp"

namespace smoothlab {

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n) {
    for (auto& [i, j] : edges) {
        if (i == j) throw ContractViolation("self-loop on node " + std::to_string(i));
        require(i < n && j < n, "edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                    ") has an endpoint >= node count " + std::to_string(n));
        if (i > j) std::swap(i, j);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
}

std::vector<std::size_t> Graph::degrees() const {
    std::vector<std::size_t> deg(n_, 0);
    for (const auto& [i, j] : edges_) {
        ++deg[i];
        ++deg[j];
    }
    return deg;
}

std::vector<std::vector<std::size_t>> Graph::adjacency_lists() const {
    std::vector<std::vector<std::size_t>> adj(n_);
    for (const auto& [i, j] : edges_) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    return adj;
}

Matrix Graph::adjacency() const {
    Matrix a(n_, n_);
    for (const auto& [i, j] : edges_) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
    }
    return a;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool next_token(std::string_view& rest, std::string_view& token) {
    rest = trim(rest);
    if (rest.empty()) return false;
    const auto end = rest.find_first_of(" \t");
    token = rest.substr(0, end);
    rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
    return true;
}

bool parse_index(std::string_view token, std::size_t& out) {
    const auto* begin = token.data();
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end;
}

} // namespace

Graph parse_edge_list(std::string_view text) {
    std::vector<Edge> edges;
    std::size_t n = 0;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;

        std::string_view rest = line;
        std::string_view a;
        std::string_view b;
        std::string_view extra;
        std::size_t i = 0;
        std::size_t j = 0;
        if (!next_token(rest, a) || !next_token(rest, b) || next_token(rest, extra) ||
            !parse_index(a, i) || !parse_index(b, j)) {
            throw ParseError("edge list line " + std::to_string(line_no) +
                             ": expected two non-negative integers, got '" + std::string(line) + "'");
        }
        if (i == j)
            throw ParseError("edge list line " + std::to_string(line_no) + ": self-loop on node " +
                             std::to_string(i));
        n = std::max({n, i + 1, j + 1});
        edges.emplace_back(i, j);
    }
    return Graph(n, std::move(edges));
}

Graph read_edge_list(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open edge list " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_edge_list(buffer.str());
}

std::string format_edge_list(const Graph& g) {
    std::string out = "# nodes " + std::to_string(g.node_count()) + "\n";
    for (const auto& [i, j] : g.edges()) out += std::to_string(i) + " " + std::to_string(j) + "\n";
    return out;
}

std::vector<std::size_t> largest_component_nodes(const Graph& g) {
    require(g.node_count() > 0, "largest_component: graph has no nodes");
    const auto adj = g.adjacency_lists();
    std::vector<int> comp(g.node_count(), -1);
    std::vector<std::size_t> best;
    std::vector<std::size_t> stack;
    int next_id = 0;
    // Components are discovered in order of their smallest node id, so a strict
    // '>' keeps the earliest on ties.
    for (std::size_t start = 0; start < g.node_count(); ++start) {
        if (comp[start] >= 0) continue;
        std::vector<std::size_t> members;
        stack.assign(1, start);
        comp[start] = next_id;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            members.push_back(u);
            for (std::size_t v : adj[u]) {
                if (comp[v] < 0) {
                    comp[v] = next_id;
                    stack.push_back(v);
                }
            }
        }
        ++next_id;
        if (members.size() > best.size()) best = std::move(members);
    }
    std::sort(best.begin(), best.end());
    return best;
}

Graph induced_subgraph(const Graph& g, const std::vector<std::size_t>& nodes) {
    constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
    std::vector<std::size_t> relabel(g.node_count(), kAbsent);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        require(nodes[k] < g.node_count(), "induced_subgraph: node id out of range");
        relabel[nodes[k]] = k;
    }
    std::vector<Edge> edges;
    for (const auto& [i, j] : g.edges())
        if (relabel[i] != kAbsent && relabel[j] != kAbsent) edges.emplace_back(relabel[i], relabel[j]);
    return Graph(nodes.size(), std::move(edges));
}

Graph largest_component(const Graph& g) { return induced_subgraph(g, largest_component_nodes(g)); }

bool is_connected(const Graph& g) {
    return g.node_count() > 0 && largest_component_nodes(g).size() == g.node_count();
}

Graph ring_with_chords(std::size_t n) {
    require(n >= 2, "ring_with_chords: need at least 2 nodes");
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        if (i != j) edges.emplace_back(i, j);
    }
    if (n >= 6)
        for (std::size_t i = 0; i < n; i += 2) edges.emplace_back(i, (i + n / 2) % n);
    std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
    return Graph(n, std::move(edges));
}

Graph path_graph(std::size_t n) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return Graph(n, std::move(edges));
}

Graph complete_graph(std::size_t n) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
    return Graph(n, std::move(edges));
}

PropagationMatrix PropagationMatrix::build(const Graph& g, double divisor_slack) {
    const std::size_t n = g.node_count();
    require(n >= 2, "build_propagation: need at least 2 nodes");
    require(divisor_slack > 0.0 && std::isfinite(divisor_slack),
            "build_propagation: divisor slack must be positive");

    const auto deg = g.degrees();
    const double c = static_cast<double>(*std::max_element(deg.begin(), deg.end())) + divisor_slack;

    PropagationMatrix pm;
    pm.divisor_ = c;
    pm.p_ = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) pm.p_(i, i) = 1.0 - static_cast<double>(deg[i]) / c;
    for (const auto& [i, j] : g.edges()) {
        pm.p_(i, j) = 1.0 / c;
        pm.p_(j, i) = 1.0 / c;
    }

    pm.eigenvalues_ = sym_eigenvalues(pm.p_);
    const auto& ev = pm.eigenvalues_;
    if (ev[1] >= 1.0 - 1e-9) throw ContractViolation("build_propagation: eigenvalue 1 not simple (graph is disconnected)");
    pm.lambda_ = std::max(std::abs(ev[1]), std::abs(ev.back()));
    if (pm.lambda_ >= 1.0 - 1e-12)
        throw ContractViolation("build_propagation: lambda = " + std::to_string(pm.lambda_) + " is not below 1");

    const double u = 1.0 / std::sqrt(static_cast<double>(n));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto row = pm.p_.row(i);
        const double pu = u * std::accumulate(row.begin(), row.end(), 0.0);
        acc += (pu - u) * (pu - u);
    }
    pm.top_check_ = std::sqrt(acc);
    return pm;
}

std::string PropagationMatrix::content_hash() const { return sha256_hex(p_.values()); }

CsbmSample csbm_generate(const CsbmParams& params, std::uint64_t seed) {
    const std::size_t n = params.n;
    require(n >= 2 && n % 2 == 0, "csbm_generate: n must be even and >= 2");
    require(params.p_in >= 0.0 && params.p_in <= 1.0 && params.p_out >= 0.0 && params.p_out <= 1.0,
            "csbm_generate: edge probabilities must lie in [0, 1]");
    require(params.p_in >= params.p_out, "csbm_generate: p_in must be at least p_out");
    require(params.dim >= 1, "csbm_generate: feature dimension must be positive");

    const std::size_t half = n / 2;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < half ? 0 : 1;

    CounterRng edge_rng(seed, streams::kCsbmEdges);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? params.p_in : params.p_out;
            if (edge_rng.uniform() < p) edges.emplace_back(i, j);
        }
    }
    const Graph full(n, std::move(edges));

    CounterRng feature_rng(seed, streams::kCsbmFeatures);
    const double u = 1.0 / std::sqrt(static_cast<double>(params.dim));
    Matrix features(n, params.dim);
    for (std::size_t i = 0; i < n; ++i) {
        const double sign = labels[i] == 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < params.dim; ++k)
            features(i, k) = sign * params.mu * u + params.noise_std * feature_rng.normal();
    }

    const auto keep = largest_component_nodes(full);
    if (keep.size() <= half)
        throw ContractViolation("csbm_generate: largest component has " + std::to_string(keep.size()) +
                                " of " + std::to_string(n) +
                                " nodes; increase p_in/p_out for a denser graph");

    CsbmSample sample;
    sample.graph = induced_subgraph(full, keep);
    sample.features = Matrix(keep.size(), params.dim);
    sample.labels.resize(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        auto src = features.row(keep[k]);
        std::copy(src.begin(), src.end(), sample.features.row(k).begin());
        sample.labels[k] = labels[keep[k]];
    }
    sample.original_ids = keep;
    return sample;
}

} // namespace smoothlab
