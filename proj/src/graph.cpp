#include "dgmae/graph.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dgmae/random.hpp"

namespace dgmae {

Graph Graph::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    if (n < 0) throw DataError(Errc::bad_value, "negative node count");

    std::vector<std::pair<int, int>> norm;
    norm.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw DataError(Errc::index_out_of_range,
                            "edge (" + std::to_string(u) + "," + std::to_string(v) + ") on n=" + std::to_string(n));
        if (u == v)
            throw DataError(Errc::self_loop, "self-loop at node " + std::to_string(u));
        norm.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(norm.begin(), norm.end());
    for (size_t k = 1; k < norm.size(); ++k)
        if (norm[k] == norm[k - 1])
            throw DataError(Errc::duplicate_edge, "duplicate edge (" + std::to_string(norm[k].first) + "," +
                                                      std::to_string(norm[k].second) + ")");

    Graph g;
    g.n_ = n;
    g.offsets_.assign(n + 1, 0);
    for (auto [u, v] : norm) {
        ++g.offsets_[u + 1];
        ++g.offsets_[v + 1];
    }
    for (int i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];

    g.neighbors_.resize(norm.size() * 2);
    std::vector<int> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    for (auto [u, v] : norm) {
        g.neighbors_[cursor[u]++] = v;
        g.neighbors_[cursor[v]++] = u;
    }
    // rows are sorted already: norm is sorted by (min,max) so each row's
    // targets arrive in increasing order for u but not necessarily for v
    for (int i = 0; i < n; ++i)
        std::sort(g.neighbors_.begin() + g.offsets_[i], g.neighbors_.begin() + g.offsets_[i + 1]);
    return g;
}

std::vector<std::pair<int, int>> Graph::edge_list() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(num_edges());
    for (int u = 0; u < n_; ++u)
        for (int v : adj(u))
            if (u < v) out.emplace_back(u, v);
    return out;
}

// --- operators -------------------------------------------------------------

static void check_rows(const Graph& g, const Matrix& x, const char* op) {
    if (x.rows() != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, std::string(op) + ": X has " + std::to_string(x.rows()) +
                                                      " rows, graph has " + std::to_string(g.num_nodes()) + " nodes");
}

Matrix sym_norm_adjacency_apply(const Graph& g, const Matrix& x) {
    check_rows(g, x, "sym_norm_adjacency_apply");
    if (!x.all_finite()) throw DataError(Errc::non_finite, "sym_norm_adjacency_apply: non-finite feature entries");

    const int n = g.num_nodes();
    const int d = x.cols();
    Matrix out(n, d);
    for (int i = 0; i < n; ++i) {
        const int di = g.degree(i);
        if (di == 0) continue;
        double* oi = out.row(i);
        const double inv_sqrt_di = 1.0 / std::sqrt(static_cast<double>(di));
        for (int j : g.adj(i)) {
            const double w = inv_sqrt_di / std::sqrt(static_cast<double>(g.degree(j)));
            const double* xj = x.row(j);
            for (int c = 0; c < d; ++c) oi[c] += w * xj[c];
        }
    }
    return out;
}

Matrix laplacian_discrepancy(const Graph& g, const Matrix& x) {
    check_rows(g, x, "laplacian_discrepancy");
    Matrix out = sym_norm_adjacency_apply(g, x);
    for (int i = 0; i < x.rows(); ++i) {
        double* oi = out.row(i);
        const double* xi = x.row(i);
        for (int c = 0; c < x.cols(); ++c) oi[c] = xi[c] - oi[c];
    }
    return out;
}

// --- homophily ---------------------------------------------------------------

double edge_homophily(const Graph& g, const LabelVector& y) {
    if (static_cast<int>(y.size()) != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, "edge_homophily: label count does not match node count");
    if (g.num_edges() == 0)
        throw DataError(Errc::empty_edge_set, "edge_homophily: undefined on an empty edge set");

    long same = 0;
    long total = 0;
    for (int u = 0; u < g.num_nodes(); ++u)
        for (int v : g.adj(u))
            if (u < v) {
                ++total;
                if (y[u] == y[v]) ++same;
            }
    return static_cast<double>(same) / static_cast<double>(total);
}

double local_feature_homophily(const Graph& g, const Matrix& x, long* zero_norm_terms) {
    check_rows(g, x, "local_feature_homophily");
    const int n = g.num_nodes();
    if (n == 0) throw DataError(Errc::bad_value, "local_feature_homophily: empty graph");

    long zero_terms = 0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const int di = g.degree(i);
        if (di == 0) continue;
        const double ni = x.row_norm(i);
        double node_acc = 0.0;
        for (int j : g.adj(i)) {
            const double nj = x.row_norm(j);
            if (ni <= 1e-12 || nj <= 1e-12) {
                ++zero_terms;
                continue;
            }
            double dot = 0.0;
            const double* xi = x.row(i);
            const double* xj = x.row(j);
            for (int c = 0; c < x.cols(); ++c) dot += xi[c] * xj[c];
            node_acc += dot / (ni * nj);
        }
        acc += node_acc / di;
    }
    if (zero_norm_terms) *zero_norm_terms = zero_terms;
    return acc / n;
}

// --- synthetic generation ----------------------------------------------------

void SyntheticSpec::validate() const {
    if (n <= 0) throw UsageError(Errc::infeasible_spec, "n must be positive");
    if (num_classes <= 0) throw UsageError(Errc::infeasible_spec, "classes must be positive");
    if (n < num_classes) throw UsageError(Errc::infeasible_spec, "n must be >= classes");
    if (homophily < 0.0 || homophily > 1.0) throw UsageError(Errc::infeasible_spec, "homophily must be in [0,1]");
    if (avg_degree <= 0.0) throw UsageError(Errc::infeasible_spec, "avg_degree must be positive");
    if (feature_dim <= 0) throw UsageError(Errc::infeasible_spec, "feature_dim must be positive");
    if (class_sep < 0.0) throw UsageError(Errc::infeasible_spec, "class_sep must be non-negative");
    if (num_classes < 2 && homophily < 1.0)
        throw UsageError(Errc::infeasible_spec, "cross-class edges impossible with a single class");
    if (homophily > 0.0 && n == num_classes)
        throw UsageError(Errc::infeasible_spec, "same-class edges impossible with single-member classes");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(mix_seed(spec.seed, 0xD6E8FEB8u));

    const int n = spec.n;
    const int C = spec.num_classes;

    // round-robin labels: node i gets class i % C
    LabelVector labels(n);
    std::vector<std::vector<int>> members(C);
    for (int i = 0; i < n; ++i) {
        labels[i] = i % C;
        members[i % C].push_back(i);
    }

    // edges by repeated sampling; duplicates and self-loops are skipped
    const long attempts = static_cast<long>(std::ceil(n * spec.avg_degree / 2.0));
    std::vector<std::pair<int, int>> edges;
    edges.reserve(attempts);
    std::vector<std::vector<char>> seen; // adjacency bitmap, n x n only at desk scale
    const bool use_bitmap = static_cast<long>(n) * n <= 64L * 1024 * 1024;
    if (use_bitmap) seen.assign(n, std::vector<char>(n, 0));
    auto already = [&](int u, int v) {
        if (use_bitmap) return seen[u][v] != 0;
        for (auto [a, b] : edges)
            if ((a == u && b == v) || (a == v && b == u)) return true;
        return false;
    };

    for (long t = 0; t < attempts; ++t) {
        const int u = rng.uniform_int(n);
        const bool same = rng.bernoulli(spec.homophily);
        int v = -1;
        if (same) {
            const auto& pool = members[labels[u]];
            if (pool.size() < 2) continue;
            do {
                v = pool[rng.uniform_int(static_cast<int>(pool.size()))];
            } while (v == u);
        } else {
            // rejection-sample a node of a different class
            do {
                v = rng.uniform_int(n);
            } while (labels[v] == labels[u]);
        }
        if (already(u, v)) continue;
        edges.emplace_back(u, v);
        if (use_bitmap) {
            seen[u][v] = 1;
            seen[v][u] = 1;
        }
    }

    // class means pairwise separated by class_sep: scaled basis vectors when
    // the feature space is wide enough, random unit directions otherwise
    const int d = spec.feature_dim;
    Matrix means(C, d);
    if (C <= d) {
        const double a = spec.class_sep / std::sqrt(2.0);
        for (int c = 0; c < C; ++c) means(c, c) = a;
    } else {
        for (int c = 0; c < C; ++c) {
            double norm2 = 0.0;
            for (int k = 0; k < d; ++k) {
                means(c, k) = rng.normal();
                norm2 += means(c, k) * means(c, k);
            }
            const double scale = spec.class_sep / std::sqrt(2.0) / std::max(std::sqrt(norm2), 1e-12);
            for (int k = 0; k < d; ++k) means(c, k) *= scale;
        }
    }

    Matrix features(n, d);
    for (int i = 0; i < n; ++i) {
        const double* mu = means.row(labels[i]);
        double* xi = features.row(i);
        for (int k = 0; k < d; ++k) xi[k] = mu[k] + rng.normal();
    }

    Dataset ds;
    ds.graph = Graph::from_edges(n, edges);
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.num_classes = C;
    return ds;
}

// --- dataset I/O ---------------------------------------------------------------

Dataset load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(Errc::io_failure, "cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(Errc::malformed_header, "missing header line");
    int n = -1, d = -1, c = -1, consumed = 0;
    if (std::sscanf(line.c_str(), "n=%d d=%d c=%d%n", &n, &d, &c, &consumed) != 3 || n < 0 || d < 0 || c < 0 ||
        line.find_first_not_of(" \t\r", consumed) != std::string::npos)
        throw DataError(Errc::malformed_header, "expected 'n=<int> d=<int> c=<int|0>', got: " + line);

    Dataset ds;
    ds.features = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw DataError(Errc::bad_value, "missing feature line for node " + std::to_string(i));
        std::istringstream ss(line);
        for (int k = 0; k < d; ++k) {
            double x;
            if (!(ss >> x)) throw DataError(Errc::bad_value, "short feature line for node " + std::to_string(i));
            if (!std::isfinite(x)) throw DataError(Errc::non_finite, "non-finite feature for node " + std::to_string(i));
            ds.features(i, k) = x;
        }
        double extra;
        if (ss >> extra) throw DataError(Errc::bad_value, "trailing values on feature line for node " + std::to_string(i));
    }

    ds.num_classes = c;
    if (c > 0) {
        ds.labels.resize(n);
        for (int i = 0; i < n; ++i) {
            if (!std::getline(in, line)) throw DataError(Errc::bad_value, "missing label line for node " + std::to_string(i));
            int lab;
            if (std::sscanf(line.c_str(), "%d", &lab) != 1)
                throw DataError(Errc::bad_value, "bad label line for node " + std::to_string(i));
            if (lab < 0 || lab >= c)
                throw DataError(Errc::index_out_of_range, "label " + std::to_string(lab) + " outside [0," + std::to_string(c) + ")");
            ds.labels[i] = lab;
        }
    }

    if (!std::getline(in, line) || line != "edges")
        throw DataError(Errc::malformed_header, "missing 'edges' sentinel line");

    std::vector<std::pair<int, int>> edges;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int u, v;
        if (std::sscanf(line.c_str(), "%d %d", &u, &v) != 2)
            throw DataError(Errc::bad_value, "bad edge line: " + line);
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw DataError(Errc::index_out_of_range, "edge index out of range: " + line);
        if (u >= v) throw DataError(Errc::non_symmetric_edge_list, "edge lines must satisfy u < v: " + line);
        edges.emplace_back(u, v);
    }
    ds.graph = Graph::from_edges(n, edges);
    return ds;
}

void save_graph(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError(Errc::io_failure, "cannot write " + path);

    const int n = ds.graph.num_nodes();
    const int d = ds.features.cols();
    const int c = ds.has_labels() ? ds.num_classes : 0;
    if (ds.features.rows() != n)
        throw DataError(Errc::dimension_mismatch, "save_graph: feature rows do not match node count");
    if (c > 0 && static_cast<int>(ds.labels.size()) != n)
        throw DataError(Errc::dimension_mismatch, "save_graph: label count does not match node count");

    out << "n=" << n << " d=" << d << " c=" << c << "\n";
    char buf[32];
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, k));
            out << (k ? " " : "") << buf;
        }
        out << "\n";
    }
    if (c > 0)
        for (int i = 0; i < n; ++i) out << ds.labels[i] << "\n";
    out << "edges\n";
    for (auto [u, v] : ds.graph.edge_list()) out << u << " " << v << "\n";
    if (!out) throw DataError(Errc::io_failure, "write failed for " + path);
}

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::malformed_header: return "malformed header";
        case Errc::bad_value: return "bad value";
        case Errc::non_symmetric_edge_list: return "non-symmetric edge list";
        case Errc::index_out_of_range: return "index out of range";
        case Errc::self_loop: return "self-loop";
        case Errc::duplicate_edge: return "duplicate edge";
        case Errc::dimension_mismatch: return "dimension mismatch";
        case Errc::empty_edge_set: return "empty edge set";
        case Errc::infeasible_spec: return "infeasible spec";
        case Errc::empty_subset: return "empty subset";
        case Errc::not_normalized: return "not normalized";
        case Errc::bad_config: return "bad config";
        case Errc::bad_checkpoint: return "bad checkpoint";
        case Errc::non_finite: return "non-finite";
        case Errc::single_class_train_set: return "single-class train set";
        case Errc::unknown_variant: return "unknown variant";
        case Errc::empty_grid: return "empty grid";
        case Errc::io_failure: return "io failure";
    }
    return "error";
}

} // namespace dgmae
