#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dgmae/eval.hpp"
#include "dgmae/graph.hpp"
#include "dgmae/train.hpp"

namespace py = pybind11;
using namespace dgmae;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DataError(Errc::dimension_mismatch, "expected a 2-D float array");
    Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(m.data(), a.data(), sizeof(double) * m.size());
    return m;
}

py::array_t<double> to_numpy(const Matrix& m) {
    py::array_t<double> a({m.rows(), m.cols()});
    std::memcpy(a.mutable_data(), m.data(), sizeof(double) * m.size());
    return a;
}

RunConfig config_from_obj(const py::object& cfg) {
    if (cfg.is_none()) return RunConfig{};
    if (py::isinstance<py::str>(cfg)) return RunConfig::from_json_text(cfg.cast<std::string>());
    // dicts round-trip through the same strict JSON path as config files
    py::module_ json = py::module_::import("json");
    return RunConfig::from_json_text(json.attr("dumps")(cfg).cast<std::string>());
}

} // namespace

PYBIND11_MODULE(_dgmae, m) {
    m.doc() = "graph masked auto-encoder with discrepancy reconstruction";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const UsageError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const NumericError& e) {
            PyErr_SetString(PyExc_FloatingPointError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });

    py::class_<Graph>(m, "Graph")
        .def_static(
            "from_edges",
            [](int n, const std::vector<std::pair<int, int>>& edges) { return Graph::from_edges(n, edges); },
            py::arg("n"), py::arg("edges"))
        .def_property_readonly("num_nodes", &Graph::num_nodes)
        .def_property_readonly("num_edges", &Graph::num_edges)
        .def("degree", &Graph::degree, py::arg("i"))
        .def("neighbors",
             [](const Graph& g, int i) {
                 auto s = g.adj(i);
                 return std::vector<int>(s.begin(), s.end());
             },
             py::arg("i"))
        .def("edge_list", &Graph::edge_list);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init([](const Graph& g, const py::array_t<double>& x, const std::vector<int>& y,
                         int num_classes) {
                 Dataset d;
                 d.graph = g;
                 d.features = to_matrix(x);
                 d.labels = y;
                 d.num_classes = num_classes;
                 return d;
             }),
             py::arg("graph"), py::arg("features"), py::arg("labels") = std::vector<int>{},
             py::arg("num_classes") = 0)
        .def_readonly("graph", &Dataset::graph)
        .def_property_readonly("features", [](const Dataset& d) { return to_numpy(d.features); })
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("num_classes", &Dataset::num_classes);

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("in_dim", [](const ModelParams& p) { return p.in_dim; })
        .def_property_readonly("hidden_dim", [](const ModelParams& p) { return p.hidden_dim; })
        .def_property_readonly("heads", [](const ModelParams& p) { return p.heads; })
        .def_property_readonly("num_layers", [](const ModelParams& p) { return p.num_layers; });

    m.def(
        "generate_synthetic",
        [](int n, int num_classes, double homophily, double avg_degree, int feature_dim, double class_sep,
           uint64_t seed) {
            SyntheticSpec s;
            s.n = n;
            s.num_classes = num_classes;
            s.homophily = homophily;
            s.avg_degree = avg_degree;
            s.feature_dim = feature_dim;
            s.class_sep = class_sep;
            s.seed = seed;
            return generate_synthetic(s);
        },
        py::arg("n"), py::arg("num_classes"), py::arg("homophily") = 0.5, py::arg("avg_degree") = 4.0,
        py::arg("feature_dim") = 8, py::arg("class_sep") = 1.0, py::arg("seed") = 0);

    m.def("load_graph", &load_graph, py::arg("path"));
    m.def("save_graph", &save_graph, py::arg("path"), py::arg("dataset"));

    m.def("edge_homophily", &edge_homophily, py::arg("graph"), py::arg("labels"));
    m.def(
        "local_feature_homophily",
        [](const Graph& g, const py::array_t<double>& x) { return local_feature_homophily(g, to_matrix(x)); },
        py::arg("graph"), py::arg("features"));
    m.def(
        "sym_norm_adjacency_apply",
        [](const Graph& g, const py::array_t<double>& x) { return to_numpy(sym_norm_adjacency_apply(g, to_matrix(x))); },
        py::arg("graph"), py::arg("features"));
    m.def(
        "laplacian_discrepancy",
        [](const Graph& g, const py::array_t<double>& x) { return to_numpy(laplacian_discrepancy(g, to_matrix(x))); },
        py::arg("graph"), py::arg("features"));

    m.def(
        "fit",
        [](const Dataset& data, const py::object& config) {
            const RunConfig cfg = config_from_obj(config);
            FitResult r;
            {
                py::gil_scoped_release release;
                r = fit(cfg, data);
            }
            Matrix hist(static_cast<int>(r.history.size()), 3);
            for (size_t e = 0; e < r.history.size(); ++e) {
                hist(static_cast<int>(e), 0) = r.history[e].loss_f;
                hist(static_cast<int>(e), 1) = r.history[e].loss_d;
                hist(static_cast<int>(e), 2) = r.history[e].loss_total;
            }
            return py::make_tuple(std::move(r.params), to_numpy(hist));
        },
        py::arg("data"), py::arg("config") = py::none(),
        "Returns (params, history); history columns are loss_f, loss_d, loss_total.");

    m.def(
        "embed",
        [](ModelParams& p, const Dataset& data) {
            Matrix h;
            {
                py::gil_scoped_release release;
                h = embed(p, data.graph, data.features);
            }
            return to_numpy(h);
        },
        py::arg("params"), py::arg("data"));

    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("params"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    m.def(
        "linear_probe",
        [](const py::array_t<double>& h, const std::vector<int>& y, double train_frac, double val_frac,
           uint64_t seed, double l2, int iters) {
            const Matrix hm = to_matrix(h);
            py::gil_scoped_release release;
            const Split split = Split::random_split(hm.rows(), train_frac, val_frac, seed);
            return linear_probe(hm, y, split, l2, iters);
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("train_frac") = 0.48, py::arg("val_frac") = 0.32,
        py::arg("seed") = 0, py::arg("l2") = 1e-3, py::arg("iters") = 300);

    m.def(
        "kmeans_cluster",
        [](const py::array_t<double>& h, const std::vector<int>& y, int num_classes, int runs,
           uint64_t seed) {
            const Matrix hm = to_matrix(h);
            ClusterSummary s;
            {
                py::gil_scoped_release release;
                s = kmeans_cluster(hm, y, num_classes, runs, seed);
            }
            py::dict d;
            d["acc"] = py::make_tuple(s.mean.acc, s.stddev.acc);
            d["nmi"] = py::make_tuple(s.mean.nmi, s.stddev.nmi);
            d["ari"] = py::make_tuple(s.mean.ari, s.stddev.ari);
            d["f1"] = py::make_tuple(s.mean.f1, s.stddev.f1);
            return d;
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("num_classes"), py::arg("runs") = 10,
        py::arg("seed") = 0);

    m.def(
        "pairwise_similarity_histogram",
        [](const py::array_t<double>& h, const Graph& g, const std::vector<int>& y) {
            const SimilarityHistogram hist = pairwise_similarity_histogram(to_matrix(h), g, y);
            py::dict d;
            d["homo_count"] = hist.homo_count;
            d["hetero_count"] = hist.hetero_count;
            d["homo_mean"] = hist.homo_mean;
            d["hetero_mean"] = hist.hetero_mean;
            d["homo_edges"] = hist.homo_edges;
            d["hetero_edges"] = hist.hetero_edges;
            return d;
        },
        py::arg("embeddings"), py::arg("graph"), py::arg("labels"));
}
