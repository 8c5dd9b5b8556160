#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgmae/eval.hpp"
#include "dgmae/graph.hpp"
#include "dgmae/random.hpp"
#include "dgmae/train.hpp"

namespace {

using namespace dgmae;

int thread_budget() {
    if (const char* env = std::getenv("DGMAE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs f(0..count-1) on up to DGMAE_THREADS workers. Jobs must be
// independent; the first exception wins and is rethrown on the caller.
template <typename F>
void parallel_for(int count, F&& f) {
    const int workers = std::min(thread_budget(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

SyntheticSpec parse_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(Errc::io_failure, "cannot open spec file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(Errc::bad_config, std::string("spec is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError(Errc::bad_config, "spec must be a JSON object");
    static const char* known[] = {"n", "num_classes", "homophily", "avg_degree", "feature_dim", "class_sep", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw UsageError(Errc::bad_config, "unknown spec key: " + it.key());
    }
    SyntheticSpec s;
    auto integer = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer()) throw UsageError(Errc::bad_config, std::string(key) + " must be an integer");
        out = j[key].get<int>();
    };
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw UsageError(Errc::bad_config, std::string(key) + " must be a number");
        out = j[key].get<double>();
    };
    integer("n", s.n);
    integer("num_classes", s.num_classes);
    num("homophily", s.homophily);
    num("avg_degree", s.avg_degree);
    integer("feature_dim", s.feature_dim);
    num("class_sep", s.class_sep);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0)
            throw UsageError(Errc::bad_config, "seed must be a non-negative integer");
        s.seed = j["seed"].get<uint64_t>();
    }
    return s;
}

Dataset load_labeled(const std::string& path) {
    Dataset ds = load_graph(path);
    if (!ds.has_labels()) throw DataError(Errc::bad_value, "dataset has no labels: " + path);
    return ds;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        size_t pos = 0;
        double v;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            throw UsageError(Errc::bad_value, std::string(what) + ": cannot parse '" + tok + "'");
        }
        if (pos != tok.size()) throw UsageError(Errc::bad_value, std::string(what) + ": trailing junk in '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(Errc::empty_grid, std::string(what) + ": empty list");
    return out;
}

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

MeanStd summarize(const std::vector<double>& xs) {
    MeanStd r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    for (double x : xs) r.stddev += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(r.stddev / static_cast<double>(xs.size()));
    return r;
}

struct ProbeSettings {
    double train_frac = 0.48;
    double val_frac = 0.32;
    double l2 = 1e-3;
    int iters = 300;
};

double train_probe_once(const Dataset& ds, RunConfig cfg, const TrainOptions& opts, uint64_t split_seed,
                        const ProbeSettings& ps) {
    FitResult fr = fit(cfg, ds, opts);
    const FeatureMatrix h = embed(fr.params, ds.graph, ds.features);
    const Split split = Split::random_split(ds.graph.num_nodes(), ps.train_frac, ps.val_frac, split_seed);
    return linear_probe(h, ds.labels, split, ps.l2, ps.iters);
}

MeanStd train_probe_over_seeds(const Dataset& ds, const RunConfig& base, const TrainOptions& opts,
                               int seeds, const ProbeSettings& ps) {
    std::vector<double> accs(seeds);
    parallel_for(seeds, [&](int s) {
        RunConfig cfg = base;
        cfg.seed = mix_seed(base.seed, static_cast<uint64_t>(s), 0x5EEDu);
        accs[s] = train_probe_once(ds, cfg, opts, cfg.seed, ps);
    });
    return summarize(accs);
}

void add_probe_flags(CLI::App* cmd, ProbeSettings& ps) {
    cmd->add_option("--train-frac", ps.train_frac, "probe train fraction");
    cmd->add_option("--val-frac", ps.val_frac, "probe validation fraction");
    cmd->add_option("--l2", ps.l2, "probe L2 penalty");
    cmd->add_option("--iters", ps.iters, "probe gradient-descent iterations");
}

// --- subcommand bodies ----------------------------------------------------

void cmd_generate(const std::string& spec_path, const std::string& out_path) {
    SyntheticSpec spec = parse_synthetic_spec(spec_path);
    Dataset ds = generate_synthetic(spec);
    save_graph(out_path, ds);
    const double h = ds.graph.num_edges() > 0 ? edge_homophily(ds.graph, ds.labels) : 0.0;
    std::printf("nodes=%d edges=%d realized_edge_homophily=%.17g\n", ds.graph.num_nodes(),
                ds.graph.num_edges(), h);
}

void cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_path,
               std::string history_path) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
    Dataset ds = load_graph(data_path);
    FitResult fr = fit(cfg, ds);
    save_checkpoint(out_path, fr.params);
    if (history_path.empty()) history_path = out_path + ".history.csv";
    save_history_csv(history_path, fr.history);
    std::printf("epochs=%zu final_loss=%.17g checkpoint=%s history=%s\n", fr.history.size(),
                fr.history.empty() ? 0.0 : fr.history.back().loss_total, out_path.c_str(),
                history_path.c_str());
}

void cmd_embed(const std::string& ckpt_path, const std::string& data_path, const std::string& out_path) {
    ModelParams params = load_checkpoint(ckpt_path);
    Dataset ds = load_graph(data_path);
    const FeatureMatrix h = embed(params, ds.graph, ds.features);
    std::ofstream out(out_path);
    if (!out) throw DataError(Errc::io_failure, "cannot open embedding file for writing: " + out_path);
    char buf[40];
    for (int i = 0; i < h.rows(); ++i) {
        for (int j = 0; j < h.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", h(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw DataError(Errc::io_failure, "write failed: " + out_path);
    std::printf("rows=%d cols=%d out=%s\n", h.rows(), h.cols(), out_path.c_str());
}

void cmd_probe(const std::string& ckpt_path, const std::string& data_path, const ProbeSettings& ps,
               int runs, uint64_t seed, const std::string& out_path) {
    if (runs < 1) throw UsageError(Errc::bad_value, "--runs must be >= 1");
    ModelParams params = load_checkpoint(ckpt_path);
    Dataset ds = load_labeled(data_path);
    const FeatureMatrix h = embed(params, ds.graph, ds.features);
    std::vector<double> accs(runs);
    parallel_for(runs, [&](int r) {
        const Split split = Split::random_split(ds.graph.num_nodes(), ps.train_frac, ps.val_frac,
                                                mix_seed(seed, static_cast<uint64_t>(r)));
        accs[r] = linear_probe(h, ds.labels, split, ps.l2, ps.iters);
    });
    const MeanStd ms = summarize(accs);
    if (!out_path.empty()) write_metrics_csv(out_path, {{"accuracy", ms.mean, ms.stddev}});
    std::printf("accuracy_mean=%.17g accuracy_std=%.17g runs=%d\n", ms.mean, ms.stddev, runs);
}

void cmd_cluster(const std::string& ckpt_path, const std::string& data_path, int runs, uint64_t seed,
                 const std::string& out_path) {
    ModelParams params = load_checkpoint(ckpt_path);
    Dataset ds = load_labeled(data_path);
    const FeatureMatrix h = embed(params, ds.graph, ds.features);
    const ClusterSummary s = kmeans_cluster(h, ds.labels, ds.num_classes, runs, seed);
    if (!out_path.empty())
        write_metrics_csv(out_path, {{"acc", s.mean.acc, s.stddev.acc},
                                     {"nmi", s.mean.nmi, s.stddev.nmi},
                                     {"ari", s.mean.ari, s.stddev.ari},
                                     {"f1", s.mean.f1, s.stddev.f1}});
    std::printf("acc=%.6g nmi=%.6g ari=%.6g f1=%.6g runs=%d\n", s.mean.acc, s.mean.nmi, s.mean.ari,
                s.mean.f1, s.runs);
}

void cmd_similarity(const std::string& ckpt_path, const std::string& data_path, const std::string& out_path) {
    ModelParams params = load_checkpoint(ckpt_path);
    Dataset ds = load_labeled(data_path);
    const FeatureMatrix h = embed(params, ds.graph, ds.features);
    const SimilarityHistogram hist = pairwise_similarity_histogram(h, ds.graph, ds.labels);
    write_histogram_csv(out_path, hist);
    std::printf("homo_mean=%.17g hetero_mean=%.17g homo_edges=%ld hetero_edges=%ld\n", hist.homo_mean,
                hist.hetero_mean, hist.homo_edges, hist.hetero_edges);
}

struct VariantSpec {
    const char* name;
    double lambda_override; // < 0 keeps the config value
    bool select_all;
};

constexpr VariantSpec kVariants[] = {
    {"no-selection", -1.0, true},
    {"no-feature", 1.0, false},
    {"no-discrepancy", 0.0, false},
    {"full", -1.0, false},
};

void cmd_ablate(const std::string& data_path, const std::string& config_path, const std::string& variant,
                int seeds, const ProbeSettings& ps, const std::string& out_path) {
    if (seeds < 1) throw UsageError(Errc::bad_value, "--seeds must be >= 1");
    Dataset ds = load_labeled(data_path);
    RunConfig base = config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
    std::vector<VariantSpec> chosen;
    if (variant.empty() || variant == "all") {
        chosen.assign(std::begin(kVariants), std::end(kVariants));
    } else {
        for (const auto& v : kVariants)
            if (variant == v.name) chosen.push_back(v);
        if (chosen.empty()) throw UsageError(Errc::unknown_variant, "unknown variant: " + variant);
    }
    std::ostringstream table;
    table << "variant,acc_mean,acc_std\n";
    char buf[128];
    for (const auto& v : chosen) {
        RunConfig cfg = base;
        if (v.lambda_override >= 0.0) cfg.lambda = v.lambda_override;
        TrainOptions opts;
        opts.select_all_edges = v.select_all;
        const MeanStd ms = train_probe_over_seeds(ds, cfg, opts, seeds, ps);
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", v.name, ms.mean, ms.stddev);
        table << buf;
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw DataError(Errc::io_failure, "cannot open table for writing: " + out_path);
        out << table.str();
        if (!out) throw DataError(Errc::io_failure, "write failed: " + out_path);
    }
    std::fputs(table.str().c_str(), stdout);
}

void cmd_sweep_homophily(const std::string& h_list, const std::string& config_path, int seeds, int n,
                         int classes, double avg_degree, int feature_dim, double class_sep,
                         uint64_t gen_seed, const ProbeSettings& ps, const std::string& out_path) {
    if (seeds < 1) throw UsageError(Errc::bad_value, "--seeds must be >= 1");
    const std::vector<double> hs = parse_double_list(h_list, "--h-list");
    RunConfig base = config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
    std::ostringstream table;
    table << "h,acc_mean,acc_std\n";
    char buf[128];
    for (double h : hs) {
        SyntheticSpec spec;
        spec.n = n;
        spec.num_classes = classes;
        spec.homophily = h;
        spec.avg_degree = avg_degree;
        spec.feature_dim = feature_dim;
        spec.class_sep = class_sep;
        spec.seed = gen_seed;
        Dataset ds = generate_synthetic(spec);
        const MeanStd ms = train_probe_over_seeds(ds, base, {}, seeds, ps);
        std::snprintf(buf, sizeof(buf), "%.6g,%.17g,%.17g\n", h, ms.mean, ms.stddev);
        table << buf;
    }
    std::ofstream out(out_path);
    if (!out) throw DataError(Errc::io_failure, "cannot open sweep output: " + out_path);
    out << table.str();
    if (!out) throw DataError(Errc::io_failure, "write failed: " + out_path);
    std::fputs(table.str().c_str(), stdout);
}

void cmd_sweep_mask(const std::string& ratio_list, const std::string& data_path,
                    const std::string& config_path, int seeds, const ProbeSettings& ps,
                    const std::string& out_path) {
    if (seeds < 1) throw UsageError(Errc::bad_value, "--seeds must be >= 1");
    const std::vector<double> ratios = parse_double_list(ratio_list, "--ratios");
    Dataset ds = load_labeled(data_path);
    RunConfig base = config_path.empty() ? RunConfig{} : RunConfig::from_json_file(config_path);
    std::ostringstream table;
    table << "ratio,acc_mean,acc_std\n";
    char buf[128];
    for (double r : ratios) {
        RunConfig cfg = base;
        cfg.mask_ratio = r;
        cfg.validate();
        const MeanStd ms = train_probe_over_seeds(ds, cfg, {}, seeds, ps);
        std::snprintf(buf, sizeof(buf), "%.6g,%.17g,%.17g\n", r, ms.mean, ms.stddev);
        table << buf;
    }
    std::ofstream out(out_path);
    if (!out) throw DataError(Errc::io_failure, "cannot open sweep output: " + out_path);
    out << table.str();
    if (!out) throw DataError(Errc::io_failure, "write failed: " + out_path);
    std::fputs(table.str().c_str(), stdout);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"discrepancy-aware graph masked auto-encoder"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "write a synthetic homophily-controlled graph");
    std::string gen_spec, gen_out;
    generate->add_option("--spec", gen_spec, "synthetic spec JSON")->required();
    generate->add_option("--out", gen_out, "output graph file")->required();

    // train
    auto* train = app.add_subcommand("train", "fit a model and write checkpoint + history");
    std::string tr_config, tr_data, tr_out, tr_history;
    train->add_option("--config", tr_config, "run config JSON (defaults when omitted)");
    train->add_option("--data", tr_data, "graph file")->required();
    train->add_option("--out", tr_out, "checkpoint path")->required();
    train->add_option("--history", tr_history, "history CSV path (default: <out>.history.csv)");

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "write frozen embeddings as CSV");
    std::string em_ckpt, em_data, em_out;
    embed_cmd->add_option("--ckpt", em_ckpt, "checkpoint path")->required();
    embed_cmd->add_option("--data", em_data, "graph file")->required();
    embed_cmd->add_option("--out", em_out, "embedding CSV path")->required();

    // probe
    auto* probe = app.add_subcommand("probe", "linear-probe accuracy of frozen embeddings");
    std::string pr_ckpt, pr_data, pr_out;
    ProbeSettings pr_ps;
    int pr_runs = 1;
    uint64_t pr_seed = 0;
    probe->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
    probe->add_option("--data", pr_data, "graph file with labels")->required();
    probe->add_option("--runs", pr_runs, "number of random splits");
    probe->add_option("--seed", pr_seed, "split seed");
    probe->add_option("--out", pr_out, "metrics CSV path");
    add_probe_flags(probe, pr_ps);

    // cluster
    auto* cluster = app.add_subcommand("cluster", "k-means clustering metrics of frozen embeddings");
    std::string cl_ckpt, cl_data, cl_out;
    int cl_runs = 10;
    uint64_t cl_seed = 0;
    cluster->add_option("--ckpt", cl_ckpt, "checkpoint path")->required();
    cluster->add_option("--data", cl_data, "graph file with labels")->required();
    cluster->add_option("--runs", cl_runs, "number of k-means runs");
    cluster->add_option("--seed", cl_seed, "clustering seed");
    cluster->add_option("--out", cl_out, "metrics CSV path");

    // similarity
    auto* similarity = app.add_subcommand("similarity", "per-edge cosine histogram by label agreement");
    std::string si_ckpt, si_data, si_out;
    similarity->add_option("--ckpt", si_ckpt, "checkpoint path")->required();
    similarity->add_option("--data", si_data, "graph file with labels")->required();
    similarity->add_option("--out", si_out, "histogram CSV path")->required();

    // ablate
    auto* ablate = app.add_subcommand("ablate", "probe accuracy per model variant");
    std::string ab_data, ab_config, ab_variant, ab_out;
    int ab_seeds = 5;
    ProbeSettings ab_ps;
    ablate->add_option("--data", ab_data, "graph file with labels")->required();
    ablate->add_option("--config", ab_config, "base run config JSON");
    ablate->add_option("--variant", ab_variant,
                       "one of no-selection|no-feature|no-discrepancy|full (default: all)");
    ablate->add_option("--seeds", ab_seeds, "training seeds per variant");
    ablate->add_option("--out", ab_out, "table CSV path");
    add_probe_flags(ablate, ab_ps);

    // sweep-homophily
    auto* swh = app.add_subcommand("sweep-homophily", "probe accuracy across synthetic homophily levels");
    std::string swh_list, swh_config, swh_out;
    int swh_seeds = 5, swh_n = 600, swh_classes = 5, swh_fdim = 16;
    double swh_avg_degree = 8.0, swh_class_sep = 1.0;
    uint64_t swh_gen_seed = 7;
    ProbeSettings swh_ps;
    swh->add_option("--h-list", swh_list, "comma-separated homophily values")->required();
    swh->add_option("--out", swh_out, "sweep CSV path")->required();
    swh->add_option("--config", swh_config, "base run config JSON");
    swh->add_option("--seeds", swh_seeds, "training seeds per grid point");
    swh->add_option("--n", swh_n, "synthetic node count");
    swh->add_option("--classes", swh_classes, "synthetic class count");
    swh->add_option("--avg-degree", swh_avg_degree, "synthetic average degree");
    swh->add_option("--feature-dim", swh_fdim, "synthetic feature dimension");
    swh->add_option("--class-sep", swh_class_sep, "synthetic class separation");
    swh->add_option("--gen-seed", swh_gen_seed, "synthetic generation seed");
    add_probe_flags(swh, swh_ps);

    // sweep-mask
    auto* swm = app.add_subcommand("sweep-mask", "probe accuracy across mask ratios");
    std::string swm_list, swm_data, swm_config, swm_out;
    int swm_seeds = 5;
    ProbeSettings swm_ps;
    swm->add_option("--ratios", swm_list, "comma-separated mask ratios")->required();
    swm->add_option("--data", swm_data, "graph file with labels")->required();
    swm->add_option("--out", swm_out, "sweep CSV path")->required();
    swm->add_option("--config", swm_config, "base run config JSON");
    swm->add_option("--seeds", swm_seeds, "training seeds per grid point");
    add_probe_flags(swm, swm_ps);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (generate->parsed()) cmd_generate(gen_spec, gen_out);
        else if (train->parsed()) cmd_train(tr_config, tr_data, tr_out, tr_history);
        else if (embed_cmd->parsed()) cmd_embed(em_ckpt, em_data, em_out);
        else if (probe->parsed()) cmd_probe(pr_ckpt, pr_data, pr_ps, pr_runs, pr_seed, pr_out);
        else if (cluster->parsed()) cmd_cluster(cl_ckpt, cl_data, cl_runs, cl_seed, cl_out);
        else if (similarity->parsed()) cmd_similarity(si_ckpt, si_data, si_out);
        else if (ablate->parsed()) cmd_ablate(ab_data, ab_config, ab_variant, ab_seeds, ab_ps, ab_out);
        else if (swh->parsed())
            cmd_sweep_homophily(swh_list, swh_config, swh_seeds, swh_n, swh_classes, swh_avg_degree,
                                swh_fdim, swh_class_sep, swh_gen_seed, swh_ps, swh_out);
        else if (swm->parsed()) cmd_sweep_mask(swm_list, swm_data, swm_config, swm_seeds, swm_ps, swm_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
