#include "dgmae/train.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dgmae/random.hpp"

namespace dgmae {

// --- configuration ------------------------------------------------------------

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw UsageError(Errc::bad_config, msg); };
    if (mask_ratio < 0.0 || mask_ratio > 1.0) fail("mask_ratio must be in [0, 1]");
    if (lambda < 0.0 || lambda > 1.0) fail("lambda must be in [0, 1]");
    if (p_c < 0.0 || p_c > 1.0) fail("p_c must be in [0, 1]");
    if (p_tau <= 0.0 || p_tau > 1.0) fail("p_tau must be in (0, 1]");
    if (gamma1 <= 1.0) fail("gamma1 must be > 1");
    if (gamma2 <= 1.0) fail("gamma2 must be > 1");
    if (lr < 0.0 || !std::isfinite(lr)) fail("lr must be finite and >= 0");
    if (weight_decay < 0.0 || !std::isfinite(weight_decay)) fail("weight_decay must be finite and >= 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (heads < 1) fail("heads must be >= 1");
    if (num_layers < 1) fail("num_layers must be >= 1");
    if (num_layers >= 2 && hidden_dim % heads != 0) fail("hidden_dim must be divisible by heads");
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(Errc::bad_config, std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError(Errc::bad_config, "config must be a JSON object");
    RunConfig c;
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw UsageError(Errc::bad_config, std::string(key) + " must be a number");
        out = j[key].get<double>();
    };
    auto integer = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer())
            throw UsageError(Errc::bad_config, std::string(key) + " must be an integer");
        out = j[key].get<int>();
    };
    static const char* known[] = {"mask_ratio", "lambda",  "p_c",        "p_tau",      "gamma1",
                                  "gamma2",     "lr",      "weight_decay", "epochs",   "hidden_dim",
                                  "heads",      "num_layers", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw UsageError(Errc::bad_config, "unknown config key: " + it.key());
    }
    num("mask_ratio", c.mask_ratio);
    num("lambda", c.lambda);
    num("p_c", c.p_c);
    num("p_tau", c.p_tau);
    num("gamma1", c.gamma1);
    num("gamma2", c.gamma2);
    num("lr", c.lr);
    num("weight_decay", c.weight_decay);
    integer("epochs", c.epochs);
    integer("hidden_dim", c.hidden_dim);
    integer("heads", c.heads);
    integer("num_layers", c.num_layers);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0)
            throw UsageError(Errc::bad_config, "seed must be a non-negative integer");
        c.seed = j["seed"].get<uint64_t>();
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(Errc::io_failure, "cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    nlohmann::json j;
    j["mask_ratio"] = mask_ratio;
    j["lambda"] = lambda;
    j["p_c"] = p_c;
    j["p_tau"] = p_tau;
    j["gamma1"] = gamma1;
    j["gamma2"] = gamma2;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["hidden_dim"] = hidden_dim;
    j["heads"] = heads;
    j["num_layers"] = num_layers;
    j["seed"] = seed;
    return j.dump(2);
}

// --- optimizer ------------------------------------------------------------------

AdamState AdamState::init(const ModelParams& p) {
    AdamState s;
    for (const Matrix* w : p.slots()) {
        s.m.emplace_back(w->rows(), w->cols());
        s.v.emplace_back(w->rows(), w->cols());
    }
    return s;
}

namespace {

void adam_update(AdamState& opt, const std::vector<std::pair<Matrix*, ad::Var>>& slots, ad::Tape& tape,
                 double lr, double weight_decay) {
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (size_t s = 0; s < slots.size(); ++s) {
        Matrix& w = *slots[s].first;
        const Matrix& g = tape.grad(slots[s].second);
        Matrix& m = opt.m[s];
        Matrix& v = opt.v[s];
        double* wp = w.data();
        const double* gp = g.data();
        double* mp = m.data();
        double* vp = v.data();
        for (size_t i = 0; i < w.size(); ++i) {
            mp[i] = opt.beta1 * mp[i] + (1.0 - opt.beta1) * gp[i];
            vp[i] = opt.beta2 * vp[i] + (1.0 - opt.beta2) * gp[i] * gp[i];
            const double mhat = mp[i] / bc1;
            const double vhat = vp[i] / bc2;
            wp[i] -= lr * (mhat / (std::sqrt(vhat) + opt.eps) + weight_decay * wp[i]);
        }
    }
}

} // namespace

// --- training step -----------------------------------------------------------

EpochLosses train_step(ModelParams& params, AdamState& opt, const Graph& g, const FeatureMatrix& x,
                       const RunConfig& cfg, int epoch, const TrainOptions& opts) {
    if (x.rows() != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, "train_step: feature rows != node count");
    const ArcSet arcs = ArcSet::build(g);
    ad::Tape tape;
    BoundModel bm = BoundModel::bind(params, tape);

    const uint64_t mask_seed = mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0);
    const uint64_t sel_seed = mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 1);
    const MaskPlan plan = sample_mask(g.num_nodes(), cfg.mask_ratio, mask_seed);

    const bool want_f = cfg.lambda < 1.0 && plan.masked_count() > 0;
    const bool want_d = cfg.lambda > 0.0 && plan.masked_count() < g.num_nodes();

    EncodeResult enc_m = encode(bm, tape.constant(apply_mask(x, plan)), arcs);
    ad::Var zhat = decode(bm, enc_m.h, arcs);

    EpochLosses out;
    ad::Var lf{}, ld{};
    if (want_f) {
        lf = feature_loss(zhat, x, plan, cfg.gamma1);
        out.loss_f = tape.value(lf)(0, 0);
    }
    if (want_d) {
        EncodeResult enc_u = encode(bm, tape.constant(x), arcs);
        ad::Var z = project(bm, enc_u.h);
        ad::Var zd = embedding_discrepancy(z, zhat);
        EdgeSelectionMask sel;
        if (opts.select_all_edges) {
            sel.m.assign(static_cast<size_t>(g.arc_count()), 1);
            sel.seed = sel_seed;
        } else {
            sel = select_discrepancy_edges(enc_m.attn, cfg.p_c, cfg.p_tau, sel_seed);
        }
        ld = discrepancy_loss(zd, masked_discrepancy_target(x, g, sel), plan, cfg.gamma2);
        out.loss_d = tape.value(ld)(0, 0);
    }

    if (!want_f && !want_d) return out; // nothing to optimize this epoch

    ad::Var total{};
    if (want_f && want_d)
        total = total_loss(lf, ld, cfg.lambda);
    else if (want_f)
        total = ad::scale(lf, 1.0 - cfg.lambda);
    else
        total = ad::scale(ld, cfg.lambda);
    out.loss_total = tape.value(total)(0, 0);
    if (!std::isfinite(out.loss_total))
        throw NumericError(Errc::non_finite, "non-finite loss at epoch " + std::to_string(epoch));

    tape.backward(total);
    adam_update(opt, bm.slots, tape, cfg.lr, cfg.weight_decay);
    return out;
}

FitResult fit(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts) {
    cfg.validate();
    if (data.features.rows() != data.graph.num_nodes())
        throw DataError(Errc::dimension_mismatch, "fit: feature rows != node count");
    FitResult r;
    r.params = ModelParams::init(data.features.cols(), cfg.hidden_dim, cfg.heads, cfg.num_layers, cfg.seed);
    AdamState opt = AdamState::init(r.params);
    r.history.reserve(static_cast<size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch)
        r.history.push_back(train_step(r.params, opt, data.graph, data.features, cfg, epoch, opts));
    return r;
}

FeatureMatrix embed(ModelParams& params, const Graph& g, const FeatureMatrix& x) {
    if (x.rows() != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, "embed: feature rows != node count");
    const ArcSet arcs = ArcSet::build(g);
    ad::Tape tape;
    BoundModel bm = BoundModel::bind(params, tape);
    EncodeResult enc = encode(bm, tape.constant(x), arcs);
    return tape.value(enc.h);
}

// --- checkpoint I/O -------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'D', 'G', 'M', 'A', 'E', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError(Errc::bad_checkpoint, "truncated checkpoint header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void save_checkpoint(const std::string& path, const ModelParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(Errc::io_failure, "cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<uint32_t>(p.num_layers));
    put_u32(out, static_cast<uint32_t>(p.heads));
    put_u32(out, static_cast<uint32_t>(p.in_dim));
    put_u32(out, static_cast<uint32_t>(p.hidden_dim));
    const auto slots = p.slots();
    put_u32(out, static_cast<uint32_t>(slots.size()));
    for (const Matrix* w : slots) {
        put_u32(out, static_cast<uint32_t>(w->rows()));
        put_u32(out, static_cast<uint32_t>(w->cols()));
    }
    for (const Matrix* w : slots)
        out.write(reinterpret_cast<const char*>(w->data()), static_cast<std::streamsize>(w->size() * sizeof(double)));
    if (!out) throw DataError(Errc::io_failure, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(Errc::io_failure, "cannot open checkpoint: " + path);
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError(Errc::bad_checkpoint, "bad checkpoint magic (expected DGMAE1)");
    const uint32_t num_layers = get_u32(in);
    const uint32_t heads = get_u32(in);
    const uint32_t in_dim = get_u32(in);
    const uint32_t hidden_dim = get_u32(in);
    if (num_layers < 1 || heads < 1 || in_dim < 1 || hidden_dim < 1 || num_layers > 64)
        throw DataError(Errc::bad_checkpoint, "implausible checkpoint dimensions");
    ModelParams p = ModelParams::init(static_cast<int>(in_dim), static_cast<int>(hidden_dim),
                                      static_cast<int>(heads), static_cast<int>(num_layers), 0);
    auto slots = p.slots();
    const uint32_t count = get_u32(in);
    if (count != slots.size()) throw DataError(Errc::bad_checkpoint, "checkpoint tensor count mismatch");
    for (Matrix* w : slots) {
        const uint32_t r = get_u32(in);
        const uint32_t c = get_u32(in);
        if (r != static_cast<uint32_t>(w->rows()) || c != static_cast<uint32_t>(w->cols()))
            throw DataError(Errc::bad_checkpoint, "checkpoint tensor shape mismatch");
    }
    for (Matrix* w : slots) {
        in.read(reinterpret_cast<char*>(w->data()), static_cast<std::streamsize>(w->size() * sizeof(double)));
        if (!in) throw DataError(Errc::bad_checkpoint, "truncated checkpoint payload");
    }
    return p;
}

void save_history_csv(const std::string& path, const std::vector<EpochLosses>& history) {
    std::ofstream out(path);
    if (!out) throw DataError(Errc::io_failure, "cannot open history file for writing: " + path);
    out << "epoch,loss_f,loss_d,loss_total\n";
    char buf[96];
    for (size_t e = 0; e < history.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, history[e].loss_f, history[e].loss_d,
                      history[e].loss_total);
        out << buf;
    }
    if (!out) throw DataError(Errc::io_failure, "write failed: " + path);
}

} // namespace dgmae
