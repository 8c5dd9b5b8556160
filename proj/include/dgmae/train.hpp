#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgmae/graph.hpp"
#include "dgmae/losses.hpp"
#include "dgmae/model.hpp"

namespace dgmae {

struct RunConfig {
    double mask_ratio = 0.5;
    double lambda = 0.1;
    double p_c = 0.3;
    double p_tau = 0.7;
    double gamma1 = 3.0;
    double gamma2 = 6.0;
    double lr = 1e-4;
    double weight_decay = 2e-4;
    int epochs = 1000;
    int hidden_dim = 64;
    int heads = 4;
    int num_layers = 2;
    uint64_t seed = 0;

    void validate() const;

    // Flat JSON with exactly these keys; unknown keys are rejected, missing
    // keys keep their defaults.
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_json_file(const std::string& path);
    std::string to_json_text() const;
};

struct EpochLosses {
    double loss_f = 0.0;
    double loss_d = 0.0;
    double loss_total = 0.0;
};

// Adaptive-moment optimizer state with decoupled weight decay, one moment
// pair per parameter slot.
struct AdamState {
    std::vector<Matrix> m, v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const ModelParams& p);
};

struct TrainOptions {
    // Ablation hook: bypass attention-guided selection and mark every arc
    // selected, making the discrepancy target the full Laplacian difference.
    bool select_all_edges = false;
};

// One full optimization step: sample the node mask, run the masked
// encode/decode branch, and (when lambda > 0) the unmasked encode/project
// branch with attention-guided edge selection; combine the two losses,
// backpropagate, and apply the optimizer update in place. Branches whose
// loss weight is zero are skipped entirely and report a 0 loss.
EpochLosses train_step(ModelParams& params, AdamState& opt, const Graph& g, const FeatureMatrix& x,
                       const RunConfig& cfg, int epoch, const TrainOptions& opts = {});

struct FitResult {
    ModelParams params;
    std::vector<EpochLosses> history; // one entry per epoch
};

FitResult fit(const RunConfig& cfg, const Dataset& data, const TrainOptions& opts = {});

// Frozen embeddings: the unmasked encoder forward pass, off-tape.
FeatureMatrix embed(ModelParams& params, const Graph& g, const FeatureMatrix& x);

// Versioned binary checkpoint: magic "DGMAE1", little-endian u32 header
// (num_layers, heads, in_dim, hidden_dim, tensor count, per-tensor
// rows/cols), then raw little-endian f64 blocks in slot order. Round trips
// are bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& p);
ModelParams load_checkpoint(const std::string& path);

// CSV: header epoch,loss_f,loss_d,loss_total then one row per epoch.
void save_history_csv(const std::string& path, const std::vector<EpochLosses>& history);

} // namespace dgmae
