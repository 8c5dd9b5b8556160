#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dgmae/graph.hpp"
#include "dgmae/matrix.hpp"
#include "dgmae/tensor.hpp"

namespace dgmae {

// --- Node masking ----------------------------------------------------------

struct MaskPlan {
    std::vector<uint8_t> masked; // 1 = feature row zeroed before encoding
    uint64_t seed = 0;

    int masked_count() const;
    std::vector<int> masked_indices() const;
    std::vector<int> unmasked_indices() const;
};

// Each node is masked independently with probability mask_ratio.
MaskPlan sample_mask(int n, double mask_ratio, uint64_t seed);

// Copy of x with masked rows set to zero.
FeatureMatrix apply_mask(const FeatureMatrix& x, const MaskPlan& plan);

// --- Arc layout --------------------------------------------------------------

// Directed arcs in destination-major CSR order (arc a carries a message
// src[a] -> dst[a]), followed by one self-loop per node. Attention weights
// and edge selection cover only the plain prefix; self-loops exist so every
// node aggregates at least its own transformed features.
struct ArcSet {
    std::vector<int> src, dst;
    int n = 0;
    int plain_arcs = 0; // arcs before the appended self-loops

    static ArcSet build(const Graph& g);
    int total() const noexcept { return static_cast<int>(src.size()); }
};

// Head-averaged final-layer attention, detached from the tape, in ArcSet
// order (plain arcs then self-loops). Per head and destination, weights over
// {neighbors + self} sum to 1, so a plain-arc weight lies in (0, 1). Edge
// selection consumes only the plain prefix.
struct AttentionWeights {
    std::vector<double> w;
    int plain_arcs = 0;
};

// Per plain arc: 1 = arc contributes to the discrepancy target. Sampled
// independently per direction.
struct EdgeSelectionMask {
    std::vector<uint8_t> m;
    uint64_t seed = 0;
};

// --- Parameters ---------------------------------------------------------------

struct GatLayerParams {
    Matrix w;        // in_dim x (heads * head_dim), head h owns column block h
    Matrix attn_src; // 1 x (heads * head_dim), scores the message source
    Matrix attn_dst; // 1 x (heads * head_dim), scores the destination
    int heads = 1;
    int head_dim = 0;
    double leaky_slope = 0.2;
};

struct ProjectorParams {
    Matrix w1, b1, w2, b2; // hidden -> hidden -> in_dim, ELU between layers
};

struct ModelParams {
    std::vector<GatLayerParams> encoder_layers;
    Matrix enc_dec_bridge;     // hidden x hidden linear map applied before decoding
    GatLayerParams decoder;    // single head, hidden -> in_dim
    ProjectorParams projector;
    int in_dim = 0, hidden_dim = 0, heads = 1, num_layers = 1;

    // Glorot-uniform weights, zero biases, deterministic in seed. Stacked
    // encoder layers concatenate heads, so hidden_dim must divide by heads
    // when num_layers >= 2; the final layer averages heads instead.
    static ModelParams init(int in_dim, int hidden_dim, int heads, int num_layers, uint64_t seed);

    // All parameter matrices in fixed declaration order (checkpoint and
    // optimizer slot order).
    std::vector<Matrix*> slots();
    std::vector<const Matrix*> slots() const;
};

// --- Tape binding -----------------------------------------------------------

struct BoundGatLayer {
    ad::Var w, attn_src, attn_dst;
    int heads = 1;
    int head_dim = 0;
    double leaky_slope = 0.2;
};

// Parameters registered as differentiable leaves on one tape. slots pairs
// each leaf with the backing storage so an optimizer can read gradients and
// write updates after backward().
struct BoundModel {
    ad::Tape* tape = nullptr;
    std::vector<BoundGatLayer> encoder;
    ad::Var bridge;
    BoundGatLayer decoder;
    ad::Var p_w1, p_b1, p_w2, p_b2;
    std::vector<std::pair<Matrix*, ad::Var>> slots;

    static BoundModel bind(ModelParams& p, ad::Tape& t);
};

struct EncodeResult {
    ad::Var h;              // n x hidden
    AttentionWeights attn;  // final layer, head-averaged, detached
};

// Stacked graph-attention layers. Per arc j->i the logit is
// LeakyReLU(a_dst . W h_i + a_src . W h_j), softmaxed per destination;
// messages are attention-weighted W h_j sums. ELU between layers; heads
// concatenated except on the final layer, which averages them.
EncodeResult encode(const BoundModel& m, ad::Var x, const ArcSet& arcs);

// Bridge linear map, then one single-head attention layer hidden -> in_dim.
ad::Var decode(const BoundModel& m, ad::Var h, const ArcSet& arcs);

// Two-layer MLP with ELU, hidden -> in_dim.
ad::Var project(const BoundModel& m, ad::Var h);

// Per plain arc: selected with probability min((1 - w) * p_c, p_tau).
// High-attention arcs are rarely selected; no gradient flows through this.
EdgeSelectionMask select_discrepancy_edges(const AttentionWeights& attn, double p_c, double p_tau,
                                           uint64_t seed);

// Row i = sum over selected arcs j->i of (x_i - x_j)/sqrt(d_i d_j), with x
// L2-normalized first and degrees of the full graph regardless of how many
// arcs were deselected. Nodes with no selected arcs get a zero row.
FeatureMatrix masked_discrepancy_target(const FeatureMatrix& x, const Graph& g,
                                        const EdgeSelectionMask& m);

// z - zhat, on-tape (gradients reach both operands).
ad::Var embedding_discrepancy(ad::Var z, ad::Var zhat);

} // namespace dgmae
