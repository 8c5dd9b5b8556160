#include "dgmae/model.hpp"

#include <cmath>
#include <string>

#include "dgmae/random.hpp"

namespace dgmae {

// --- masking ---------------------------------------------------------------

int MaskPlan::masked_count() const {
    int c = 0;
    for (uint8_t m : masked) c += m;
    return c;
}

std::vector<int> MaskPlan::masked_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < masked.size(); ++i)
        if (masked[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

std::vector<int> MaskPlan::unmasked_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < masked.size(); ++i)
        if (!masked[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

MaskPlan sample_mask(int n, double mask_ratio, uint64_t seed) {
    if (n < 0) throw UsageError(Errc::bad_value, "sample_mask: negative n");
    if (mask_ratio < 0.0 || mask_ratio > 1.0)
        throw UsageError(Errc::bad_value, "sample_mask: mask_ratio must be in [0, 1]");
    MaskPlan plan;
    plan.seed = seed;
    plan.masked.resize(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) plan.masked[i] = rng.bernoulli(mask_ratio) ? 1 : 0;
    return plan;
}

FeatureMatrix apply_mask(const FeatureMatrix& x, const MaskPlan& plan) {
    if (static_cast<int>(plan.masked.size()) != x.rows())
        throw DataError(Errc::dimension_mismatch, "apply_mask: plan length != rows");
    FeatureMatrix out = x;
    for (int i = 0; i < x.rows(); ++i)
        if (plan.masked[i])
            for (int j = 0; j < x.cols(); ++j) out(i, j) = 0.0;
    return out;
}

// --- arcs -------------------------------------------------------------------

ArcSet ArcSet::build(const Graph& g) {
    ArcSet a;
    a.n = g.num_nodes();
    a.plain_arcs = g.arc_count();
    a.src.reserve(a.plain_arcs + a.n);
    a.dst.reserve(a.plain_arcs + a.n);
    for (int i = 0; i < a.n; ++i)
        for (int j : g.adj(i)) {
            a.src.push_back(j);
            a.dst.push_back(i);
        }
    for (int i = 0; i < a.n; ++i) {
        a.src.push_back(i);
        a.dst.push_back(i);
    }
    return a;
}

// --- parameters --------------------------------------------------------------

namespace {

Matrix glorot(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) w(i, j) = (2.0 * rng.uniform() - 1.0) * lim;
    return w;
}

GatLayerParams init_gat_layer(int in_dim, int heads, int head_dim, Rng& rng) {
    GatLayerParams l;
    l.heads = heads;
    l.head_dim = head_dim;
    l.w = glorot(in_dim, heads * head_dim, in_dim, head_dim, rng);
    l.attn_src = glorot(1, heads * head_dim, head_dim, 1, rng);
    l.attn_dst = glorot(1, heads * head_dim, head_dim, 1, rng);
    return l;
}

} // namespace

ModelParams ModelParams::init(int in_dim, int hidden_dim, int heads, int num_layers, uint64_t seed) {
    if (in_dim < 1 || hidden_dim < 1 || heads < 1 || num_layers < 1)
        throw UsageError(Errc::bad_config, "model dimensions must be positive");
    if (num_layers >= 2 && hidden_dim % heads != 0)
        throw UsageError(Errc::bad_config, "hidden_dim must be divisible by heads when stacking layers");
    ModelParams p;
    p.in_dim = in_dim;
    p.hidden_dim = hidden_dim;
    p.heads = heads;
    p.num_layers = num_layers;
    Rng rng(mix_seed(seed, 0x1B17u));
    for (int l = 0; l < num_layers; ++l) {
        const int in_l = (l == 0) ? in_dim : hidden_dim;
        const bool final_layer = (l == num_layers - 1);
        const int hd = final_layer ? hidden_dim : hidden_dim / heads;
        p.encoder_layers.push_back(init_gat_layer(in_l, heads, hd, rng));
    }
    p.enc_dec_bridge = glorot(hidden_dim, hidden_dim, hidden_dim, hidden_dim, rng);
    p.decoder = init_gat_layer(hidden_dim, 1, in_dim, rng);
    p.projector.w1 = glorot(hidden_dim, hidden_dim, hidden_dim, hidden_dim, rng);
    p.projector.b1 = Matrix(1, hidden_dim);
    p.projector.w2 = glorot(hidden_dim, in_dim, hidden_dim, in_dim, rng);
    p.projector.b2 = Matrix(1, in_dim);
    return p;
}

std::vector<Matrix*> ModelParams::slots() {
    std::vector<Matrix*> s;
    for (auto& l : encoder_layers) {
        s.push_back(&l.w);
        s.push_back(&l.attn_src);
        s.push_back(&l.attn_dst);
    }
    s.push_back(&enc_dec_bridge);
    s.push_back(&decoder.w);
    s.push_back(&decoder.attn_src);
    s.push_back(&decoder.attn_dst);
    s.push_back(&projector.w1);
    s.push_back(&projector.b1);
    s.push_back(&projector.w2);
    s.push_back(&projector.b2);
    return s;
}

std::vector<const Matrix*> ModelParams::slots() const {
    std::vector<const Matrix*> s;
    for (auto* m : const_cast<ModelParams*>(this)->slots()) s.push_back(m);
    return s;
}

BoundModel BoundModel::bind(ModelParams& p, ad::Tape& t) {
    BoundModel b;
    b.tape = &t;
    auto bind_layer = [&](GatLayerParams& g) {
        BoundGatLayer bl;
        bl.w = t.leaf(g.w);
        b.slots.emplace_back(&g.w, bl.w);
        bl.attn_src = t.leaf(g.attn_src);
        b.slots.emplace_back(&g.attn_src, bl.attn_src);
        bl.attn_dst = t.leaf(g.attn_dst);
        b.slots.emplace_back(&g.attn_dst, bl.attn_dst);
        bl.heads = g.heads;
        bl.head_dim = g.head_dim;
        bl.leaky_slope = g.leaky_slope;
        return bl;
    };
    for (auto& gl : p.encoder_layers) b.encoder.push_back(bind_layer(gl));
    b.bridge = t.leaf(p.enc_dec_bridge);
    b.slots.emplace_back(&p.enc_dec_bridge, b.bridge);
    b.decoder = bind_layer(p.decoder);
    b.p_w1 = t.leaf(p.projector.w1);
    b.slots.emplace_back(&p.projector.w1, b.p_w1);
    b.p_b1 = t.leaf(p.projector.b1);
    b.slots.emplace_back(&p.projector.b1, b.p_b1);
    b.p_w2 = t.leaf(p.projector.w2);
    b.slots.emplace_back(&p.projector.w2, b.p_w2);
    b.p_b2 = t.leaf(p.projector.b2);
    b.slots.emplace_back(&p.projector.b2, b.p_b2);
    return b;
}

// --- forward passes ------------------------------------------------------------

namespace {

struct GatOut {
    ad::Var h;
    std::vector<ad::Var> head_weights; // per-arc attention, one Var per head
};

GatOut gat_forward(const BoundGatLayer& layer, ad::Var x, const ArcSet& arcs, bool average_heads) {
    ad::Var hw = ad::matmul(x, layer.w);
    std::vector<ad::Var> outs, weights;
    outs.reserve(layer.heads);
    weights.reserve(layer.heads);
    for (int h = 0; h < layer.heads; ++h) {
        const int c0 = h * layer.head_dim;
        const int c1 = c0 + layer.head_dim;
        ad::Var hw_h = ad::slice_cols(hw, c0, c1);
        ad::Var s_src = ad::row_sum(ad::mul_row_broadcast(hw_h, ad::slice_cols(layer.attn_src, c0, c1)));
        ad::Var s_dst = ad::row_sum(ad::mul_row_broadcast(hw_h, ad::slice_cols(layer.attn_dst, c0, c1)));
        ad::Var logits = ad::leaky_relu(
            ad::add(ad::gather_rows(s_dst, arcs.dst), ad::gather_rows(s_src, arcs.src)), layer.leaky_slope);
        ad::Var w = ad::segment_softmax(logits, arcs.dst, arcs.n);
        ad::Var msg = ad::scale_rows(ad::gather_rows(hw_h, arcs.src), w);
        outs.push_back(ad::scatter_add_rows(msg, arcs.dst, arcs.n));
        weights.push_back(w);
    }
    ad::Var h;
    if (average_heads) {
        h = outs[0];
        for (size_t k = 1; k < outs.size(); ++k) h = ad::add(h, outs[k]);
        if (outs.size() > 1) h = ad::scale(h, 1.0 / static_cast<double>(outs.size()));
    } else {
        h = outs.size() == 1 ? outs[0] : ad::concat_cols(outs);
    }
    return {h, std::move(weights)};
}

} // namespace

EncodeResult encode(const BoundModel& m, ad::Var x, const ArcSet& arcs) {
    ad::Var h = x;
    std::vector<ad::Var> final_weights;
    for (size_t l = 0; l < m.encoder.size(); ++l) {
        const bool last = (l + 1 == m.encoder.size());
        GatOut out = gat_forward(m.encoder[l], h, arcs, /*average_heads=*/last);
        h = last ? out.h : ad::elu(out.h);
        if (last) final_weights = std::move(out.head_weights);
    }
    AttentionWeights attn;
    attn.plain_arcs = arcs.plain_arcs;
    attn.w.assign(arcs.total(), 0.0);
    for (ad::Var wv : final_weights) {
        const Matrix& w = m.tape->value(wv);
        for (int a = 0; a < arcs.total(); ++a) attn.w[a] += w(a, 0);
    }
    if (!final_weights.empty())
        for (double& v : attn.w) v /= static_cast<double>(final_weights.size());
    return {h, std::move(attn)};
}

ad::Var decode(const BoundModel& m, ad::Var h, const ArcSet& arcs) {
    ad::Var bridged = ad::matmul(h, m.bridge);
    return gat_forward(m.decoder, bridged, arcs, /*average_heads=*/true).h;
}

ad::Var project(const BoundModel& m, ad::Var h) {
    ad::Var a = ad::elu(ad::add_row_broadcast(ad::matmul(h, m.p_w1), m.p_b1));
    return ad::add_row_broadcast(ad::matmul(a, m.p_w2), m.p_b2);
}

// --- discrepancy selection and target ----------------------------------------

EdgeSelectionMask select_discrepancy_edges(const AttentionWeights& attn, double p_c, double p_tau,
                                           uint64_t seed) {
    if (p_c < 0.0 || p_c > 1.0) throw UsageError(Errc::bad_value, "select_discrepancy_edges: p_c out of [0, 1]");
    if (p_tau <= 0.0 || p_tau > 1.0)
        throw UsageError(Errc::bad_value, "select_discrepancy_edges: p_tau out of (0, 1]");
    if (attn.plain_arcs < 0 || attn.plain_arcs > static_cast<int>(attn.w.size()))
        throw DataError(Errc::dimension_mismatch, "select_discrepancy_edges: bad plain arc count");
    EdgeSelectionMask sel;
    sel.seed = seed;
    sel.m.resize(attn.plain_arcs);
    Rng rng(seed);
    for (int a = 0; a < attn.plain_arcs; ++a) {
        const double p = std::min((1.0 - attn.w[a]) * p_c, p_tau);
        sel.m[a] = rng.bernoulli(p) ? 1 : 0;
    }
    return sel;
}

FeatureMatrix masked_discrepancy_target(const FeatureMatrix& x, const Graph& g,
                                        const EdgeSelectionMask& m) {
    if (x.rows() != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, "masked_discrepancy_target: feature rows != nodes");
    if (static_cast<int>(m.m.size()) != g.arc_count())
        throw DataError(Errc::dimension_mismatch, "masked_discrepancy_target: mask does not cover all arcs");
    const Matrix xn = l2_normalize_rows(x);
    Matrix out(x.rows(), x.cols());
    int arc = 0;
    for (int i = 0; i < g.num_nodes(); ++i) {
        const double di = static_cast<double>(g.degree(i));
        for (int j : g.adj(i)) {
            if (m.m[arc]) {
                const double s = 1.0 / std::sqrt(di * static_cast<double>(g.degree(j)));
                for (int c = 0; c < x.cols(); ++c) out(i, c) += s * (xn(i, c) - xn(j, c));
            }
            ++arc;
        }
    }
    return out;
}

ad::Var embedding_discrepancy(ad::Var z, ad::Var zhat) { return ad::sub(z, zhat); }

} // namespace dgmae
