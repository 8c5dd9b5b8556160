#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "dgmae/error.hpp"
#include "dgmae/model.hpp"
#include "dgmae/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dgmae;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

// ELU applied entrywise, matching the network nonlinearity between layers.
Matrix elu_dense(const Matrix& x) {
    Matrix out = x;
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = out.data()[i];
        out.data()[i] = v > 0.0 ? v : std::expm1(v);
    }
    return out;
}

// Arc index lookup (src, dst) -> position in ArcSet order.
std::map<std::pair<int, int>, int> arc_index(const Graph& g) {
    std::map<std::pair<int, int>, int> idx;
    int a = 0;
    for (int i = 0; i < g.num_nodes(); ++i)
        for (int j : g.adj(i)) idx[{j, i}] = a++;
    return idx;
}

} // namespace

TEST_CASE("sample_mask extremes, rate and determinism") {
    const MaskPlan none = sample_mask(50, 0.0, 7);
    CHECK(none.masked_count() == 0);
    CHECK(none.unmasked_indices().size() == 50);

    const MaskPlan all = sample_mask(50, 1.0, 7);
    CHECK(all.masked_count() == 50);
    CHECK(all.unmasked_indices().empty());

    const MaskPlan p = sample_mask(10000, 0.75, 123);
    const double frac = static_cast<double>(p.masked_count()) / 10000.0;
    CHECK(frac > 0.73);
    CHECK(frac < 0.77);

    // indices partition [0, n)
    std::vector<int> merged = p.masked_indices();
    const std::vector<int> un = p.unmasked_indices();
    merged.insert(merged.end(), un.begin(), un.end());
    std::sort(merged.begin(), merged.end());
    for (int i = 0; i < 10000; ++i) REQUIRE(merged[static_cast<size_t>(i)] == i);

    CHECK(sample_mask(10000, 0.75, 123).masked == p.masked);
    CHECK(sample_mask(10000, 0.75, 124).masked != p.masked);

    CHECK_THROWS_AS(sample_mask(-1, 0.5, 0), UsageError);
    CHECK_THROWS_AS(sample_mask(10, -0.1, 0), UsageError);
    CHECK_THROWS_AS(sample_mask(10, 1.1, 0), UsageError);
}

TEST_CASE("apply_mask zeroes exactly the masked rows") {
    Rng rng(5);
    const Matrix x = oracle::random_matrix(6, 3, rng);
    MaskPlan plan;
    plan.masked = {1, 0, 0, 1, 0, 1};
    const Matrix out = apply_mask(x, plan);
    for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(out(i, c) == (plan.masked[static_cast<size_t>(i)] ? 0.0 : x(i, c)));

    plan.masked = {1, 0};
    CHECK_THROWS_AS(apply_mask(x, plan), DataError);
}

TEST_CASE("ArcSet enumerates CSR arcs destination-major with trailing self-loops") {
    const Graph g = Graph::from_edges(4, {{0, 1}, {0, 2}, {1, 2}, {2, 3}});
    const ArcSet arcs = ArcSet::build(g);
    CHECK(arcs.n == 4);
    CHECK(arcs.plain_arcs == g.arc_count());
    CHECK(arcs.total() == g.arc_count() + 4);

    int a = 0;
    for (int i = 0; i < 4; ++i)
        for (int j : g.adj(i)) {
            CHECK(arcs.dst[static_cast<size_t>(a)] == i);
            CHECK(arcs.src[static_cast<size_t>(a)] == j);
            ++a;
        }
    CHECK(a == arcs.plain_arcs);
    for (int i = 0; i < 4; ++i) {
        CHECK(arcs.src[static_cast<size_t>(arcs.plain_arcs + i)] == i);
        CHECK(arcs.dst[static_cast<size_t>(arcs.plain_arcs + i)] == i);
    }
}

TEST_CASE("encoder attention is a per-destination distribution over neighbors and self") {
    Rng rng(11);
    const Graph g = oracle::random_graph(30, 2.0, rng);
    const Matrix x = oracle::random_matrix(30, 6, rng);
    ModelParams params = ModelParams::init(6, 8, 2, 2, 99);
    const ArcSet arcs = ArcSet::build(g);

    ad::Tape t;
    BoundModel bound = BoundModel::bind(params, t);
    const EncodeResult enc = encode(bound, t.constant(x), arcs);

    REQUIRE(static_cast<int>(enc.attn.w.size()) == arcs.total());
    CHECK(enc.attn.plain_arcs == arcs.plain_arcs);
    std::vector<double> per_dst(30, 0.0);
    for (int a = 0; a < arcs.total(); ++a) {
        CHECK(enc.attn.w[static_cast<size_t>(a)] > 0.0);
        CHECK(enc.attn.w[static_cast<size_t>(a)] <= 1.0);
        per_dst[static_cast<size_t>(arcs.dst[static_cast<size_t>(a)])] += enc.attn.w[static_cast<size_t>(a)];
    }
    for (int i = 0; i < 30; ++i) CHECK(per_dst[static_cast<size_t>(i)] == doctest::Approx(1.0).epsilon(1e-9));
    // the self-loop always takes some weight, so plain arcs sit strictly below 1
    for (int a = 0; a < arcs.plain_arcs; ++a) CHECK(enc.attn.w[static_cast<size_t>(a)] < 1.0);
}

TEST_CASE("single layer encode matches the dense attention oracle") {
    Rng rng(21);
    const Graph g = oracle::random_graph(18, 1.5, rng);
    const Matrix x = oracle::random_matrix(18, 5, rng);
    ModelParams params = ModelParams::init(5, 8, 2, 1, 3);
    const ArcSet arcs = ArcSet::build(g);

    ad::Tape t;
    BoundModel bound = BoundModel::bind(params, t);
    const EncodeResult enc = encode(bound, t.constant(x), arcs);

    const auto& l0 = params.encoder_layers[0];
    const Matrix want = oracle::dense_gat_layer(g, x, l0.w, l0.attn_src, l0.attn_dst, l0.heads,
                                                /*average_heads=*/true, l0.leaky_slope);
    CHECK(max_abs_diff(t.value(enc.h), want) <= 1e-10);
}

TEST_CASE("stacked encode and decode match composed dense oracles") {
    Rng rng(22);
    const Graph g = oracle::random_graph(14, 1.2, rng);
    const Matrix x = oracle::random_matrix(14, 4, rng);
    ModelParams params = ModelParams::init(4, 6, 2, 2, 8);
    const ArcSet arcs = ArcSet::build(g);

    ad::Tape t;
    BoundModel bound = BoundModel::bind(params, t);
    const EncodeResult enc = encode(bound, t.constant(x), arcs);
    const ad::Var rec = decode(bound, enc.h, arcs);

    const auto& l0 = params.encoder_layers[0];
    const auto& l1 = params.encoder_layers[1];
    const Matrix h0 = oracle::dense_gat_layer(g, x, l0.w, l0.attn_src, l0.attn_dst, l0.heads,
                                              /*average_heads=*/false, l0.leaky_slope);
    const Matrix h1 = oracle::dense_gat_layer(g, elu_dense(h0), l1.w, l1.attn_src, l1.attn_dst,
                                              l1.heads, /*average_heads=*/true, l1.leaky_slope);
    CHECK(max_abs_diff(t.value(enc.h), h1) <= 1e-10);

    // decoder: bridge map then one single-head layer back to input width
    Matrix bridged(14, params.hidden_dim);
    for (int i = 0; i < 14; ++i)
        for (int c = 0; c < params.hidden_dim; ++c) {
            double s = 0.0;
            for (int k = 0; k < params.hidden_dim; ++k) s += h1(i, k) * params.enc_dec_bridge(k, c);
            bridged(i, c) = s;
        }
    const auto& dec = params.decoder;
    const Matrix want = oracle::dense_gat_layer(g, bridged, dec.w, dec.attn_src, dec.attn_dst, 1,
                                                /*average_heads=*/true, dec.leaky_slope);
    CHECK(t.value(rec).cols() == 4);
    CHECK(max_abs_diff(t.value(rec), want) <= 1e-10);
}

TEST_CASE("projector is a two layer MLP with ELU") {
    ModelParams params = ModelParams::init(3, 4, 1, 1, 17);
    ad::Tape t;
    BoundModel bound = BoundModel::bind(params, t);
    Rng rng(2);
    const Matrix h = oracle::random_matrix(5, 4, rng);
    const Matrix got = t.value(project(bound, t.constant(h)));
    REQUIRE(got.rows() == 5);
    REQUIRE(got.cols() == 3);

    const auto& p = params.projector;
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 3; ++c) {
            double want = p.b2(0, c);
            for (int k = 0; k < 4; ++k) {
                double a = p.b1(0, k);
                for (int d = 0; d < 4; ++d) a += h(i, d) * p.w1(d, k);
                a = a > 0.0 ? a : std::expm1(a);
                want += a * p.w2(k, c);
            }
            CHECK(got(i, c) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("model init is deterministic and validates its configuration") {
    ModelParams a = ModelParams::init(5, 8, 2, 2, 42);
    ModelParams b = ModelParams::init(5, 8, 2, 2, 42);
    ModelParams c = ModelParams::init(5, 8, 2, 2, 43);
    const auto sa = a.slots();
    const auto sb = b.slots();
    const auto sc = c.slots();
    REQUIRE(sa.size() == sb.size());
    bool all_equal = true, any_diff_seed = false;
    for (size_t i = 0; i < sa.size(); ++i) {
        if (!(*sa[i] == *sb[i])) all_equal = false;
        if (!(*sa[i] == *sc[i])) any_diff_seed = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);

    // stacked layers concatenate heads, so hidden width must split across them
    CHECK_THROWS_AS(ModelParams::init(5, 7, 2, 2, 1), UsageError);
    CHECK_THROWS_AS(ModelParams::init(0, 8, 2, 1, 1), UsageError);
    CHECK_THROWS_AS(ModelParams::init(5, 8, 0, 1, 1), UsageError);
    CHECK_THROWS_AS(ModelParams::init(5, 8, 2, 0, 1), UsageError);

    // single layer tolerates any heads count because it averages, not concats
    CHECK_NOTHROW(ModelParams::init(5, 7, 2, 1, 1));
}

TEST_CASE("bound slots alias the backing parameter storage") {
    ModelParams params = ModelParams::init(4, 6, 2, 2, 5);
    ad::Tape t;
    BoundModel bound = BoundModel::bind(params, t);
    const auto direct = params.slots();
    REQUIRE(bound.slots.size() == direct.size());
    for (size_t i = 0; i < direct.size(); ++i) {
        CHECK(bound.slots[i].first == direct[i]);
        CHECK(t.value(bound.slots[i].second) == *direct[i]);
    }
}

TEST_CASE("edge selection favors low-attention arcs and stays within bounds") {
    AttentionWeights attn;
    attn.plain_arcs = 10000;
    attn.w.assign(10000, 0.5);

    // p = min((1 - 0.5) * 0.3, 0.7) = 0.15 per arc
    const EdgeSelectionMask m = select_discrepancy_edges(attn, 0.3, 0.7, 91);
    REQUIRE(m.m.size() == 10000);
    const double rate =
        static_cast<double>(std::accumulate(m.m.begin(), m.m.end(), 0L)) / 10000.0;
    CHECK(std::abs(rate - 0.15) < 0.01);

    // full attention kills selection outright
    AttentionWeights sure;
    sure.plain_arcs = 200;
    sure.w.assign(200, 1.0);
    const EdgeSelectionMask none = select_discrepancy_edges(sure, 1.0, 1.0, 3);
    CHECK(std::accumulate(none.m.begin(), none.m.end(), 0L) == 0);

    // zero attention with p_c = 1 caps at p_tau
    AttentionWeights zero;
    zero.plain_arcs = 20000;
    zero.w.assign(20000, 0.0);
    const EdgeSelectionMask capped = select_discrepancy_edges(zero, 1.0, 0.7, 5);
    const double cap_rate =
        static_cast<double>(std::accumulate(capped.m.begin(), capped.m.end(), 0L)) / 20000.0;
    CHECK(std::abs(cap_rate - 0.7) < 0.01);

    CHECK(select_discrepancy_edges(attn, 0.3, 0.7, 91).m == m.m);
    CHECK(select_discrepancy_edges(attn, 0.3, 0.7, 92).m != m.m);

    CHECK_THROWS_AS(select_discrepancy_edges(attn, -0.1, 0.7, 0), UsageError);
    CHECK_THROWS_AS(select_discrepancy_edges(attn, 0.3, 0.0, 0), UsageError);
    CHECK_THROWS_AS(select_discrepancy_edges(attn, 0.3, 1.2, 0), UsageError);
    attn.w.pop_back();
    CHECK_THROWS_AS(select_discrepancy_edges(attn, 0.3, 0.7, 0), DataError);
}

TEST_CASE("masked_discrepancy_target matches the arc loop oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + rng.uniform_int(39);
        const Graph g = oracle::random_graph(n, 1.5, rng);
        Matrix x = oracle::random_matrix(n, 1 + rng.uniform_int(6), rng);
        if (trial % 7 == 0) // zero rows must survive normalization
            for (int c = 0; c < x.cols(); ++c) x(0, c) = 0.0;

        EdgeSelectionMask m;
        m.m.resize(static_cast<size_t>(g.arc_count()));
        if (trial == 0)
            std::fill(m.m.begin(), m.m.end(), uint8_t{0});
        else if (trial == 1)
            std::fill(m.m.begin(), m.m.end(), uint8_t{1});
        else
            for (auto& k : m.m) k = rng.bernoulli(0.4) ? 1 : 0;

        const Matrix got = masked_discrepancy_target(x, g, m);
        const Matrix want =
            oracle::arc_loop_discrepancy_target(x, g, {m.m.begin(), m.m.end()});
        CAPTURE(trial);
        CHECK(max_abs_diff(got, want) <= 1e-12);
        if (trial == 0) CHECK(got == Matrix(n, x.cols())); // nothing selected -> zero target
    }

    const Graph g = Graph::from_edges(3, {{0, 1}, {1, 2}});
    EdgeSelectionMask bad;
    bad.m = {1, 1, 1}; // graph has 4 arcs
    CHECK_THROWS_AS(masked_discrepancy_target(Matrix(3, 2), g, bad), DataError);
    CHECK_THROWS_AS(masked_discrepancy_target(Matrix(2, 2), g, bad), DataError);
}

TEST_CASE("discrepancy target commutes with node relabeling") {
    Rng rng(31);
    const int n = 16;
    const Graph g = oracle::random_graph(n, 1.5, rng);
    const Matrix x = oracle::random_matrix(n, 4, rng);
    EdgeSelectionMask m;
    m.m.resize(static_cast<size_t>(g.arc_count()));
    for (auto& k : m.m) k = rng.bernoulli(0.5) ? 1 : 0;
    const Matrix base = masked_discrepancy_target(x, g, m);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<size_t>(i)],
                                              perm[static_cast<size_t>(rng.uniform_int(i + 1))]);

    std::vector<std::pair<int, int>> edges;
    for (const auto& [u, v] : g.edge_list())
        edges.emplace_back(perm[static_cast<size_t>(u)], perm[static_cast<size_t>(v)]);
    const Graph gp = Graph::from_edges(n, edges);
    Matrix xp(n, 4);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c) xp(perm[static_cast<size_t>(i)], c) = x(i, c);

    // carry each arc's keep bit across the relabeling
    const auto idx_g = arc_index(g);
    const auto idx_gp = arc_index(gp);
    EdgeSelectionMask mp;
    mp.m.resize(m.m.size());
    for (const auto& [arc, a] : idx_g) {
        const auto [j, i] = arc;
        mp.m[static_cast<size_t>(idx_gp.at({perm[static_cast<size_t>(j)], perm[static_cast<size_t>(i)]}))] =
            m.m[static_cast<size_t>(a)];
    }

    const Matrix permuted = masked_discrepancy_target(xp, gp, mp);
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c)
            worst = std::max(worst,
                             std::abs(permuted(perm[static_cast<size_t>(i)], c) - base(i, c)));
    CHECK(worst <= 1e-12);
}

TEST_CASE("embedding_discrepancy subtracts on tape with gradients to both sides") {
    ad::Tape t;
    ad::Var z = t.leaf(Matrix(2, 2, {1, 2, 3, 4}));
    ad::Var zh = t.leaf(Matrix(2, 2, {0.5, 1.0, 1.5, 2.0}));
    ad::Var d = embedding_discrepancy(z, zh);
    CHECK(t.value(d) == Matrix(2, 2, {0.5, 1.0, 1.5, 2.0}));
    t.backward(ad::sum(d));
    CHECK(t.grad(z) == Matrix(2, 2, {1, 1, 1, 1}));
    CHECK(t.grad(zh) == Matrix(2, 2, {-1, -1, -1, -1}));
}
