#include "dgmae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "dgmae/random.hpp"

namespace dgmae {

// --- splits ---------------------------------------------------------------

Split Split::random_split(int n, double train_frac, double val_frac, uint64_t seed) {
    if (n < 3) throw UsageError(Errc::bad_value, "random_split: need at least 3 nodes");
    if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0)
        throw UsageError(Errc::bad_value, "random_split: fractions must be positive with train+val < 1");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed, 0x5B1Du));
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    int n_train = static_cast<int>(std::llround(train_frac * n));
    int n_val = static_cast<int>(std::llround(val_frac * n));
    n_train = std::max(1, std::min(n_train, n - 2));
    n_val = std::max(1, std::min(n_val, n - n_train - 1));
    Split s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
    return s;
}

// --- linear probe ------------------------------------------------------------

namespace {

int num_label_classes(const LabelVector& y) {
    int c = 0;
    for (int v : y) c = std::max(c, v + 1);
    return c;
}

// Predicted class per row of X under the affine softmax model; ties break to
// the lowest class index.
int predict_class(const Matrix& x, int row, const Matrix& w, const Matrix& b) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < w.cols(); ++c) {
        double v = b(0, c);
        for (int j = 0; j < x.cols(); ++j) v += x(row, j) * w(j, c);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

double subset_accuracy(const Matrix& x, const LabelVector& y, const std::vector<int>& idx, const Matrix& w,
                       const Matrix& b) {
    if (idx.empty()) return 0.0;
    int hit = 0;
    for (int i : idx) hit += (predict_class(x, i, w, b) == y[i]) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

} // namespace

double linear_probe(const FeatureMatrix& h, const LabelVector& y, const Split& split, double l2,
                    int iters) {
    if (static_cast<int>(y.size()) != h.rows())
        throw DataError(Errc::dimension_mismatch, "linear_probe: label count != rows");
    if (!h.all_finite()) throw NumericError(Errc::non_finite, "linear_probe: non-finite embeddings");
    auto check_idx = [&](const std::vector<int>& idx) {
        for (int i : idx)
            if (i < 0 || i >= h.rows()) throw DataError(Errc::index_out_of_range, "linear_probe: split index");
    };
    check_idx(split.train);
    check_idx(split.val);
    check_idx(split.test);
    if (split.train.empty() || split.test.empty())
        throw DataError(Errc::empty_subset, "linear_probe: empty train or test set");
    {
        std::set<int> train_classes;
        for (int i : split.train) train_classes.insert(y[i]);
        if (train_classes.size() < 2)
            throw DataError(Errc::single_class_train_set, "linear_probe: train set has one class");
    }
    const int C = num_label_classes(y);
    const int d = h.cols();

    // Scalar feature scaling: divide by the mean row norm. A scalar commutes
    // with any orthogonal transform of the rows, so probe accuracy is
    // invariant to such transforms.
    double mean_norm = 0.0;
    for (int i = 0; i < h.rows(); ++i) mean_norm += h.row_norm(i);
    mean_norm /= std::max(1, h.rows());
    const double scale = mean_norm > 1e-12 ? 1.0 / mean_norm : 1.0;
    Matrix x = h;
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < d; ++j) x(i, j) *= scale;

    // Step size from the softmax curvature bound: loss is (max_sq_norm/4 + l2)-
    // smooth, so a little under 2/L is stable.
    double max_sq = 0.0;
    for (int i : split.train) {
        const double n2 = x.row_norm(i) * x.row_norm(i);
        max_sq = std::max(max_sq, n2);
    }
    const double lr = 1.5 / (max_sq / 4.0 + l2 + 1e-12 + 0.25);

    Matrix w(d, C), b(1, C);
    Matrix best_w = w, best_b = b;
    double best_val = -1.0;
    const int m = static_cast<int>(split.train.size());
    std::vector<double> p(C);
    Matrix gw(d, C), gb(1, C);
    for (int it = 0; it < iters; ++it) {
        gw.fill(0.0);
        gb.fill(0.0);
        for (int i : split.train) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) {
                double v = b(0, c);
                for (int j = 0; j < d; ++j) v += x(i, j) * w(j, c);
                p[c] = v;
                mx = std::max(mx, v);
            }
            double z = 0.0;
            for (int c = 0; c < C; ++c) {
                p[c] = std::exp(p[c] - mx);
                z += p[c];
            }
            for (int c = 0; c < C; ++c) {
                const double resid = p[c] / z - (y[i] == c ? 1.0 : 0.0);
                gb(0, c) += resid;
                for (int j = 0; j < d; ++j) gw(j, c) += x(i, j) * resid;
            }
        }
        for (int c = 0; c < C; ++c) {
            b(0, c) -= lr * gb(0, c) / m;
            for (int j = 0; j < d; ++j) w(j, c) -= lr * (gw(j, c) / m + l2 * w(j, c));
        }
        if (!split.val.empty()) {
            const double va = subset_accuracy(x, y, split.val, w, b);
            if (va > best_val) {
                best_val = va;
                best_w = w;
                best_b = b;
            }
        }
    }
    if (split.val.empty()) {
        best_w = w;
        best_b = b;
    }
    return subset_accuracy(x, y, split.test, best_w, best_b);
}

// --- k-means --------------------------------------------------------------------

namespace {

double sq_dist_row(const Matrix& a, int i, const Matrix& b, int j) {
    double s = 0.0;
    const double* p = a.row(i);
    const double* q = b.row(j);
    for (int c = 0; c < a.cols(); ++c) {
        const double d = p[c] - q[c];
        s += d * d;
    }
    return s;
}

} // namespace

std::vector<int> kmeans_assign(const FeatureMatrix& h, int k, uint64_t seed) {
    const int n = h.rows();
    if (k < 1) throw UsageError(Errc::bad_value, "kmeans: k must be >= 1");
    if (k > n) throw DataError(Errc::bad_value, "kmeans: more clusters than points");
    if (!h.all_finite()) throw NumericError(Errc::non_finite, "kmeans: non-finite input");
    Rng rng(mix_seed(seed, 0x6B6DU));

    // k-means++ seeding
    Matrix centers(k, h.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    {
        const int first = rng.uniform_int(n);
        for (int c = 0; c < h.cols(); ++c) centers(0, c) = h(first, c);
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist_row(h, i, centers, c - 1));
            total += d2[i];
        }
        int pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        for (int j = 0; j < h.cols(); ++j) centers(c, j) = h(pick, j);
    }

    std::vector<int> assign(n, 0);
    std::vector<int> counts(k, 0);
    Matrix next(k, h.cols());
    for (int round = 0; round < 300; ++round) {
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = sq_dist_row(h, i, centers, c);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        next.fill(0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            counts[assign[i]] += 1;
            for (int j = 0; j < h.cols(); ++j) next(assign[i], j) += h(i, j);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (int j = 0; j < h.cols(); ++j) next(c, j) /= counts[c];
            } else {
                // re-seed an empty cluster at the point farthest from its center
                int far = 0;
                double fd = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist_row(h, i, centers, assign[i]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                for (int j = 0; j < h.cols(); ++j) next(c, j) = h(far, j);
                assign[far] = c;
            }
        }
        double moved = 0.0;
        for (int c = 0; c < k; ++c) moved = std::max(moved, std::sqrt(sq_dist_row(next, c, centers, c)));
        centers = next;
        if (moved < 1e-6) break;
    }
    // final assignment against the settled centers
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double d = sq_dist_row(h, i, centers, c);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
    }
    return assign;
}

// --- assignment and metrics -----------------------------------------------------

std::vector<int> hungarian_max_assignment(const std::vector<std::vector<double>>& weight) {
    const int n = static_cast<int>(weight.size());
    if (n == 0) throw UsageError(Errc::bad_value, "assignment: empty matrix");
    for (const auto& row : weight)
        if (static_cast<int>(row.size()) != n)
            throw DataError(Errc::dimension_mismatch, "assignment: matrix must be square");
    const double kInf = std::numeric_limits<double>::infinity();
    // potentials method on cost = -weight (minimization)
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> ans(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) ans[p[j] - 1] = j - 1;
    return ans;
}

namespace {

std::vector<std::vector<long>> contingency(const std::vector<int>& a, const std::vector<int>& b, int ka,
                                           int kb) {
    std::vector<std::vector<long>> t(ka, std::vector<long>(kb, 0));
    for (size_t i = 0; i < a.size(); ++i) t[a[i]][b[i]] += 1;
    return t;
}

void check_partitions(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw DataError(Errc::dimension_mismatch, "partition metrics: size mismatch or empty input");
    for (int v : a)
        if (v < 0) throw DataError(Errc::bad_value, "partition metrics: negative id");
    for (int v : b)
        if (v < 0) throw DataError(Errc::bad_value, "partition metrics: negative id");
}

std::vector<int> cluster_to_label_map(const std::vector<int>& pred, const LabelVector& y, int num_classes) {
    const int kp = num_label_classes(pred);
    const int m = std::max(std::max(kp, num_classes), 1);
    auto t = contingency(pred, y, m, m);
    std::vector<std::vector<double>> w(m, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) w[i][j] = static_cast<double>(t[i][j]);
    return hungarian_max_assignment(w);
}

} // namespace

double clustering_accuracy(const std::vector<int>& pred, const LabelVector& y, int num_classes) {
    check_partitions(pred, y);
    const std::vector<int> map = cluster_to_label_map(pred, y, num_classes);
    long hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) hit += (map[pred[i]] == y[i]) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
    check_partitions(a, b);
    const int ka = num_label_classes(a);
    const int kb = num_label_classes(b);
    const auto t = contingency(a, b, ka, kb);
    const double n = static_cast<double>(a.size());
    std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j) {
            pa[i] += t[i][j];
            pb[j] += t[i][j];
        }
    double ha = 0.0, hb = 0.0, hab = 0.0;
    for (int i = 0; i < ka; ++i)
        if (pa[i] > 0) ha -= (pa[i] / n) * std::log(pa[i] / n);
    for (int j = 0; j < kb; ++j)
        if (pb[j] > 0) hb -= (pb[j] / n) * std::log(pb[j] / n);
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j)
            if (t[i][j] > 0) hab -= (t[i][j] / n) * std::log(t[i][j] / n);
    // MI through the entropy identity H(a) + H(b) - H(a,b): on identical
    // partitions the joint entropy sums the very same terms as a marginal,
    // so the normalized score is exactly 1 rather than 1 +- rounding.
    const double mi = ha + hb - hab;
    const double denom = (ha + hb) / 2.0;
    if (denom <= 0.0) return 1.0; // both partitions trivial, hence identical
    return std::clamp(mi / denom, 0.0, 1.0);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    check_partitions(a, b);
    const int ka = num_label_classes(a);
    const int kb = num_label_classes(b);
    const auto t = contingency(a, b, ka, kb);
    auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
    const double n = static_cast<double>(a.size());
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j) {
            sum_ij += comb2(static_cast<double>(t[i][j]));
            pa[i] += t[i][j];
            pb[j] += t[i][j];
        }
    for (int i = 0; i < ka; ++i) sum_a += comb2(pa[i]);
    for (int j = 0; j < kb; ++j) sum_b += comb2(pb[j]);
    const double total = comb2(n);
    if (total <= 0.0) return 1.0;
    const double expected = sum_a * sum_b / total;
    const double max_index = (sum_a + sum_b) / 2.0;
    const double denom = max_index - expected;
    if (std::abs(denom) < 1e-12) return 1.0; // both partitions trivial
    return (sum_ij - expected) / denom;
}

double macro_f1(const std::vector<int>& pred, const LabelVector& y, int num_classes) {
    check_partitions(pred, y);
    const std::vector<int> map = cluster_to_label_map(pred, y, num_classes);
    const int C = std::max(num_classes, num_label_classes(y));
    std::vector<long> tp(C, 0), fp(C, 0), fn(C, 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        const int m = map[pred[i]];
        if (m == y[i]) {
            tp[y[i]] += 1;
        } else {
            if (m >= 0 && m < C) fp[m] += 1;
            fn[y[i]] += 1;
        }
    }
    double f1 = 0.0;
    for (int c = 0; c < C; ++c) {
        const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        f1 += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    }
    return f1 / C;
}

ClusterReport evaluate_clustering(const std::vector<int>& pred, const LabelVector& y, int num_classes) {
    ClusterReport r;
    r.acc = clustering_accuracy(pred, y, num_classes);
    r.nmi = normalized_mutual_information(pred, y);
    r.ari = adjusted_rand_index(pred, y);
    r.f1 = macro_f1(pred, y, num_classes);
    return r;
}

ClusterSummary kmeans_cluster(const FeatureMatrix& h, const LabelVector& y, int num_classes, int runs,
                              uint64_t seed0) {
    if (num_classes < 2) throw UsageError(Errc::bad_value, "kmeans_cluster: need at least 2 classes");
    if (runs < 1) throw UsageError(Errc::bad_value, "kmeans_cluster: runs must be >= 1");
    if (static_cast<int>(y.size()) != h.rows())
        throw DataError(Errc::dimension_mismatch, "kmeans_cluster: label count != rows");
    std::vector<ClusterReport> reports;
    reports.reserve(runs);
    for (int r = 0; r < runs; ++r) {
        const std::vector<int> assign = kmeans_assign(h, num_classes, mix_seed(seed0, static_cast<uint64_t>(r)));
        reports.push_back(evaluate_clustering(assign, y, num_classes));
    }
    ClusterSummary s;
    s.runs = runs;
    auto agg = [&](auto field) {
        double mean = 0.0;
        for (const auto& rep : reports) mean += rep.*field;
        mean /= runs;
        double var = 0.0;
        for (const auto& rep : reports) {
            const double d = rep.*field - mean;
            var += d * d;
        }
        return std::pair<double, double>(mean, std::sqrt(var / runs));
    };
    std::tie(s.mean.acc, s.stddev.acc) = agg(&ClusterReport::acc);
    std::tie(s.mean.nmi, s.stddev.nmi) = agg(&ClusterReport::nmi);
    std::tie(s.mean.ari, s.stddev.ari) = agg(&ClusterReport::ari);
    std::tie(s.mean.f1, s.stddev.f1) = agg(&ClusterReport::f1);
    return s;
}

// --- similarity histogram --------------------------------------------------------

SimilarityHistogram pairwise_similarity_histogram(const FeatureMatrix& h, const Graph& g,
                                                  const LabelVector& y) {
    if (h.rows() != g.num_nodes() || static_cast<int>(y.size()) != g.num_nodes())
        throw DataError(Errc::dimension_mismatch, "similarity histogram: size mismatch");
    SimilarityHistogram hist;
    hist.homo_count.assign(SimilarityHistogram::kBins, 0);
    hist.hetero_count.assign(SimilarityHistogram::kBins, 0);
    double homo_sum = 0.0, hetero_sum = 0.0;
    for (int i = 0; i < g.num_nodes(); ++i)
        for (int j : g.adj(i)) {
            if (j <= i) continue;
            double c = row_cosine(h, i, h, j);
            c = std::clamp(c, -1.0, 1.0);
            int bin = static_cast<int>((c + 1.0) / 2.0 * SimilarityHistogram::kBins);
            bin = std::clamp(bin, 0, SimilarityHistogram::kBins - 1);
            if (y[i] == y[j]) {
                hist.homo_count[bin] += 1;
                hist.homo_edges += 1;
                homo_sum += c;
            } else {
                hist.hetero_count[bin] += 1;
                hist.hetero_edges += 1;
                hetero_sum += c;
            }
        }
    hist.homo_mean = hist.homo_edges > 0 ? homo_sum / hist.homo_edges : 0.0;
    hist.hetero_mean = hist.hetero_edges > 0 ? hetero_sum / hist.hetero_edges : 0.0;
    return hist;
}

void write_histogram_csv(const std::string& path, const SimilarityHistogram& hist) {
    std::ofstream out(path);
    if (!out) throw DataError(Errc::io_failure, "cannot open histogram file for writing: " + path);
    out << "bin_lo,bin_hi,homo_count,hetero_count\n";
    char buf[96];
    for (int b = 0; b < SimilarityHistogram::kBins; ++b) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%ld,%ld\n", SimilarityHistogram::bin_lo(b),
                      SimilarityHistogram::bin_hi(b), hist.homo_count[b], hist.hetero_count[b]);
        out << buf;
    }
    if (!out) throw DataError(Errc::io_failure, "write failed: " + path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError(Errc::io_failure, "cannot open metrics file for writing: " + path);
    out << "metric,value,std\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", r.name.c_str(), r.value, r.stddev);
        out << buf;
    }
    if (!out) throw DataError(Errc::io_failure, "write failed: " + path);
}

} // namespace dgmae
