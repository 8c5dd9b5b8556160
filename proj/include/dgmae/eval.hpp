#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgmae/graph.hpp"
#include "dgmae/matrix.hpp"

namespace dgmae {

struct Split {
    std::vector<int> train, val, test;

    // Shuffles [0, n) and cuts train/val/test by the given fractions
    // (test takes the remainder). Fractions must be positive and sum < 1
    // strictly only for train+val; every part must end up nonempty.
    static Split random_split(int n, double train_frac, double val_frac, uint64_t seed);
};

// Multinomial logistic regression on frozen embeddings: full-batch gradient
// descent with L2 penalty on the weights, trained on split.train; the
// weights snapshot with the best validation accuracy is evaluated on
// split.test and that accuracy returned. Embeddings are pre-scaled by the
// inverse of their mean row norm (a scalar, so orthogonal transforms of the
// embedding leave the result unchanged).
double linear_probe(const FeatureMatrix& h, const LabelVector& y, const Split& split, double l2 = 1e-3,
                    int iters = 300);

struct ClusterReport {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    double f1 = 0.0;
};

struct ClusterSummary {
    ClusterReport mean, stddev; // population std over runs
    int runs = 0;
};

// Single k-means run: k-means++ seeding, Lloyd iterations until the centers
// move < 1e-6 or 300 rounds. Empty clusters are re-seeded to the point
// farthest from its center.
std::vector<int> kmeans_assign(const FeatureMatrix& h, int k, uint64_t seed);

// Repeated k-means against ground-truth labels; per-run metrics aggregated
// as mean and population standard deviation.
ClusterSummary kmeans_cluster(const FeatureMatrix& h, const LabelVector& y, int num_classes,
                              int runs = 10, uint64_t seed0 = 0);

// --- partition-comparison metrics (exposed for direct testing) -------------

// Maximum-weight one-to-one matching value on the k x k contingency table
// divided by n (Hungarian assignment), invariant to cluster relabeling.
double clustering_accuracy(const std::vector<int>& pred, const LabelVector& y, int num_classes);

// Mutual information normalized by the arithmetic mean of the entropies.
double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b);

// Adjusted Rand index; degenerate cases (both partitions trivial) return 1.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Macro F1 after mapping clusters to labels with the same Hungarian
// assignment used for accuracy.
double macro_f1(const std::vector<int>& pred, const LabelVector& y, int num_classes);

ClusterReport evaluate_clustering(const std::vector<int>& pred, const LabelVector& y, int num_classes);

// Solves the square assignment problem, maximizing the total weight;
// returns column assigned to each row.
std::vector<int> hungarian_max_assignment(const std::vector<std::vector<double>>& weight);

// --- edge-similarity analysis ------------------------------------------------

struct SimilarityHistogram {
    static constexpr int kBins = 50; // uniform over [-1, 1]
    std::vector<long> homo_count, hetero_count;
    double homo_mean = 0.0;   // 0 when no same-label edges
    double hetero_mean = 0.0; // 0 when no cross-label edges
    long homo_edges = 0;
    long hetero_edges = 0;

    static double bin_lo(int b) { return -1.0 + 2.0 * b / kBins; }
    static double bin_hi(int b) { return -1.0 + 2.0 * (b + 1) / kBins; }
};

// Cosine similarity of the embedding rows across every undirected edge,
// split into same-label and different-label populations.
SimilarityHistogram pairwise_similarity_histogram(const FeatureMatrix& h, const Graph& g,
                                                  const LabelVector& y);

// CSV: bin_lo,bin_hi,homo_count,hetero_count (50 rows).
void write_histogram_csv(const std::string& path, const SimilarityHistogram& hist);

// CSV: metric,value,std rows.
struct MetricRow {
    std::string name;
    double value = 0.0;
    double stddev = 0.0;
};
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

} // namespace dgmae
