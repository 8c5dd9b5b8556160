#pragma once

#include <vector>

#include "dgmae/matrix.hpp"
#include "dgmae/model.hpp"
#include "dgmae/tensor.hpp"

namespace dgmae {

struct LossConfig {
    double gamma1 = 3.0;  // feature-reconstruction sharpening, > 1
    double gamma2 = 3.0;  // discrepancy-reconstruction sharpening, > 1
    double lambda = 0.5;  // branch balance in [0, 1]
    double eps = 1e-12;   // norm guard for cosines

    void validate() const;
};

// Mean over the row subset of (1 - cos(pred_i, target_i))^gamma. Both sides
// are L2-normalized internally with the eps guard, so zero rows behave as
// cosine 0 (term 1) instead of NaN. Gradients flow into pred (and target, if
// it is a differentiable node). The clamp at cos > 1 rounding noise keeps
// non-integer gammas defined.
ad::Var sce(ad::Var pred, ad::Var target, const std::vector<int>& rows, double gamma,
            double eps = 1e-12);

// Reconstruction error of decoded features against the original features,
// restricted to masked rows.
ad::Var feature_loss(ad::Var zhat, const FeatureMatrix& x, const MaskPlan& plan, double gamma1);

// Reconstruction error of the embedding discrepancy against the selected
// neighbor-difference target, restricted to (and averaged over) unmasked rows.
ad::Var discrepancy_loss(ad::Var zd, const FeatureMatrix& xd, const MaskPlan& plan, double gamma2);

// (1 - lambda) * lf + lambda * ld.
ad::Var total_loss(ad::Var lf, ad::Var ld, double lambda);

// Decomposition identity for the inner product <z, x_i - sum_j x_j> over unit
// vectors x: it equals -||z - x_i||^2/2 + sum_j ||z - x_j||^2/2 + C with
// C = (1 - k)(||z||^2 + 1)/2 for k neighbors. Minimizing the distance to x_i
// while maximizing distances to the neighbors is what the discrepancy branch
// rewards. Returns both sides for the caller to compare.
struct PullPush {
    double lhs = 0.0;
    double rhs = 0.0;
};

PullPush pull_push_identity_check(const std::vector<double>& z, const std::vector<double>& xi,
                                  const std::vector<std::vector<double>>& neighbors);

} // namespace dgmae
