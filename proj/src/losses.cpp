#include "dgmae/losses.hpp"

#include <cmath>
#include <string>

namespace dgmae {

void LossConfig::validate() const {
    if (gamma1 <= 1.0 || gamma2 <= 1.0)
        throw UsageError(Errc::bad_config, "loss gammas must be > 1");
    if (lambda < 0.0 || lambda > 1.0)
        throw UsageError(Errc::bad_config, "lambda must be in [0, 1]");
    if (eps <= 0.0) throw UsageError(Errc::bad_config, "eps must be positive");
}

ad::Var sce(ad::Var pred, ad::Var target, const std::vector<int>& rows, double gamma, double eps) {
    if (rows.empty()) throw DataError(Errc::empty_subset, "sce: empty row subset");
    ad::Tape& t = *pred.tape;
    // Snapshot dims up front: pushing ops below may reallocate node storage,
    // so references returned by value() must not be held across pushes.
    const int n_rows = t.value(pred).rows();
    if (!t.value(pred).same_shape(t.value(target)))
        throw DataError(Errc::dimension_mismatch, "sce: shape mismatch");
    ad::Var pn = ad::row_normalize_l2(pred, eps);
    ad::Var tn = ad::row_normalize_l2(target, eps);
    ad::Var cos = ad::row_sum(ad::mul(pn, tn));
    Matrix ones(n_rows, 1);
    ones.fill(1.0);
    ad::Var err = ad::leaky_relu(ad::sub(t.constant(std::move(ones)), cos), 0.0);
    return ad::mean(ad::gather_rows(ad::pow_elem(err, gamma), rows));
}

ad::Var feature_loss(ad::Var zhat, const FeatureMatrix& x, const MaskPlan& plan, double gamma1) {
    const std::vector<int> rows = plan.masked_indices();
    if (rows.empty()) throw DataError(Errc::empty_subset, "feature_loss: no masked nodes");
    ad::Tape& t = *zhat.tape;
    return sce(zhat, t.constant(x), rows, gamma1);
}

ad::Var discrepancy_loss(ad::Var zd, const FeatureMatrix& xd, const MaskPlan& plan, double gamma2) {
    const std::vector<int> rows = plan.unmasked_indices();
    if (rows.empty()) throw DataError(Errc::empty_subset, "discrepancy_loss: no unmasked nodes");
    ad::Tape& t = *zd.tape;
    return sce(zd, t.constant(xd), rows, gamma2);
}

ad::Var total_loss(ad::Var lf, ad::Var ld, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw UsageError(Errc::bad_config, "lambda must be in [0, 1]");
    return ad::add(ad::scale(lf, 1.0 - lambda), ad::scale(ld, lambda));
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void require_unit(const std::vector<double>& v, const char* what) {
    const double n = std::sqrt(dot(v, v));
    if (std::abs(n - 1.0) > 1e-6)
        throw DataError(Errc::not_normalized, std::string(what) + " must be L2-normalized");
}

} // namespace

PullPush pull_push_identity_check(const std::vector<double>& z, const std::vector<double>& xi,
                                  const std::vector<std::vector<double>>& neighbors) {
    if (z.size() != xi.size()) throw DataError(Errc::dimension_mismatch, "pull_push: length mismatch");
    require_unit(xi, "center vector");
    for (const auto& nb : neighbors) {
        if (nb.size() != z.size()) throw DataError(Errc::dimension_mismatch, "pull_push: length mismatch");
        require_unit(nb, "neighbor vector");
    }
    std::vector<double> diff = xi;
    for (const auto& nb : neighbors)
        for (size_t c = 0; c < diff.size(); ++c) diff[c] -= nb[c];
    PullPush r;
    r.lhs = dot(z, diff);
    const double k = static_cast<double>(neighbors.size());
    const double constant = (1.0 - k) * (dot(z, z) + 1.0) / 2.0;
    r.rhs = -0.5 * sq_dist(z, xi) + constant;
    for (const auto& nb : neighbors) r.rhs += 0.5 * sq_dist(z, nb);
    return r;
}

} // namespace dgmae
