#pragma once

// Knowledge transplant: align a student's latent attractor to an expert's
// with an affine ridge map T (student -> expert) and compose the expert
// readout with it: W_s = W_e T, b_s = W_e t + b_e.

#include "ccrc/core.hpp"
#include "ccrc/latent.hpp"
#include "ccrc/readout.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ccrc {

struct AlignmentTransform {
    Matrix linear;       // expert_dim x student_dim
    Vector translation;  // expert_dim
    double ridge_lambda = 0.0;
    double fit_residual = 0.0;  // RMS distance in expert latent units
    int probe_count = 0;        // point pairs used

    Vector apply(const Vector& s) const { return linear * s + translation; }
};

/// Minimizes sum ||T s_i + t - e_i||^2 + lambda ||T||_F^2 (translation unpenalized).
inline AlignmentTransform fit_alignment(const Matrix& student, const Matrix& expert, double lambda)
{
    require(student.rows() == expert.rows(), "point sets must have the same number of points");
    require(student.allFinite() && expert.allFinite(), "points must be finite");
    require(std::isfinite(lambda) && lambda >= 0.0, "alignment lambda must be non-negative");
    const auto n = student.rows(), ds = student.cols();
    require(n >= ds + 1, "alignment needs at least student_dim + 1 point pairs");
    const Vector sm = student.colwise().mean().transpose();
    const Vector em = expert.colwise().mean().transpose();
    const Matrix sc = student.rowwise() - sm.transpose();
    const Matrix ec = expert.rowwise() - em.transpose();
    Matrix gram = sc.transpose() * sc;
    Matrix tt;
    if (lambda > 0.0) {
        gram.diagonal().array() += lambda;
        tt = gram.ldlt().solve(sc.transpose() * ec);
    } else {
        Eigen::ColPivHouseholderQR<Matrix> qr(sc);
        qr.setThreshold(1e-10);
        if (qr.rank() < ds)
            throw ValidationError("student point cloud is rank deficient; use lambda > 0");
        tt = qr.solve(ec);
    }
    if (!tt.allFinite())
        throw NumericalError("alignment solution is not finite");
    AlignmentTransform out;
    out.linear = tt.transpose();
    out.translation = em - out.linear * sm;
    out.ridge_lambda = lambda;
    out.probe_count = static_cast<int>(n);
    const Matrix resid = (student * out.linear.transpose()).rowwise() + out.translation.transpose() - expert;
    out.fit_residual = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
    return out;
}

struct Correspondence {
    Matrix student;  // pairs x student_dim
    Matrix expert;   // pairs x expert_dim
    std::vector<std::pair<int, int>> keys;  // (label, phase bin) per pair
    std::map<int, int> pairs_per_label;
    std::map<int, int> skipped_per_label;    // student bins with no expert counterpart
    bool single_label = false;
};

/// Pair student (label, phase-bin) means with the expert's means for the same key.
inline Correspondence correspond_points(const std::vector<LatentTrajectory>& student_trajectories,
                                        const AttractorModel& expert, const AttractorOptions& phase = {})
{
    require(!student_trajectories.empty(), "no student trajectories");
    for (const auto& tr : student_trajectories)
        require(tr.label != 0, "student probe trajectories must carry pattern labels");
    require(!expert.labeled_means.empty(), "expert attractor has no labeled structure");
    auto opt = phase;
    opt.phase_bins = expert.phase_bins;
    const auto student = estimate_attractor(student_trajectories, AttractorMode::point_cloud, opt);

    std::map<std::pair<int, int>, const LabeledPoint*> expert_index;
    for (const auto& lp : expert.labeled_means)
        expert_index[{lp.label, lp.phase_bin}] = &lp;
    Correspondence out;
    std::vector<const LabeledPoint*> s_pts, e_pts;
    for (const auto& lp : student.labeled_means) {
        auto it = expert_index.find({lp.label, lp.phase_bin});
        if (it == expert_index.end()) {
            ++out.skipped_per_label[lp.label];
            continue;
        }
        s_pts.push_back(&lp);
        e_pts.push_back(it->second);
        out.keys.emplace_back(lp.label, lp.phase_bin);
        ++out.pairs_per_label[lp.label];
    }
    if (out.pairs_per_label.empty())
        throw ValidationError("student and expert share no labels");
    out.single_label = out.pairs_per_label.size() == 1;
    const auto n = static_cast<Eigen::Index>(s_pts.size());
    out.student.resize(n, s_pts.front()->point.size());
    out.expert.resize(n, e_pts.front()->point.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.student.row(i) = s_pts[static_cast<std::size_t>(i)]->point.transpose();
        out.expert.row(i) = e_pts[static_cast<std::size_t>(i)]->point.transpose();
    }
    return out;
}

/// Student readout evaluating the expert readout at T s + t. Features made of several
/// stacked latent states (one per sample offset) get T applied to every block.
inline ReadoutModel transplant_readout(const ReadoutModel& expert, const AlignmentTransform& transform)
{
    require(expert.feature_space == FeatureSpace::latent, "transplant requires a latent-space readout");
    require(transform.translation.size() == transform.linear.rows(), "malformed transform");
    const auto de = transform.linear.rows(), ds = transform.linear.cols();
    require(de > 0 && expert.feature_dim() % de == 0, "transform output dimension does not match the readout");
    const auto blocks = expert.feature_dim() / de;
    ReadoutModel out = expert;
    out.weights.resize(expert.weights.rows(), blocks * ds);
    for (Eigen::Index k = 0; k < blocks; ++k) {
        const auto we = expert.weights.middleCols(k * de, de);
        out.weights.middleCols(k * ds, ds) = we * transform.linear;
        out.bias += we * transform.translation;
    }
    return out;
}

/// Ridge refit pulled toward `initial`: adds anchor_weight * ||W - W_initial||_F^2.
/// anchor_weight = 0 is plain retraining; +inf returns `initial`.
inline ReadoutModel fine_tune(const ReadoutModel& initial, const LabeledFeatureSet& new_data, double lambda,
                              double anchor_weight)
{
    ridge_detail::check(new_data);
    require(new_data.feature_space == initial.feature_space, "feature space does not match the readout");
    require(new_data.feature_dim() == initial.feature_dim(), "feature dimension does not match the readout");
    require(std::isfinite(lambda) && lambda >= 0.0, "ridge lambda must be non-negative");
    require(anchor_weight >= 0.0 && !std::isnan(anchor_weight), "anchor weight must be non-negative");
    if (std::isinf(anchor_weight))
        return initial;
    auto m = ridge_detail::solve(new_data.features, new_data.labels, initial.class_labels, lambda, anchor_weight,
                                 &initial.weights);
    m.feature_space = initial.feature_space;
    return m;
}

struct TransplantRecord {
    std::string expert_id;
    std::string student_id;
    AlignmentTransform transform;
    ReadoutModel transplanted_readout;
    std::vector<std::pair<std::string, std::string>> provenance;  // expert training metadata
};

}  // namespace ccrc
