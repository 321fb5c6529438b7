#pragma once

// Linear readout: feature extraction at the post-stimulus sample bin,
// one-vs-all ridge classification with k-fold CV over lambda, and
// per-round accuracy timelines.

#include "ccrc/core.hpp"
#include "ccrc/encoding.hpp"
#include "ccrc/latent.hpp"
#include "ccrc/spikes.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ccrc {

enum class FeatureSpace { observed_rates, latent };

inline const char* to_string(FeatureSpace s) { return s == FeatureSpace::latent ? "latent" : "observed_rates"; }

inline FeatureSpace parse_feature_space(std::string_view s)
{
    if (s == "latent")
        return FeatureSpace::latent;
    if (s == "observed_rates")
        return FeatureSpace::observed_rates;
    throw ValidationError("unknown feature space: " + std::string(s));
}

struct ReadoutModel {
    Matrix weights;  // classes x features
    Vector bias;     // classes
    double ridge_lambda = 0.0;  // penalty actually applied
    FeatureSpace feature_space = FeatureSpace::observed_rates;
    std::vector<int> class_labels;  // ascending

    int feature_dim() const { return static_cast<int>(weights.cols()); }
    int class_count() const { return static_cast<int>(weights.rows()); }
};

struct LabeledFeatureSet {
    Matrix features;               // samples x feature_dim
    std::vector<int> labels;
    std::vector<double> sample_times;  // ms, start of the sampled bin (program clock)
    FeatureSpace feature_space = FeatureSpace::observed_rates;
    int dropped = 0;               // windows that ran past the recording

    int size() const { return static_cast<int>(labels.size()); }
    int feature_dim() const { return static_cast<int>(features.cols()); }
};

/// Selected rows of a feature set, in the given order.
inline LabeledFeatureSet subset(const LabeledFeatureSet& data, const std::vector<int>& rows)
{
    LabeledFeatureSet out;
    out.feature_space = data.feature_space;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
        out.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
        out.sample_times.push_back(data.sample_times[static_cast<std::size_t>(rows[i])]);
    }
    return out;
}

inline LabeledFeatureSet head(const LabeledFeatureSet& data, int count)
{
    std::vector<int> rows(static_cast<std::size_t>(std::clamp(count, 0, data.size())));
    std::iota(rows.begin(), rows.end(), 0);
    return subset(data, rows);
}

struct FeatureOptions {
    double bin_width = 100.0;     // ms
    double sample_offset = 900.0; // ms after window onset
    int offsets = 1;              // consecutive bins concatenated (observed space)
};

/// Rates for `bins` consecutive bins starting at t0, without binning the whole recording.
inline FiringRateMatrix window_rates(const SpikeTrainSet& spikes, double t0, int bins, double bin_width)
{
    FiringRateMatrix out;
    out.bin_width = bin_width;
    out.t0 = t0;
    out.values = Matrix::Zero(spikes.channel_count(), bins);
    const double end = t0 + bins * bin_width;
    const double scale = 1000.0 / bin_width;
    for (int c = 0; c < spikes.channel_count(); ++c) {
        const auto& train = spikes.channel(c);
        for (auto it = std::lower_bound(train.begin(), train.end(), t0); it != train.end() && *it < end; ++it) {
            const auto k = std::min(static_cast<int>((*it - t0) / bin_width), bins - 1);
            out.values(c, k) += scale;
        }
    }
    return out;
}

/// One sample per labeled window. Latent features are the posterior state at the sample bin,
/// inferred jointly over the bins from window onset through the sample bin(s).
inline LabeledFeatureSet extract_features(const SpikeTrainSet& spikes, const StimulusProgram& program,
                                          FeatureSpace space, const LatentModel* latent = nullptr,
                                          const FeatureOptions& opt = {})
{
    require(opt.bin_width > 0.0 && opt.sample_offset >= 0.0 && opt.offsets >= 1, "invalid feature options");
    require(space != FeatureSpace::latent || latent != nullptr, "latent features require a latent model");
    if (latent)
        require(latent->channel_count() == spikes.channel_count(), "latent model channel count mismatch");
    const int lead = static_cast<int>(std::floor(opt.sample_offset / opt.bin_width + 1e-9));
    require(std::abs(lead * opt.bin_width - opt.sample_offset) < 1e-9,
            "sample offset must be a multiple of the bin width");
    const int dim = space == FeatureSpace::latent ? latent->latent_dim() * opt.offsets
                                                  : spikes.channel_count() * opt.offsets;
    LabeledFeatureSet out;
    out.feature_space = space;
    std::vector<Vector> rows;
    for (const auto& w : program.windows) {
        const double t0 = static_cast<double>(w.onset);
        const double sample = t0 + opt.sample_offset;
        if (sample + opt.offsets * opt.bin_width > spikes.duration()) {
            ++out.dropped;
            continue;
        }
        Vector f(dim);
        if (space == FeatureSpace::observed_rates) {
            const auto r = window_rates(spikes, sample, opt.offsets, opt.bin_width);
            for (int k = 0; k < opt.offsets; ++k)
                f.segment(static_cast<Eigen::Index>(k) * r.channel_count(), r.channel_count()) = r.values.col(k);
        } else {
            const auto r = window_rates(spikes, t0, lead + opt.offsets, opt.bin_width);
            const auto traj = infer_trajectory(*latent, r, 0);
            const int q = latent->latent_dim();
            for (int k = 0; k < opt.offsets; ++k)
                f.segment(static_cast<Eigen::Index>(k) * q, q) = traj.states.row(lead + k).transpose();
        }
        rows.push_back(std::move(f));
        out.labels.push_back(w.label);
        out.sample_times.push_back(sample);
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return out;
}

namespace ridge_detail {

inline std::vector<int> sorted_labels(const std::vector<int>& labels)
{
    std::vector<int> out = labels;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline Matrix one_hot(const std::vector<int>& labels, const std::vector<int>& classes)
{
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
        require(it != classes.end() && *it == labels[i], "label not among the model classes");
        y(static_cast<Eigen::Index>(i), it - classes.begin()) = 1.0;
    }
    return y;
}

/// Solve (Xc'Xc + a I) W' = Xc'Yc + a0 W0' with unpenalized intercept.
inline ReadoutModel solve(const Matrix& x, const std::vector<int>& labels, const std::vector<int>& classes,
                          double lambda, double anchor, const Matrix* w0)
{
    const Vector xm = x.colwise().mean().transpose();
    const Matrix xc = x.rowwise() - xm.transpose();
    const Matrix y = one_hot(labels, classes);
    const Vector ym = y.colwise().mean().transpose();
    const Matrix yc = y.rowwise() - ym.transpose();
    Matrix gram = xc.transpose() * xc;
    Matrix rhs = xc.transpose() * yc;
    const double penalty = lambda + anchor;
    if (penalty > 0.0)
        gram.diagonal().array() += penalty;
    if (anchor > 0.0 && w0)
        rhs += anchor * w0->transpose();
    Matrix wt;
    if (penalty > 0.0) {
        Eigen::LDLT<Matrix> ldlt(gram);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("ridge system factorization failed");
        wt = ldlt.solve(rhs);
    } else {
        wt = Eigen::CompleteOrthogonalDecomposition<Matrix>(gram).solve(rhs);
    }
    if (!wt.allFinite())
        throw NumericalError("ridge solution is not finite");
    ReadoutModel m;
    m.weights = wt.transpose();
    m.bias = ym - m.weights * xm;
    m.ridge_lambda = lambda;
    m.class_labels = classes;
    return m;
}

inline void check(const LabeledFeatureSet& data)
{
    require(data.size() > 0, "feature set is empty");
    require(data.features.rows() == data.size(), "feature rows do not match labels");
    require(data.features.allFinite(), "features must be finite");
}

}  // namespace ridge_detail

/// Ridge fit at a fixed penalty (no CV).
inline ReadoutModel fit_ridge(const LabeledFeatureSet& data, double lambda)
{
    ridge_detail::check(data);
    require(std::isfinite(lambda) && lambda >= 0.0, "ridge lambda must be non-negative");
    const auto classes = ridge_detail::sorted_labels(data.labels);
    require(classes.size() >= 2, "at least two classes are required");
    auto m = ridge_detail::solve(data.features, data.labels, classes, lambda, 0.0, nullptr);
    m.feature_space = data.feature_space;
    return m;
}

inline Matrix scores(const ReadoutModel& model, const Matrix& features)
{
    require(features.cols() == model.feature_dim(), "feature dimension does not match the readout");
    return (features * model.weights.transpose()).rowwise() + model.bias.transpose();
}

/// Argmax over class scores; ties go to the smallest label.
inline std::vector<int> predict(const ReadoutModel& model, const Matrix& features)
{
    const Matrix s = scores(model, features);
    std::vector<int> out(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < s.cols(); ++k)
            if (s(i, k) > s(i, best))
                best = k;
        out[static_cast<std::size_t>(i)] = model.class_labels[static_cast<std::size_t>(best)];
    }
    return out;
}

inline double evaluate(const ReadoutModel& model, const LabeledFeatureSet& data)
{
    require(data.size() > 0, "cannot evaluate on an empty feature set");
    require(data.feature_space == model.feature_space, "feature space does not match the readout");
    const auto pred = predict(model, data.features);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        correct += pred[i] == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

struct RidgeOptions {
    std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
    int folds = 10;
    std::uint64_t seed = 0;
    bool trace_normalized = true;  // grid values scale trace(Xc'Xc) / feature_dim
};

struct CvReport {
    std::vector<double> lambdas;         // applied penalties
    std::vector<double> mean_accuracy;   // per lambda
    int folds = 0;
    double chosen_lambda = 0.0;
    double chosen_accuracy = 0.0;
};

struct RidgeResult {
    ReadoutModel model;
    CvReport cv;
};

/// Fold of sample i after a seeded shuffle: position mod folds.
inline std::vector<int> fold_assignment(int samples, int folds, std::uint64_t seed)
{
    std::vector<int> order(static_cast<std::size_t>(samples));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(static_cast<std::size_t>(samples));
    for (int pos = 0; pos < samples; ++pos)
        fold[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos % folds;
    return fold;
}

inline double trace_scale(const Matrix& x)
{
    const Matrix xc = x.rowwise() - x.colwise().mean();
    const double s = xc.squaredNorm() / static_cast<double>(x.cols());
    return s > 0.0 ? s : 1.0;
}

inline RidgeResult train_ridge(const LabeledFeatureSet& data, const RidgeOptions& opt = {})
{
    ridge_detail::check(data);
    require(!opt.lambda_grid.empty(), "lambda grid must not be empty");
    for (double l : opt.lambda_grid)
        require(std::isfinite(l) && l >= 0.0, "lambda grid values must be non-negative");
    require(opt.folds >= 2, "at least two folds are required");
    const auto classes = ridge_detail::sorted_labels(data.labels);
    require(classes.size() >= 2, "at least two classes are required");
    const int n = data.size();
    require(n >= 2, "at least two samples are required");

    const double scale = opt.trace_normalized ? trace_scale(data.features) : 1.0;
    RidgeResult out;
    out.cv.folds = std::min(opt.folds, n);
    const auto fold = fold_assignment(n, out.cv.folds, opt.seed);
    for (double l : opt.lambda_grid)
        out.cv.lambdas.push_back(l * scale);
    out.cv.mean_accuracy.assign(out.cv.lambdas.size(), 0.0);

    for (int f = 0; f < out.cv.folds; ++f) {
        std::vector<int> train_rows, test_rows;
        for (int i = 0; i < n; ++i)
            (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
        if (test_rows.empty())
            continue;
        auto train = subset(data, train_rows);
        auto test = subset(data, test_rows);
        // Classes missing from a training fold keep zero score columns.
        for (std::size_t li = 0; li < out.cv.lambdas.size(); ++li) {
            ReadoutModel m;
            const auto fold_classes = ridge_detail::sorted_labels(train.labels);
            if (fold_classes.size() >= 2) {
                m = ridge_detail::solve(train.features, train.labels, fold_classes, out.cv.lambdas[li], 0.0, nullptr);
            } else {
                m.weights = Matrix::Zero(1, data.feature_dim());
                m.bias = Vector::Ones(1);
                m.class_labels = fold_classes;
            }
            m.feature_space = data.feature_space;
            out.cv.mean_accuracy[li] += evaluate(m, test) * static_cast<double>(test_rows.size()) / n;
        }
    }
    std::size_t best = 0;
    for (std::size_t li = 1; li < out.cv.lambdas.size(); ++li) {
        const bool better = out.cv.mean_accuracy[li] > out.cv.mean_accuracy[best];
        const bool tie_smaller = out.cv.mean_accuracy[li] == out.cv.mean_accuracy[best] &&
                                 out.cv.lambdas[li] < out.cv.lambdas[best];
        if (better || tie_smaller)
            best = li;
    }
    out.cv.chosen_lambda = out.cv.lambdas[best];
    out.cv.chosen_accuracy = out.cv.mean_accuracy[best];
    out.model = ridge_detail::solve(data.features, data.labels, classes, out.cv.chosen_lambda, 0.0, nullptr);
    out.model.feature_space = data.feature_space;
    return out;
}

struct AccuracyTimeline {
    std::vector<double> round_times;  // hours
    std::vector<double> accuracies;

    /// First round time after which accuracy stays below theta; nullopt when the last round is >= theta.
    std::optional<double> threshold_crossing(double theta) const
    {
        std::optional<double> out;
        for (std::size_t i = accuracies.size(); i-- > 0;) {
            if (accuracies[i] >= theta)
                break;
            out = round_times[i];
        }
        return out;
    }

    /// Time spent above theta: the crossing time, or the last round time when accuracy never falls below.
    double time_above(double theta) const
    {
        if (round_times.empty())
            return 0.0;
        return threshold_crossing(theta).value_or(round_times.back());
    }
};

inline AccuracyTimeline accuracy_timeline(const ReadoutModel& model, const std::vector<LabeledFeatureSet>& rounds,
                                          const std::vector<double>& round_times)
{
    require(rounds.size() == round_times.size(), "rounds and round times must align");
    AccuracyTimeline out;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        require(i == 0 || round_times[i] > round_times[i - 1], "round times must be increasing");
        out.round_times.push_back(round_times[i]);
        out.accuracies.push_back(evaluate(model, rounds[i]));
    }
    return out;
}

}  // namespace ccrc
