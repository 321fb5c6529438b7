#pragma once

// Gaussian-process factor analysis fitted by EM, exact posterior latent
// trajectories, latent velocity fields and attractor estimates.
//
//   y_t = C x_t + d + e,   e ~ N(0, R),  R diagonal
//   x_i(.) ~ GP(0, k_i),   k_i(t, s) = (1 - j) exp(-(t - s)^2 / (2 tau_i^2)) + j [t == s]
//
// Recordings are cut into equal-length segments that are treated as
// independent trials; all trials share one posterior covariance.

#include "ccrc/core.hpp"
#include "ccrc/spikes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

namespace ccrc {

struct LatentModel {
    Matrix loading;             // C, channels x latent_dim (raw EM frame)
    Vector offset;              // d
    Vector noise;               // diagonal of R
    std::vector<double> gp_timescales;  // ms, per latent dimension
    Matrix rotation;            // raw -> orthonormal frame, latent_dim x latent_dim
    double bin_width = 100.0;   // ms
    double gp_jitter = 1e-6;
    int segment_length = 10;    // bins per trial
    std::vector<double> log_likelihoods;  // per EM iteration

    int latent_dim() const { return static_cast<int>(loading.cols()); }
    int channel_count() const { return static_cast<int>(loading.rows()); }
    /// Loading with orthonormal columns (largest-magnitude entry of each column positive).
    Matrix orthonormal_loading() const { return loading * rotation.inverse(); }
};

struct GpfaOptions {
    int latent_dim = 3;
    int max_iters = 100;
    double tol = 1e-6;            // relative log-likelihood change
    int segment_length = 10;      // bins per trial
    double initial_timescale = 100.0;  // ms
    double gp_jitter = 1e-6;
    double noise_floor = 1e-6;    // fraction of channel variance
};

namespace gpfa_detail {

inline Matrix se_kernel(int bins, double bin_width, double tau, double jitter)
{
    Matrix k(bins, bins);
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b) {
            const double dt = (a - b) * bin_width;
            k(a, b) = (1.0 - jitter) * std::exp(-dt * dt / (2.0 * tau * tau)) + (a == b ? jitter : 0.0);
        }
    return k;
}

/// Shared posterior quantities for trials of `bins` length, latent-major ordering (i, t).
struct Posterior {
    Matrix cov;           // (q T) x (q T)
    double logdet_k = 0;  // log |K_big|
    double logdet_prec = 0;  // log |K_big^{-1} + (C'R^-1 C) (x) I|
};

inline Posterior posterior(const Matrix& loading, const Vector& noise, const std::vector<double>& taus,
                           double bin_width, double jitter, int bins)
{
    const int q = static_cast<int>(loading.cols());
    const int n = q * bins;
    const Matrix crc = loading.transpose() * noise.cwiseInverse().asDiagonal() * loading;
    Matrix prec = Matrix::Zero(n, n);
    Posterior out;
    for (int i = 0; i < q; ++i) {
        const Matrix k = se_kernel(bins, bin_width, taus[static_cast<std::size_t>(i)], jitter);
        Eigen::LLT<Matrix> llt(k);
        if (llt.info() != Eigen::Success)
            throw NumericalError("GP kernel is not positive definite");
        out.logdet_k += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        prec.block(i * bins, i * bins, bins, bins) = llt.solve(Matrix::Identity(bins, bins));
    }
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
            prec.block(i * bins, j * bins, bins, bins).diagonal().array() += crc(i, j);
    prec = 0.5 * (prec + prec.transpose());
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success)
        throw NumericalError("posterior precision is not positive definite");
    out.logdet_prec = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.cov = llt.solve(Matrix::Identity(n, n));
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

/// Posterior means for a block of trials. `proj` is (C'R^-1)(y - d), q x (trials * bins), time-major per trial.
inline Matrix posterior_means(const Posterior& post, const Matrix& proj, int bins)
{
    const int q = static_cast<int>(proj.rows());
    const int trials = static_cast<int>(proj.cols()) / bins;
    Matrix stacked(q * bins, trials);  // latent-major per trial
    for (int r = 0; r < trials; ++r)
        for (int i = 0; i < q; ++i)
            for (int t = 0; t < bins; ++t)
                stacked(i * bins + t, r) = proj(i, r * bins + t);
    const Matrix mu = post.cov * stacked;
    Matrix out(q, trials * bins);
    for (int r = 0; r < trials; ++r)
        for (int i = 0; i < q; ++i)
            for (int t = 0; t < bins; ++t)
                out(i, r * bins + t) = mu(i * bins + t, r);
    return out;
}

inline double log_likelihood(const Posterior& post, const Matrix& centered, const Vector& noise, const Matrix& proj,
                             const Matrix& means, int bins)
{
    const double p = static_cast<double>(centered.rows());
    const double total_bins = static_cast<double>(centered.cols());
    const double trials = total_bins / bins;
    const double quad_y = (centered.array().square().colwise() / noise.array()).sum();
    const double quad_b = (proj.array() * means.array()).sum();  // sum over trials of b' Sigma b
    return -0.5 * (p * total_bins * std::log(2.0 * std::numbers::pi) + total_bins * noise.array().log().sum() +
                   trials * (post.logdet_k + post.logdet_prec) + quad_y - quad_b);
}

inline double timescale_objective(double tau, const Matrix& second_moment, double trials, double bin_width,
                                  double jitter)
{
    const int bins = static_cast<int>(second_moment.rows());
    const Matrix k = se_kernel(bins, bin_width, tau, jitter);
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success)
        return -std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (trials * logdet + llt.solve(second_moment).trace());
}

/// Sign convention: largest-magnitude entry of each orthonormal column is positive.
inline Matrix orthonormalizing_rotation(const Matrix& loading)
{
    Eigen::JacobiSVD<Matrix> svd(loading, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix u = svd.matrixU();
    Matrix rot = svd.singularValues().asDiagonal() * svd.matrixV().transpose();
    for (Eigen::Index k = 0; k < u.cols(); ++k) {
        Eigen::Index arg = 0;
        u.col(k).cwiseAbs().maxCoeff(&arg);
        if (u(arg, k) < 0.0)
            rot.row(k) *= -1.0;
    }
    return rot;
}

}  // namespace gpfa_detail

/// EM fit. Bins beyond the last complete segment are ignored.
inline LatentModel fit_gpfa(const FiringRateMatrix& rates, const GpfaOptions& opt = {})
{
    require(rates.values.allFinite(), "rates must be finite");
    const int p = rates.channel_count();
    const int q = opt.latent_dim;
    require(q >= 1, "latent dimension must be positive");
    require(q <= p, "latent dimension exceeds channel count");
    require(opt.segment_length >= 1 && opt.max_iters >= 1, "invalid GPFA options");
    const int bins = opt.segment_length;
    const int trials = rates.bin_count() / bins;
    require(trials >= 1 && trials * bins > q, "not enough bins to fit the latent model");
    const Matrix y = rates.values.leftCols(static_cast<Eigen::Index>(trials) * bins);
    const auto n = static_cast<double>(y.cols());

    const Vector mean = y.rowwise().mean();
    const Matrix yc = y.colwise() - mean;
    const Matrix cov = yc * yc.transpose() / n;
    const Vector var = cov.diagonal();
    const double mean_var = var.mean();
    if (!(mean_var > 1e-12))
        throw ValidationError("degenerate data: rates have no variance");
    Vector floor(p);
    for (int c = 0; c < p; ++c)
        floor(c) = std::max(opt.noise_floor * var(c), opt.noise_floor * 1e-3 * mean_var);

    // Probabilistic-PCA initialization.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector evals = eig.eigenvalues().reverse();
    const Matrix evecs = eig.eigenvectors().rowwise().reverse();
    const double residual = (p > q) ? evals.tail(p - q).mean() : 0.0;
    LatentModel m;
    m.bin_width = rates.bin_width;
    m.gp_jitter = opt.gp_jitter;
    m.segment_length = bins;
    m.loading = Matrix(p, q);
    for (int k = 0; k < q; ++k)
        m.loading.col(k) = evecs.col(k) * std::sqrt(std::max(evals(k) - residual, 1e-6 * mean_var));
    m.offset = mean;
    m.noise = (var - (m.loading * m.loading.transpose()).diagonal()).cwiseMax(floor);
    m.gp_timescales.assign(static_cast<std::size_t>(q), opt.initial_timescale);

    const double tau_lo = 0.25 * rates.bin_width, tau_hi = 20.0 * rates.bin_width * bins;
    double previous = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opt.max_iters; ++iter) {
        // E-step
        const auto post = gpfa_detail::posterior(m.loading, m.noise, m.gp_timescales, m.bin_width, m.gp_jitter, bins);
        const Matrix centered = y.colwise() - m.offset;
        const Matrix proj = m.loading.transpose() * m.noise.cwiseInverse().asDiagonal() * centered;
        const Matrix means = gpfa_detail::posterior_means(post, proj, bins);
        const double ll = gpfa_detail::log_likelihood(post, centered, m.noise, proj, means, bins);
        if (!std::isfinite(ll))
            throw NumericalError("GPFA log-likelihood is not finite");
        m.log_likelihoods.push_back(ll);
        if (iter > 0 && std::abs(ll - previous) <= opt.tol * std::abs(previous))
            break;
        previous = ll;

        // Sufficient statistics
        Matrix sum_xx = Matrix::Zero(q, q);
        for (int t = 0; t < bins; ++t)
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j)
                    sum_xx(i, j) += post.cov(i * bins + t, j * bins + t);
        sum_xx *= static_cast<double>(trials);
        sum_xx += means * means.transpose();
        const Vector sum_x = means.rowwise().sum();

        // M-step: [C d] jointly, then R, then timescales.
        Matrix lhs(q + 1, q + 1);
        lhs.topLeftCorner(q, q) = sum_xx;
        lhs.topRightCorner(q, 1) = sum_x;
        lhs.bottomLeftCorner(1, q) = sum_x.transpose();
        lhs(q, q) = n;
        Matrix yx(p, q + 1);
        yx.leftCols(q) = y * means.transpose();
        yx.col(q) = y.rowwise().sum();
        const Matrix cd = lhs.ldlt().solve(yx.transpose()).transpose();
        m.loading = cd.leftCols(q);
        m.offset = cd.col(q);
        const Vector yy = y.array().square().rowwise().sum();
        const Vector fit = (cd.array() * yx.array()).rowwise().sum();
        m.noise = ((yy - fit) / n).cwiseMax(floor);

        for (int i = 0; i < q; ++i) {
            Matrix second = post.cov.block(i * bins, i * bins, bins, bins) * static_cast<double>(trials);
            for (int r = 0; r < trials; ++r) {
                const Vector xi = means.block(i, static_cast<Eigen::Index>(r) * bins, 1, bins).transpose();
                second += xi * xi.transpose();
            }
            auto objective = [&](double log_tau) {
                return gpfa_detail::timescale_objective(std::exp(log_tau), second, trials, m.bin_width, m.gp_jitter);
            };
            // Golden-section search in log tau; keep the current value unless improved.
            double a = std::log(tau_lo), b = std::log(tau_hi);
            const double g = (std::sqrt(5.0) - 1.0) / 2.0;
            double c = b - g * (b - a), d = a + g * (b - a);
            double fc = objective(c), fd = objective(d);
            for (int it = 0; it < 40; ++it) {
                if (fc > fd) {
                    b = d; d = c; fd = fc;
                    c = b - g * (b - a); fc = objective(c);
                } else {
                    a = c; c = d; fc = fd;
                    d = a + g * (b - a); fd = objective(d);
                }
            }
            const double best = fc > fd ? c : d;
            const double current = std::log(m.gp_timescales[static_cast<std::size_t>(i)]);
            if (objective(best) > objective(current))
                m.gp_timescales[static_cast<std::size_t>(i)] = std::exp(best);
        }
    }
    m.rotation = gpfa_detail::orthonormalizing_rotation(m.loading);
    return m;
}

struct LatentTrajectory {
    std::vector<double> times;        // ms, bin starts
    Matrix states;                    // bins x latent_dim (orthonormal frame)
    std::vector<Matrix> covariances;  // per bin, latent_dim x latent_dim
    int label = 0;                    // pattern label when the trajectory is a stimulus window
};

/// Exact posterior over each segment of `segment_length` bins (0: jointly over all bins).
inline LatentTrajectory infer_trajectory(const LatentModel& model, const FiringRateMatrix& rates, int segment_length = -1)
{
    require(rates.channel_count() == model.channel_count(), "channel count does not match the latent model");
    require(rates.values.allFinite(), "rates must be finite");
    const int total = rates.bin_count();
    int seg = segment_length < 0 ? model.segment_length : segment_length;
    if (seg == 0 || seg > total)
        seg = total;
    const int q = model.latent_dim();
    LatentTrajectory out;
    out.states = Matrix::Zero(total, q);
    out.covariances.resize(static_cast<std::size_t>(total));
    for (int k = 0; k < total; ++k)
        out.times.push_back(rates.bin_start(k));
    if (total == 0)
        return out;

    const Matrix proj_all = model.loading.transpose() * model.noise.cwiseInverse().asDiagonal() *
                            (rates.values.colwise() - model.offset);
    auto run = [&](int first, int count, int bins) {
        const auto post = gpfa_detail::posterior(model.loading, model.noise, model.gp_timescales, model.bin_width,
                                                 model.gp_jitter, bins);
        const Matrix means = gpfa_detail::posterior_means(post, proj_all.middleCols(first, count), bins);
        out.states.middleRows(first, count) = (model.rotation * means).transpose();
        for (int t = 0; t < bins; ++t) {
            Matrix c(q, q);
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j)
                    c(i, j) = post.cov(i * bins + t, j * bins + t);
            const Matrix rotated = model.rotation * c * model.rotation.transpose();
            for (int r = 0; r < count / bins; ++r)
                out.covariances[static_cast<std::size_t>(first + r * bins + t)] = rotated;
        }
    };
    const int full = (total / seg) * seg;
    if (full > 0)
        run(0, full, seg);
    if (full < total)
        run(full, total - full, total - full);
    return out;
}

struct GridSpec {
    std::vector<double> lower;  // per dimension
    std::vector<double> upper;
    std::vector<int> cells;

    int dims() const { return static_cast<int>(cells.size()); }
};

struct VelocityField {
    GridSpec grid;
    std::vector<std::optional<Vector>> cells;  // row-major over grid cells; empty: no samples
    std::vector<int> counts;
};

/// Grid covering all states with a small margin.
inline GridSpec bounding_grid(const std::vector<LatentTrajectory>& trajectories, int cells_per_dim, int dims)
{
    GridSpec g;
    g.lower.assign(static_cast<std::size_t>(dims), std::numeric_limits<double>::infinity());
    g.upper.assign(static_cast<std::size_t>(dims), -std::numeric_limits<double>::infinity());
    g.cells.assign(static_cast<std::size_t>(dims), cells_per_dim);
    for (const auto& tr : trajectories)
        for (Eigen::Index k = 0; k < tr.states.rows(); ++k)
            for (int d = 0; d < dims; ++d) {
                g.lower[d] = std::min(g.lower[d], tr.states(k, d));
                g.upper[d] = std::max(g.upper[d], tr.states(k, d));
            }
    for (int d = 0; d < dims; ++d) {
        const double pad = 1e-6 + 1e-3 * (g.upper[d] - g.lower[d]);
        g.lower[d] -= pad;
        g.upper[d] += pad;
    }
    return g;
}

/// Forward-difference velocities (per ms) binned by their start state; cell value is the mean.
inline VelocityField velocity_field(const std::vector<LatentTrajectory>& trajectories, const GridSpec& grid)
{
    require(!trajectories.empty(), "velocity field needs at least one trajectory");
    const int dims = grid.dims();
    require(dims >= 1 && grid.lower.size() == grid.cells.size() && grid.upper.size() == grid.cells.size(),
            "malformed grid");
    std::size_t total = 1;
    for (int d = 0; d < dims; ++d) {
        require(grid.cells[d] >= 1 && grid.upper[d] > grid.lower[d], "malformed grid");
        total *= static_cast<std::size_t>(grid.cells[d]);
    }
    std::vector<Vector> sums(total, Vector::Zero(dims));
    std::vector<int> counts(total, 0);
    for (const auto& tr : trajectories) {
        require(tr.states.cols() >= dims, "trajectory dimension below grid dimension");
        for (Eigen::Index k = 0; k + 1 < tr.states.rows(); ++k) {
            std::size_t index = 0;
            bool inside = true;
            for (int d = 0; d < dims; ++d) {
                const double x = tr.states(k, d);
                const auto cell = static_cast<long>(std::floor((x - grid.lower[d]) / (grid.upper[d] - grid.lower[d]) *
                                                               grid.cells[d]));
                if (cell < 0 || cell >= grid.cells[d]) {
                    inside = false;
                    break;
                }
                index = index * static_cast<std::size_t>(grid.cells[d]) + static_cast<std::size_t>(cell);
            }
            if (!inside)
                continue;
            const double dt = tr.times[static_cast<std::size_t>(k + 1)] - tr.times[static_cast<std::size_t>(k)];
            sums[index] += ((tr.states.row(k + 1) - tr.states.row(k)).head(dims) / dt).transpose();
            ++counts[index];
        }
    }
    VelocityField field;
    field.grid = grid;
    field.counts = counts;
    field.cells.resize(total);
    for (std::size_t i = 0; i < total; ++i)
        if (counts[i] > 0)
            field.cells[i] = sums[i] / counts[i];
    return field;
}

enum class AttractorMode { point_cloud, cycle };
enum class AttractorSource { spontaneous, evoked };

struct LabeledPoint {
    int label = 0;
    int phase_bin = 0;
    Vector point;
    int count = 0;
};

struct AttractorModel {
    Matrix point_cloud;           // n_points x latent_dim
    std::optional<Matrix> cycle;  // phase_bins x latent_dim, ordered by phase
    std::vector<LabeledPoint> labeled_means;  // (label, phase bin) means, sorted
    AttractorSource source = AttractorSource::spontaneous;
    int trajectory_count = 0;
    int phase_bins = 10;
    bool fallback = false;        // cycle requested but data aperiodic
    double phase_variance_ratio = 0.0;
};

struct AttractorOptions {
    double period = 1000.0;   // ms
    double anchor = 0.0;      // ms; phase 0 at anchor + k * period
    int phase_bins = 10;
    double periodicity_threshold = 0.25;  // between-phase / total variance needed for a cycle
    std::function<double(double)> phase;  // optional override: time (ms) -> phase in [0, 1)
    AttractorSource source = AttractorSource::evoked;
};

namespace attractor_detail {

inline int phase_bin(const AttractorOptions& opt, double t)
{
    double ph;
    if (opt.phase) {
        ph = opt.phase(t);
    } else {
        ph = std::fmod(t - opt.anchor, opt.period) / opt.period;
        if (ph < 0.0)
            ph += 1.0;
    }
    auto b = static_cast<int>(std::floor(ph * opt.phase_bins + 1e-9));
    return std::clamp(b, 0, opt.phase_bins - 1);
}

}  // namespace attractor_detail

inline AttractorModel estimate_attractor(const std::vector<LatentTrajectory>& trajectories, AttractorMode mode,
                                         const AttractorOptions& opt = {})
{
    require(!trajectories.empty(), "attractor estimation needs at least one trajectory");
    require(opt.phase_bins >= 1 && opt.period > 0.0, "invalid attractor options");
    const auto q = trajectories.front().states.cols();
    Eigen::Index rows = 0;
    for (const auto& tr : trajectories) {
        require(tr.states.cols() == q, "trajectories have different latent dimensions");
        rows += tr.states.rows();
    }
    AttractorModel out;
    out.source = opt.source;
    out.trajectory_count = static_cast<int>(trajectories.size());
    out.phase_bins = opt.phase_bins;
    out.point_cloud.resize(rows, q);

    std::vector<Vector> phase_sum(static_cast<std::size_t>(opt.phase_bins), Vector::Zero(q));
    std::vector<int> phase_count(static_cast<std::size_t>(opt.phase_bins), 0);
    std::map<std::pair<int, int>, std::pair<Vector, int>> labeled;
    Eigen::Index row = 0;
    for (const auto& tr : trajectories) {
        for (Eigen::Index k = 0; k < tr.states.rows(); ++k) {
            out.point_cloud.row(row++) = tr.states.row(k);
            const int b = attractor_detail::phase_bin(opt, tr.times[static_cast<std::size_t>(k)]);
            phase_sum[b] += tr.states.row(k).transpose();
            ++phase_count[b];
            if (tr.label != 0) {
                auto [it, inserted] = labeled.try_emplace({tr.label, b}, Vector::Zero(q), 0);
                it->second.first += tr.states.row(k).transpose();
                ++it->second.second;
            }
        }
    }
    for (const auto& [key, acc] : labeled)
        out.labeled_means.push_back({key.first, key.second, acc.first / acc.second, acc.second});

    if (mode == AttractorMode::cycle) {
        const Vector grand = out.point_cloud.colwise().mean().transpose();
        const double total = (out.point_cloud.rowwise() - grand.transpose()).squaredNorm();
        Matrix cycle(opt.phase_bins, q);
        double between = 0.0;
        bool complete = true;
        for (int b = 0; b < opt.phase_bins; ++b) {
            if (phase_count[b] == 0) {
                complete = false;
                continue;
            }
            cycle.row(b) = (phase_sum[b] / phase_count[b]).transpose();
            between += phase_count[b] * (cycle.row(b).transpose() - grand).squaredNorm();
        }
        out.phase_variance_ratio = total > 0.0 ? between / total : 0.0;
        if (complete && out.phase_variance_ratio >= opt.periodicity_threshold)
            out.cycle = cycle;
        else
            out.fallback = true;
    }
    return out;
}

}  // namespace ccrc
