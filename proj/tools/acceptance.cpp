// Acceptance checks: one PASS/FAIL line per criterion. Fixtures and oracles here are
// independent of the library code they check.
#include "ccrc/ccrc.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <set>

using namespace ccrc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    std::function<Outcome()> run;
};

std::string fmt(double x, int digits = 3)
{
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << x;
    return os.str();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

// ---------------------------------------------------------------------------
// 1. encoder

Outcome encoder_exact()
{
    // Reference raster: pulse k of N starts at floor(k * 900 / N) and lasts 15 ms; the
    // window is 900 ms active + 100 ms rest, sampled at 1 ms.
    for (int n = 1; n <= 10; ++n) {
        const TimeMs onset = 1000;
        const auto ev = encode_pattern(PatternSpec{n}, onset, 1.0);
        if (static_cast<int>(ev.size()) != n)
            return {false, "N=" + std::to_string(n) + ": " + std::to_string(ev.size()) + " pulses"};
        std::vector<std::uint8_t> want(1000, 0), got(1000, 0);
        for (int k = 0; k < n; ++k)
            for (int t = 0; t < 15; ++t)
                want[static_cast<std::size_t>(k * 900 / n + t)] = 1;
        for (const auto& e : ev) {
            if (e.duration != 15 || e.onset < onset || e.onset + e.duration > onset + 900)
                return {false, "N=" + std::to_string(n) + ": pulse outside the active window"};
            for (TimeMs t = e.onset; t < e.onset + e.duration; ++t)
                if (got[static_cast<std::size_t>(t - onset)]++)
                    return {false, "N=" + std::to_string(n) + ": overlapping pulses"};
        }
        if (got != want)
            return {false, "N=" + std::to_string(n) + ": raster differs"};
        if (PatternSpec{n}.window_length() != 1000)
            return {false, "window length is not 1000 ms"};
    }
    return {true, "N=1..10 bit-exact at 1 ms"};
}

// ---------------------------------------------------------------------------
// 2. ridge

Outcome ridge_oracle()
{
    std::mt19937_64 rng(20240601);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> rows(12, 50), cols(1, 10), ncls(2, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rows(rng), d = cols(rng), k = ncls(rng);
        LabeledFeatureSet s;
        s.features.resize(n, d);
        for (Eigen::Index i = 0; i < s.features.size(); ++i)
            s.features.data()[i] = 2.0 * g(rng) - 0.5;
        for (int i = 0; i < n; ++i) {
            s.labels.push_back(1 + i % k);
            s.sample_times.push_back(i);
        }
        RidgeOptions opt;
        opt.folds = 5;
        opt.seed = static_cast<std::uint64_t>(trial);
        const auto r = train_ridge(s, opt);

        // Closed form at the chosen penalty: [X 1] augmented normal equations, intercept unpenalized.
        const double lambda = r.cv.chosen_lambda;
        Matrix a(n, d + 1);
        a << s.features, Vector::Ones(n);
        Matrix y = Matrix::Zero(n, k);
        for (int i = 0; i < n; ++i)
            y(i, s.labels[static_cast<std::size_t>(i)] - 1) = 1.0;
        Matrix lhs = a.transpose() * a;
        lhs.diagonal().head(d).array() += lambda;
        const Matrix beta = lhs.fullPivLu().solve(a.transpose() * y);
        const Matrix w = beta.topRows(d).transpose();
        const double err = (r.model.weights - w).norm() / std::max(w.norm(), 1e-300);
        worst = std::max(worst, err);
    }
    return {worst <= 1e-8, "max relative Frobenius error " + [&] {
                std::ostringstream os;
                os << worst;
                return os.str();
            }()};
}

// ---------------------------------------------------------------------------
// 3. branching ratio

Outcome branching()
{
    std::ostringstream detail;
    bool ok = true;
    for (double sigma : {0.8, 1.0, 1.2}) {
        // Galton-Watson avalanches, Poisson(sigma) offspring per unit, separated by silence.
        std::mt19937_64 rng(static_cast<std::uint64_t>(sigma * 1000));
        std::uniform_int_distribution<std::uint32_t> founders(1, 4);
        std::vector<std::uint32_t> counts{0};
        int avalanches = 0;
        for (; avalanches < 20000; ++avalanches) {
            std::uint32_t n = founders(rng);
            for (int step = 0; n > 0 && step < 30; ++step) {
                counts.push_back(n);
                n = std::poisson_distribution<std::uint32_t>(sigma * n)(rng);
            }
            counts.push_back(0);
        }
        const double est = branching_ratio(counts);
        ok = ok && std::abs(est - sigma) <= 0.05;
        detail << "sigma=" << sigma << "->" << fmt(est) << " ";
    }
    detail << "(20000 avalanches each)";
    return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 4. transfer entropy

Outcome transfer()
{
    constexpr std::size_t bins = 100000;
    std::mt19937_64 rng(77);
    auto bernoulli = [&](double p) {
        std::bernoulli_distribution b(p);
        std::vector<std::uint8_t> x(bins);
        for (auto& v : x)
            v = b(rng);
        return x;
    };
    std::vector<std::vector<std::uint8_t>> independent;
    for (int c = 0; c < 8; ++c)
        independent.push_back(bernoulli(0.2));
    const double te_ind = mean_transfer_entropy(independent);

    const double p = 0.3;
    const auto src = bernoulli(p);
    std::vector<std::uint8_t> dst(bins, 0);
    for (std::size_t t = 1; t < bins; ++t)
        dst[t] = src[t - 1];
    // Empirical source entropy (bits) is the oracle for the copied information.
    double ones = 0.0;
    for (auto v : src)
        ones += v;
    const double q = ones / bins;
    const double h = -q * std::log2(q) - (1 - q) * std::log2(1 - q);
    const double te_copy = transfer_entropy(src, dst);
    const bool ok = te_ind < 0.01 && std::abs(te_copy - h) <= 0.05 * h;
    return {ok, "independent mean TE " + fmt(te_ind, 5) + " bits; delayed copy " + fmt(te_copy, 4) + " vs H=" +
                    fmt(h, 4)};
}

// ---------------------------------------------------------------------------
// 5. GPFA

struct GpfaData {
    FiringRateMatrix rates;
    Matrix loading;
};

GpfaData gp_sample(int channels, int q, int segments, int bins, double tau, double noise_sd, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const double dt = 100.0;
    Matrix k(bins, bins);
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b)
            k(a, b) = std::exp(-std::pow((a - b) * dt, 2) / (2 * tau * tau)) + (a == b ? 1e-6 : 0.0);
    const Matrix l = k.llt().matrixL();
    GpfaData s;
    s.loading.resize(channels, q);
    for (Eigen::Index i = 0; i < s.loading.size(); ++i)
        s.loading.data()[i] = 3.0 * g(rng);
    Matrix z(q, segments * bins);
    for (int seg = 0; seg < segments; ++seg)
        for (int i = 0; i < q; ++i) {
            Vector w(bins);
            for (int t = 0; t < bins; ++t)
                w(t) = g(rng);
            z.block(i, seg * bins, 1, bins) = (l * w).transpose();
        }
    s.rates.bin_width = dt;
    s.rates.values = (s.loading * z).colwise() + Vector::Constant(channels, 5.0);
    for (Eigen::Index i = 0; i < s.rates.values.size(); ++i)
        s.rates.values.data()[i] += noise_sd * g(rng);
    return s;
}

double largest_angle_deg(const Matrix& a, const Matrix& b)
{
    const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
    const double c = std::clamp(Eigen::JacobiSVD<Matrix>(qa.transpose() * qb).singularValues().minCoeff(), 0.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

Outcome gpfa()
{
    int violations = 0;
    for (int dataset = 0; dataset < 20; ++dataset) {
        const auto s = gp_sample(10 + dataset % 5, 2 + dataset % 2, 20, 10, 200.0 + 10.0 * dataset, 1.0,
                                 5000 + static_cast<std::uint64_t>(dataset));
        GpfaOptions opt;
        opt.latent_dim = 2 + dataset % 2;
        opt.max_iters = 40;
        opt.tol = 0.0;
        const auto ll = fit_gpfa(s.rates, opt).log_likelihoods;
        // Exact monotonicity up to floating-point rounding of the likelihood itself.
        for (std::size_t i = 1; i < ll.size(); ++i)
            violations += ll[i] < ll[i - 1] - 1e-9 * std::abs(ll[i - 1]);
    }
    const auto hi = gp_sample(30, 3, 60, 10, 300.0, 0.3, 99);
    GpfaOptions opt;
    opt.latent_dim = 3;
    const double angle = largest_angle_deg(fit_gpfa(hi.rates, opt).loading, hi.loading);
    return {violations == 0 && angle < 5.0,
            std::to_string(violations) + " LL decreases over 20 datasets; largest principal angle " + fmt(angle, 2) +
                " deg"};
}

// ---------------------------------------------------------------------------
// 6. categorization

SpikeTrainSet raster(double burst_hz, double background_hz, std::uint64_t seed)
{
    const double duration = 300000.0;
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> trains(60);
    if (burst_hz > 0.0)
        for (double onset = 700.0; onset + 40.0 < duration; onset += 1000.0 / burst_hz)
            for (std::size_t c = 0; c < trains.size(); ++c)
                for (int j = 0; j < 4; ++j)
                    trains[c].push_back(onset + 0.2 * c + 6.0 * j);
    if (background_hz > 0.0) {
        std::exponential_distribution<double> isi(background_hz / 1000.0);
        for (auto& t : trains)
            for (double x = isi(rng); x < duration; x += isi(rng))
                t.push_back(x);
    }
    for (auto& t : trains) {
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
    }
    return SpikeTrainSet(duration, trains);
}

Outcome categorization()
{
    struct Case {
        double burst, background;
        char want;
    };
    CategorizeParams p;
    p.compute_metrics = false;
    std::string detail;
    bool ok = true;
    std::uint64_t seed = 600;
    for (const auto c : {Case{0.4, 0.8, 'B'}, Case{0.6, 0.8, 'C'}, Case{0.6, 0.0, 'D'}, Case{0.0, 0.8, 'A'}}) {
        const char got = to_char(categorize(raster(c.burst, c.background, ++seed), p).type_label);
        ok = ok && got == c.want;
        detail += std::string(1, c.want) + "->" + got + " ";
    }
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// 7, 8, 12: paired Type-C runs

struct PairedRuns {
    RunReport naive, cc;
    double seconds = 0.0;
};

ExperimentConfig rc_config()
{
    ExperimentConfig c;
    c.seeds = kSeeds;
    return c;
}

const PairedRuns& paired()
{
    static const PairedRuns runs = [] {
        const auto t0 = std::chrono::steady_clock::now();
        PairedRuns r;
        auto c = rc_config();
        c.protocol = ProtocolKind::naive_rc;
        r.naive = run_naive_rc(c);
        c.protocol = ProtocolKind::cc_rc;
        r.cc = run_cc_rc(c);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }();
    return runs;
}

Outcome entrainment()
{
    const auto c = rc_config();
    int lower = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto off = entrainment_probe(c, seed, false), on = entrainment_probe(c, seed, true);
        lower += on.onset_phase_circular_variance < off.onset_phase_circular_variance;
        detail += fmt(on.onset_phase_circular_variance, 2) + "<" + fmt(off.onset_phase_circular_variance, 2) + " ";
    }
    return {lower == static_cast<int>(kSeeds.size()),
            std::to_string(lower) + "/" + std::to_string(kSeeds.size()) + " pairs lower with modulation (on<off: " +
                detail + ")"};
}

Outcome longevity()
{
    const auto& r = paired();
    double naive = 0.0, cc = 0.0;
    std::string detail;
    for (std::size_t i = 0; i < kSeeds.size(); ++i) {
        const double a = r.naive.runs[i].timeline.time_above(0.6), b = r.cc.runs[i].timeline.time_above(0.6);
        naive += a;
        cc += b;
        detail += fmt(b, 2) + "/" + fmt(a, 2) + " ";
    }
    naive /= kSeeds.size();
    cc /= kSeeds.size();
    const double ratio = naive > 0.0 ? cc / naive : (cc > 0.0 ? INFINITY : 0.0);
    return {ratio >= 2.0, "mean time above 60%: cc " + fmt(cc, 2) + " h vs naive " + fmt(naive, 2) + " h, ratio " +
                              fmt(ratio, 2) + " (per pair cc/naive h: " + detail + ")"};
}

Outcome naive_shape()
{
    // Seed-averaged naive timeline: argmax in the first quarter, final quarter below the first.
    const auto& runs = paired().naive.runs;
    const std::size_t rounds = runs.front().timeline.accuracies.size();
    std::vector<double> mean(rounds, 0.0);
    for (const auto& run : runs)
        for (std::size_t k = 0; k < rounds; ++k)
            mean[k] += run.timeline.accuracies[k] / runs.size();
    const std::size_t quarter = (rounds + 3) / 4;
    const auto peak = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
    const double first = std::accumulate(mean.begin(), mean.begin() + quarter, 0.0) / quarter;
    const double last = std::accumulate(mean.end() - quarter, mean.end(), 0.0) / quarter;
    return {peak < quarter && last < first, "peak at round " + std::to_string(peak + 1) + "/" +
                                                std::to_string(rounds) + "; first-quarter mean " + fmt(first) +
                                                ", final-quarter mean " + fmt(last)};
}

// ---------------------------------------------------------------------------
// 9, 10: knowledge transplant

const KtReports& kt()
{
    static const KtReports r = [] {
        ExperimentConfig c;
        c.protocol = ProtocolKind::kt;
        c.seeds = kSeeds;
        return run_kt(c);
    }();
    return r;
}

Outcome zero_shot()
{
    bool ok = true;
    std::string detail;
    for (const auto& s : kt().student.runs) {
        if (!s.zero_shot_accuracy || !s.expert_accuracy)
            return {false, "seed " + std::to_string(s.seed) + " has no zero-shot result"};
        const double gap = *s.zero_shot_accuracy - *s.expert_accuracy;
        ok = ok && std::abs(gap) <= 0.05;
        detail += fmt(*s.zero_shot_accuracy, 2) + "/" + fmt(*s.expert_accuracy, 2) + " ";
    }
    return {ok, "zero-shot/expert per seed: " + detail};
}

Outcome acceleration()
{
    bool ok = true;
    std::string detail;
    for (const auto& s : kt().student.runs) {
        const double budget = 0.2 * s.student_training_windows;
        ok = ok && s.kt_samples_to_target && *s.kt_samples_to_target <= budget;
        detail += (s.kt_samples_to_target ? std::to_string(*s.kt_samples_to_target) : std::string("never")) + "/" +
                  std::to_string(s.student_training_windows) + " ";
    }
    return {ok, "windows to scratch final / scratch windows: " + detail};
}

// ---------------------------------------------------------------------------
// 11. determinism

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

Outcome determinism()
{
    ExperimentConfig c;
    c.protocol = ProtocolKind::cc_rc;
    c.seeds = {7};
    const auto base = fs::temp_directory_path() / "ccrc-acceptance-determinism";
    fs::remove_all(base);
    const auto a = save_report(run_cc_rc(c), base / "a");
    const auto b = save_report(run_cc_rc(c), base / "b");
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
        same = a[i].filename() == b[i].filename() && slurp(a[i]) == slurp(b[i]);
    fs::remove_all(base);
    return {same, std::to_string(a.size()) + " report files " + (same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    std::vector<int> only;
    app.add_option("--only", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 12));
    CLI11_PARSE(app, argc, argv);

    // Shared runs are charged to the first criterion that needs them.
    const std::vector<Criterion> criteria{
        {1, "encoder exactness", 1, encoder_exact},
        {2, "ridge closed form", 10, ridge_oracle},
        {3, "branching ratio", 30, branching},
        {4, "transfer entropy", 60, transfer},
        {5, "GPFA", 120, gpfa},
        {6, "categorization", 10, categorization},
        {7, "entrainment", 300, entrainment},
        {8, "cc-RC longevity", 600, longevity},
        {9, "KT zero-shot", 300, zero_shot},
        {10, "KT acceleration", 600, acceleration},
        {11, "determinism", 600, determinism},
        {12, "naive-RC shape", 600, naive_shape},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failures = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = s < c.limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << fmt(s, 1) << " s" << (in_time ? "" : ", over the " + fmt(c.limit_s, 0) + " s limit") << ")"
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
