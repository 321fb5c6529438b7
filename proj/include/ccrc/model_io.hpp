#pragma once

// Shared model-file format:
//
//   #CCRC-MODEL 1
//   kind=<latent|attractor|readout|transplant|pipeline|run-report>
//   <key>=<value>            scalars, one per line
//   matrix <name> <rows> <cols>
//   <row of tab-separated values>  x rows
//   end
//
// Doubles use the shortest round-trip representation, so files reproduce
// the in-memory model bit for bit.

#include "ccrc/core.hpp"
#include "ccrc/latent.hpp"
#include "ccrc/readout.hpp"
#include "ccrc/transplant.hpp"

#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ccrc {

inline constexpr const char* kModelMagic = "#CCRC-MODEL 1";

struct ModelFile {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> scalars;
    std::vector<std::pair<std::string, Matrix>> matrices;

    void set(const std::string& key, const std::string& value) { scalars.emplace_back(key, value); }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }
    void put(const std::string& name, Matrix m) { matrices.emplace_back(name, std::move(m)); }

    const std::string& get(const std::string& key) const
    {
        for (const auto& [k, v] : scalars)
            if (k == key)
                return v;
        throw ValidationError("model file is missing key '" + key + "'");
    }
    bool has(const std::string& key) const
    {
        for (const auto& [k, v] : scalars)
            if (k == key)
                return true;
        return false;
    }
    double number(const std::string& key) const { return parse_double(get(key)); }
    int integer(const std::string& key) const { return static_cast<int>(parse_int(get(key))); }
    const Matrix& matrix(const std::string& name) const
    {
        for (const auto& [k, m] : matrices)
            if (k == name)
                return m;
        throw ValidationError("model file is missing matrix '" + name + "'");
    }
};

inline void write_model_file(std::ostream& os, const ModelFile& f)
{
    os << kModelMagic << '\n' << "kind=" << f.kind << '\n';
    for (const auto& [k, v] : f.scalars)
        os << k << '=' << v << '\n';
    for (const auto& [name, m] : f.matrices) {
        os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                os << (c ? "\t" : "") << format_double(m(r, c));
            os << '\n';
        }
    }
    os << "end\n";
}

inline ModelFile read_model_file(std::istream& is)
{
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && trim(line) == kModelMagic, "missing model file header");
    ModelFile f;
    bool ended = false;
    while (std::getline(is, line)) {
        const auto view = trim(line);
        if (view.empty())
            continue;
        if (view == "end") {
            ended = true;
            break;
        }
        if (view.starts_with("matrix ")) {
            const auto parts = split(view, ' ');
            require(parts.size() == 4, "malformed matrix header");
            const auto rows = parse_int(parts[2]), cols = parse_int(parts[3]);
            require(rows >= 0 && cols >= 0, "negative matrix dimensions");
            std::string name(parts[1]);  // parts view `line`, which the rows below overwrite
            Matrix m(rows, cols);
            for (long long r = 0; r < rows; ++r) {
                require(static_cast<bool>(std::getline(is, line)), "truncated matrix block");
                const auto cells = split(trim(line), '\t');
                require(static_cast<long long>(cells.size()) == cols || (cols == 0 && cells.size() <= 1),
                        "matrix row has the wrong number of columns");
                for (long long c = 0; c < cols; ++c)
                    m(r, c) = parse_double(cells[static_cast<std::size_t>(c)]);
            }
            f.matrices.emplace_back(std::move(name), std::move(m));
            continue;
        }
        const auto eq = view.find('=');
        require(eq != std::string_view::npos, "malformed model file line: " + std::string(view));
        const std::string key(view.substr(0, eq)), value(view.substr(eq + 1));
        if (key == "kind" && f.kind.empty())
            f.kind = value;
        else
            f.scalars.emplace_back(key, value);
    }
    require(ended, "model file is missing its end marker");
    require(!f.kind.empty(), "model file is missing its kind");
    return f;
}

/// Embed `part` under "<name>." so several models can share one file.
inline void nest(ModelFile& into, const std::string& name, const ModelFile& part)
{
    into.set(name + ".kind", part.kind);
    for (const auto& [k, v] : part.scalars)
        into.set(name + "." + k, v);
    for (const auto& [k, m] : part.matrices)
        into.put(name + "." + k, m);
}

inline bool has_part(const ModelFile& f, const std::string& name) { return f.has(name + ".kind"); }

inline ModelFile part(const ModelFile& f, const std::string& name)
{
    ModelFile out;
    out.kind = f.get(name + ".kind");
    const auto prefix = name + ".";
    for (const auto& [k, v] : f.scalars)
        if (k.starts_with(prefix) && k != prefix + "kind")
            out.scalars.emplace_back(k.substr(prefix.size()), v);
    for (const auto& [k, m] : f.matrices)
        if (k.starts_with(prefix))
            out.matrices.emplace_back(k.substr(prefix.size()), m);
    return out;
}

namespace model_io_detail {

inline Matrix column(const Vector& v) { return v; }
inline Matrix row_of(const std::vector<double>& v)
{
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        m(0, static_cast<Eigen::Index>(i)) = v[i];
    return m;
}
inline std::vector<double> to_vector(const Matrix& m)
{
    return std::vector<double>(m.data(), m.data() + m.size());
}
inline Matrix labels_row(const std::vector<int>& labels)
{
    Matrix m(1, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        m(0, static_cast<Eigen::Index>(i)) = labels[i];
    return m;
}
inline std::vector<int> to_labels(const Matrix& m)
{
    std::vector<int> out;
    for (Eigen::Index i = 0; i < m.size(); ++i)
        out.push_back(static_cast<int>(m.data()[i]));
    return out;
}
inline void expect_kind(const ModelFile& f, const char* kind)
{
    require(f.kind == kind, std::string("expected a ") + kind + " model, found '" + f.kind + "'");
}

}  // namespace model_io_detail

inline ModelFile to_model_file(const LatentModel& m)
{
    using namespace model_io_detail;
    ModelFile f;
    f.kind = "latent";
    f.set("latent_dim", m.latent_dim());
    f.set("channels", m.channel_count());
    f.set("bin_width_ms", m.bin_width);
    f.set("gp_jitter", m.gp_jitter);
    f.set("segment_length", m.segment_length);
    f.put("loading", m.loading);
    f.put("offset", column(m.offset));
    f.put("noise", column(m.noise));
    f.put("gp_timescales", row_of(m.gp_timescales));
    f.put("rotation", m.rotation);
    f.put("log_likelihoods", row_of(m.log_likelihoods));
    return f;
}

inline LatentModel latent_from(const ModelFile& f)
{
    using namespace model_io_detail;
    expect_kind(f, "latent");
    LatentModel m;
    m.bin_width = f.number("bin_width_ms");
    m.gp_jitter = f.number("gp_jitter");
    m.segment_length = f.integer("segment_length");
    m.loading = f.matrix("loading");
    m.offset = f.matrix("offset");
    m.noise = f.matrix("noise");
    m.gp_timescales = to_vector(f.matrix("gp_timescales"));
    m.rotation = f.matrix("rotation");
    m.log_likelihoods = to_vector(f.matrix("log_likelihoods"));
    const int q = f.integer("latent_dim"), p = f.integer("channels");
    require(m.loading.rows() == p && m.loading.cols() == q && m.offset.size() == p && m.noise.size() == p &&
                static_cast<int>(m.gp_timescales.size()) == q && m.rotation.rows() == q && m.rotation.cols() == q,
            "latent model dimensions are inconsistent");
    require((m.noise.array() > 0.0).all(), "latent model noise must be positive");
    return m;
}

inline ModelFile to_model_file(const AttractorModel& a)
{
    using namespace model_io_detail;
    ModelFile f;
    f.kind = "attractor";
    f.set("source", a.source == AttractorSource::evoked ? "evoked" : "spontaneous");
    f.set("trajectory_count", a.trajectory_count);
    f.set("phase_bins", a.phase_bins);
    f.set("fallback", a.fallback ? 1 : 0);
    f.set("phase_variance_ratio", a.phase_variance_ratio);
    f.put("point_cloud", a.point_cloud);
    if (a.cycle)
        f.put("cycle", *a.cycle);
    const auto q = a.point_cloud.cols();
    Matrix keys(static_cast<Eigen::Index>(a.labeled_means.size()), 3);
    Matrix means(static_cast<Eigen::Index>(a.labeled_means.size()), q);
    for (std::size_t i = 0; i < a.labeled_means.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        keys(r, 0) = a.labeled_means[i].label;
        keys(r, 1) = a.labeled_means[i].phase_bin;
        keys(r, 2) = a.labeled_means[i].count;
        means.row(r) = a.labeled_means[i].point.transpose();
    }
    f.put("labeled_keys", keys);
    f.put("labeled_means", means);
    return f;
}

inline AttractorModel attractor_from(const ModelFile& f)
{
    model_io_detail::expect_kind(f, "attractor");
    AttractorModel a;
    const auto& src = f.get("source");
    require(src == "evoked" || src == "spontaneous", "unknown attractor source");
    a.source = src == "evoked" ? AttractorSource::evoked : AttractorSource::spontaneous;
    a.trajectory_count = f.integer("trajectory_count");
    a.phase_bins = f.integer("phase_bins");
    a.fallback = f.integer("fallback") != 0;
    a.phase_variance_ratio = f.number("phase_variance_ratio");
    a.point_cloud = f.matrix("point_cloud");
    for (const auto& [name, m] : f.matrices)
        if (name == "cycle")
            a.cycle = m;
    const auto& keys = f.matrix("labeled_keys");
    const auto& means = f.matrix("labeled_means");
    require(keys.rows() == means.rows() && keys.cols() == 3, "attractor labeled blocks are inconsistent");
    for (Eigen::Index r = 0; r < keys.rows(); ++r)
        a.labeled_means.push_back({static_cast<int>(keys(r, 0)), static_cast<int>(keys(r, 1)),
                                   means.row(r).transpose(), static_cast<int>(keys(r, 2))});
    return a;
}

inline void add_readout(ModelFile& f, const ReadoutModel& m, const std::string& prefix = "")
{
    f.set(prefix + "feature_space", to_string(m.feature_space));
    f.set(prefix + "ridge_lambda", m.ridge_lambda);
    f.put(prefix + "weights", m.weights);
    f.put(prefix + "bias", model_io_detail::column(m.bias));
    f.put(prefix + "class_labels", model_io_detail::labels_row(m.class_labels));
}

inline ReadoutModel readout_fields(const ModelFile& f, const std::string& prefix = "")
{
    ReadoutModel m;
    m.feature_space = parse_feature_space(f.get(prefix + "feature_space"));
    m.ridge_lambda = f.number(prefix + "ridge_lambda");
    m.weights = f.matrix(prefix + "weights");
    m.bias = f.matrix(prefix + "bias");
    m.class_labels = model_io_detail::to_labels(f.matrix(prefix + "class_labels"));
    require(m.bias.size() == m.weights.rows() && static_cast<Eigen::Index>(m.class_labels.size()) == m.weights.rows(),
            "readout dimensions are inconsistent");
    require(m.ridge_lambda >= 0.0, "ridge lambda must be non-negative");
    return m;
}

inline ModelFile to_model_file(const ReadoutModel& m)
{
    ModelFile f;
    f.kind = "readout";
    add_readout(f, m);
    return f;
}

inline ReadoutModel readout_from(const ModelFile& f)
{
    model_io_detail::expect_kind(f, "readout");
    return readout_fields(f);
}

inline ModelFile to_model_file(const TransplantRecord& t)
{
    ModelFile f;
    f.kind = "transplant";
    f.set("expert_id", t.expert_id);
    f.set("student_id", t.student_id);
    f.set("transform.ridge_lambda", t.transform.ridge_lambda);
    f.set("transform.fit_residual", t.transform.fit_residual);
    f.set("transform.probe_count", t.transform.probe_count);
    for (const auto& [k, v] : t.provenance)
        f.set("provenance." + k, v);
    f.put("transform.linear", t.transform.linear);
    f.put("transform.translation", model_io_detail::column(t.transform.translation));
    add_readout(f, t.transplanted_readout);
    return f;
}

inline TransplantRecord transplant_from(const ModelFile& f)
{
    model_io_detail::expect_kind(f, "transplant");
    TransplantRecord t;
    t.expert_id = f.get("expert_id");
    t.student_id = f.get("student_id");
    t.transform.ridge_lambda = f.number("transform.ridge_lambda");
    t.transform.fit_residual = f.number("transform.fit_residual");
    t.transform.probe_count = f.integer("transform.probe_count");
    for (const auto& [k, v] : f.scalars)
        if (k.starts_with("provenance."))
            t.provenance.emplace_back(k.substr(11), v);
    t.transform.linear = f.matrix("transform.linear");
    t.transform.translation = f.matrix("transform.translation");
    t.transplanted_readout = readout_fields(f);
    require(t.transplanted_readout.feature_space == FeatureSpace::latent, "transplanted readout must be latent-space");
    require(t.transform.translation.size() == t.transform.linear.rows(), "transform dimensions are inconsistent");
    return t;
}

}  // namespace ccrc
