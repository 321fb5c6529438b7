#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ccrc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when inputs violate a documented precondition (CLI exit code 2).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot be completed numerically (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw ValidationError(message);
}

inline void require_finite(double value, const char* what)
{
    if (!std::isfinite(value))
        throw ValidationError(std::string(what) + " must be finite");
}

/// SplitMix64 finalizer. Used to derive independent child seeds from a root.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag)
{
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

/// Child seed for a named stream, optionally indexed (e.g. per round).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0)
{
    return mix_seed(mix_seed(root ^ hash_tag(tag)) + index);
}

/// Shortest decimal representation that parses back to the identical double.
inline std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc())
        throw NumericalError("cannot format value");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view text)
{
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ValidationError("malformed number: '" + std::string(text) + "'");
    return value;
}

inline long long parse_int(std::string_view text)
{
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ValidationError("malformed integer: '" + std::string(text) + "'");
    return value;
}

inline std::vector<std::string_view> split(std::string_view text, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(text.substr(start));
            return parts;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

/// Count of singular values above `tolerance` times the largest one.
inline int effective_rank(const Matrix& m, double tolerance)
{
    if (m.size() == 0)
        return 0;
    Eigen::BDCSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= 0.0)
        return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tolerance * s(0))
            ++rank;
    return rank;
}

}  // namespace ccrc
