#include "cmmmix/gower.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "cmmmix/error.hpp"

namespace cmmmix {
using detail::get_le;
using detail::put_le;

namespace {

constexpr char kCacheMagic[8] = {'C', 'M', 'M', 'X', 'D', 'I', 'S', 'T'};
constexpr std::uint32_t kCacheVersion = 1;

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  template <typename T>
  void add(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
};

}  // namespace

void validate_distance_spec(const DistanceSpec& spec) {
  if (spec.weights.size() != spec.variables.size())
    throw Error(ErrorCode::InvalidDistanceSpec, "weight count does not match variable count");
  if (!(spec.dstar >= 0.0 && spec.dstar <= 1.0))
    throw Error(ErrorCode::InvalidDistanceSpec, "d* must lie in [0, 1]");
  if (spec.variables.empty()) return;
  double total = 0.0;
  for (std::size_t j = 0; j < spec.weights.size(); ++j) {
    const double w = spec.weights[j];
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidDistanceSpec, "negative weight");
    total += w;
    const auto& v = spec.variables[j];
    if (v.kind == Kind::Continuous && w > 0.0 && !(v.range() > 0.0))
      throw Error(ErrorCode::ZeroRange,
                  "continuous fixed variable " + std::to_string(j) + " has zero range");
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorCode::InvalidDistanceSpec, "weights must sum to 1");
}

std::vector<DistanceVariable> distance_variables(const MixedDataset& data) {
  std::vector<DistanceVariable> vars;
  for (int c : data.layout().fixed) {
    const auto& spec = data.schema()[static_cast<std::size_t>(c)];
    DistanceVariable v;
    v.kind = spec.kind;
    v.levels = spec.levels;
    if (spec.categorical()) {
      v.lower = 1.0;
      v.upper = spec.levels;
    } else {
      const auto col = data.values().col(c);
      v.lower = data.rows() ? col.minCoeff() : 0.0;
      v.upper = data.rows() ? col.maxCoeff() : 0.0;
    }
    vars.push_back(v);
  }
  return vars;
}

DistanceSpec equal_weight_spec(const MixedDataset& data, double dstar) {
  DistanceSpec spec;
  spec.variables = distance_variables(data);
  const auto q = spec.variables.size();
  spec.weights.assign(q, q ? 1.0 / static_cast<double>(q) : 0.0);
  spec.dstar = dstar;
  return spec;
}

DistanceSpec weighted_spec(const MixedDataset& data, std::vector<double> weights, double dstar) {
  DistanceSpec spec;
  spec.variables = distance_variables(data);
  spec.weights = std::move(weights);
  spec.dstar = dstar;
  return spec;
}

double component_distance(const DistanceVariable& var, double a, double b) {
  switch (var.kind) {
    case Kind::Nominal: return a == b ? 0.0 : 1.0;
    case Kind::Ordinal: {
      a = std::clamp(a, 1.0, static_cast<double>(var.levels));
      b = std::clamp(b, 1.0, static_cast<double>(var.levels));
      return std::abs(a - b) / static_cast<double>(var.levels - 1);
    }
    case Kind::Continuous: {
      const double r = var.range();
      if (!(r > 0.0)) return 0.0;
      a = std::clamp(a, var.lower, var.upper);
      b = std::clamp(b, var.lower, var.upper);
      return std::abs(a - b) / r;
    }
  }
  return 0.0;
}

double gower_distance(std::span<const double> f, std::span<const double> g,
                      const DistanceSpec& spec) {
  double d = 0.0;
  for (std::size_t j = 0; j < spec.variables.size(); ++j) {
    const double w = spec.weights[j];
    if (w == 0.0) continue;
    d += w * component_distance(spec.variables[j], f[j], g[j]);
  }
  return d;
}

std::vector<int> neighborhood(std::span<const double> f, const Eigen::MatrixXd& locations,
                              const DistanceSpec& spec) {
  std::vector<int> eta;
  const auto q = spec.variables.size();
  std::vector<double> g(q);
  for (Eigen::Index h = 0; h < locations.rows(); ++h) {
    if (spec.dstar >= 1.0) {
      eta.push_back(static_cast<int>(h));
      continue;
    }
    for (std::size_t j = 0; j < q; ++j) g[j] = locations(h, static_cast<Eigen::Index>(j));
    if (gower_distance(f, g, spec) <= spec.dstar) eta.push_back(static_cast<int>(h));
  }
  return eta;
}

std::vector<double> pairwise_distances(const Eigen::MatrixXd& fixed, const DistanceSpec& spec) {
  const Eigen::Index n = fixed.rows();
  const auto q = static_cast<std::size_t>(fixed.cols());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  std::vector<double> a(q), b(q);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j) a[j] = fixed(i, static_cast<Eigen::Index>(j));
    for (Eigen::Index k = 0; k < i; ++k) {
      for (std::size_t j = 0; j < q; ++j) b[j] = fixed(k, static_cast<Eigen::Index>(j));
      out.push_back(gower_distance(a, b, spec));
    }
  }
  return out;
}

double avg_neighbor_fraction(std::span<const double> pairwise, const DistanceSpec& spec) {
  if (pairwise.empty()) return 1.0;
  std::size_t within = 0;
  for (double d : pairwise)
    if (d <= spec.dstar) ++within;
  return static_cast<double>(within) / static_cast<double>(pairwise.size());
}

double avg_neighbor_fraction(const Eigen::MatrixXd& fixed, const DistanceSpec& spec) {
  if (fixed.rows() < 2) throw Error(ErrorCode::TooFewRows, "need at least two rows");
  return avg_neighbor_fraction(pairwise_distances(fixed, spec), spec);
}

double solve_dstar(std::span<const double> pairwise, double target_r) {
  if (!(target_r > 0.0 && target_r <= 1.0))
    throw Error(ErrorCode::InvalidDistanceSpec, "target fraction must lie in (0, 1]");
  if (pairwise.empty()) throw Error(ErrorCode::TooFewRows, "need at least two rows");
  std::vector<double> sorted(pairwise.begin(), pairwise.end());
  std::sort(sorted.begin(), sorted.end());
  const auto m = static_cast<double>(sorted.size());
  // The j-th smallest value (1-based) covers at least j of m pairs.
  auto j = static_cast<std::size_t>(std::ceil(target_r * m - 1e-9));
  j = std::clamp<std::size_t>(j, 1, sorted.size());
  return sorted[j - 1];
}

double solve_dstar(const Eigen::MatrixXd& fixed, const DistanceSpec& spec, double target_r) {
  if (fixed.rows() < 2) throw Error(ErrorCode::TooFewRows, "need at least two rows");
  return solve_dstar(pairwise_distances(fixed, spec), target_r);
}

double avg_neighbor_fraction(const MixedDataset& data, const DistanceSpec& spec) {
  return avg_neighbor_fraction(data.fixed_matrix(), spec);
}

double solve_dstar(const MixedDataset& data, const DistanceSpec& spec, double target_r) {
  return solve_dstar(data.fixed_matrix(), spec, target_r);
}

std::uint64_t distance_content_hash(const Eigen::MatrixXd& fixed, const DistanceSpec& spec) {
  Fnv1a h;
  h.add(static_cast<std::uint64_t>(fixed.rows()));
  h.add(static_cast<std::uint64_t>(fixed.cols()));
  for (Eigen::Index i = 0; i < fixed.rows(); ++i)
    for (Eigen::Index j = 0; j < fixed.cols(); ++j) h.add(fixed(i, j));
  for (std::size_t j = 0; j < spec.variables.size(); ++j) {
    h.add(static_cast<std::uint32_t>(spec.variables[j].kind));
    h.add(static_cast<std::int32_t>(spec.variables[j].levels));
    h.add(spec.variables[j].lower);
    h.add(spec.variables[j].upper);
    h.add(spec.weights[j]);
  }
  return h.h;
}

void write_distance_cache(const std::filesystem::path& path, const Eigen::MatrixXd& fixed,
                          const DistanceSpec& spec, std::span<const double> pairwise) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kCacheMagic, sizeof(kCacheMagic));
  put_le(out, kCacheVersion);
  put_le(out, distance_content_hash(fixed, spec));
  put_le(out, static_cast<std::uint64_t>(fixed.rows()));
  for (double d : pairwise) put_le(out, d);
}

std::optional<std::vector<double>> read_distance_cache(const std::filesystem::path& path,
                                                       const Eigen::MatrixXd& fixed,
                                                       const DistanceSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
    return std::nullopt;
  std::uint32_t version = 0;
  std::uint64_t hash = 0, n = 0;
  if (!get_le(in, version) || version != kCacheVersion) return std::nullopt;
  if (!get_le(in, hash) || hash != distance_content_hash(fixed, spec)) return std::nullopt;
  if (!get_le(in, n) || n != static_cast<std::uint64_t>(fixed.rows())) return std::nullopt;
  std::vector<double> out(static_cast<std::size_t>(n * (n - 1) / 2));
  for (double& d : out)
    if (!get_le(in, d)) return std::nullopt;
  return out;
}

}  // namespace cmmmix
