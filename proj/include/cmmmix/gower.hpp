#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cmmmix/data.hpp"

namespace cmmmix {

/// Per-variable metadata for the Gower coefficient. `lower`/`upper` are the
/// observed range of a continuous variable (model scale); for categorical
/// variables they are 1 and `levels`.
struct DistanceVariable {
  Kind kind = Kind::Continuous;
  int levels = 0;
  double lower = 0.0;
  double upper = 1.0;

  double range() const { return upper - lower; }
};

/// Weighted Gower dissimilarity over the fixed variables plus the
/// neighborhood radius d*. With no fixed variables every distance is 0.
struct DistanceSpec {
  std::vector<double> weights;
  std::vector<DistanceVariable> variables;
  double dstar = 1.0;

  std::size_t size() const { return variables.size(); }
};

/// Throws InvalidDistanceSpec (weights negative / not summing to 1 within
/// 1e-12, d* outside [0, 1]) or ZeroRange.
void validate_distance_spec(const DistanceSpec& spec);

/// Variable metadata taken from the dataset's fixed columns.
std::vector<DistanceVariable> distance_variables(const MixedDataset& data);

/// Spec with w_j = 1/q on every fixed variable.
DistanceSpec equal_weight_spec(const MixedDataset& data, double dstar);

/// Spec with the given weights (one per fixed variable, schema order).
DistanceSpec weighted_spec(const MixedDataset& data, std::vector<double> weights, double dstar);

/// d_j for a single variable: |a-b|/(k-1) ordinal, |a-b|/range continuous
/// (both clamped into the observed range), 1{a != b} nominal.
double component_distance(const DistanceVariable& var, double a, double b);

double gower_distance(std::span<const double> f, std::span<const double> g,
                      const DistanceSpec& spec);

/// Global indices h (0-based, ascending) with d(f, locations.row(h)) <= d*.
std::vector<int> neighborhood(std::span<const double> f, const Eigen::MatrixXd& locations,
                              const DistanceSpec& spec);

/// Fraction of ordered pairs (i, i'), i != i', within d* of each other.
double avg_neighbor_fraction(const Eigen::MatrixXd& fixed, const DistanceSpec& spec);

/// Strict lower triangle, row-major: (1,0), (2,0), (2,1), (3,0), ...
std::vector<double> pairwise_distances(const Eigen::MatrixXd& fixed, const DistanceSpec& spec);

double avg_neighbor_fraction(std::span<const double> pairwise, const DistanceSpec& spec);
double avg_neighbor_fraction(const MixedDataset& data, const DistanceSpec& spec);

/// Smallest observed pairwise distance q with avg_neighbor_fraction(d* = q)
/// >= target_r. target_r in (0, 1].
double solve_dstar(const Eigen::MatrixXd& fixed, const DistanceSpec& spec, double target_r);
double solve_dstar(std::span<const double> pairwise, double target_r);
double solve_dstar(const MixedDataset& data, const DistanceSpec& spec, double target_r);

// Cached pairwise distances: "CMMXDIST", u32 version, u64 content hash,
// u64 n, then n(n-1)/2 little-endian float64 in pairwise_distances order.

std::uint64_t distance_content_hash(const Eigen::MatrixXd& fixed, const DistanceSpec& spec);

void write_distance_cache(const std::filesystem::path& path, const Eigen::MatrixXd& fixed,
                          const DistanceSpec& spec, std::span<const double> pairwise);

/// Returns the cached distances when the file exists and its hash matches.
std::optional<std::vector<double>> read_distance_cache(const std::filesystem::path& path,
                                                       const Eigen::MatrixXd& fixed,
                                                       const DistanceSpec& spec);

}  // namespace cmmmix
