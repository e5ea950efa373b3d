#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anogen/imaging.hpp"

namespace anogen {

enum class Provenance : std::uint8_t { Original, Smote, GanGenerated };

struct BalancedSet {
  std::vector<TraceImage> images;
  std::vector<Provenance> provenance;
  std::vector<std::string> warnings;

  std::size_t normal_count() const;
  std::size_t anomaly_count() const;
  std::size_t count(Provenance p) const;
};

using Point = std::vector<double>;

// Indices of the k nearest points to each point (itself excluded), by
// Euclidean distance, nearest first, ties broken by lower index. Distances
// are computed from norms and dot products, which is exact for
// integer-valued coordinates such as pixel bytes.
std::vector<std::vector<std::size_t>> nearest_neighbors(std::span<const Point> points, std::size_t k);

struct SmoteSample {
  std::size_t base = 0;      // index of the minority point x
  std::size_t neighbor = 0;  // index of the chosen neighbour nn
  double gap = 0;            // g in [0, 1)
  Point point;               // x + g (nn - x), unrounded
};

struct SmoteOptions {
  std::optional<double> fixed_gap;  // testing hook: use this g for every sample
};

// n_needed synthetic points. Each draw picks a base uniformly, one of its
// min(k, n-1) nearest neighbours uniformly, and a gap uniformly in [0,1).
// Throws DataError if fewer than 2 minority points are given and
// n_needed > 0.
std::vector<SmoteSample> smote_samples(std::span<const Point> minority, std::size_t k, std::size_t n_needed,
                                       std::uint64_t seed, const SmoteOptions& options = {});

// smote_samples(...) points only.
std::vector<Point> smote(std::span<const Point> minority, std::size_t k, std::size_t n_needed, std::uint64_t seed,
                         const SmoteOptions& options = {});

Point flatten(const TraceImage& image);
// Rounds half away from zero and clamps each coordinate to [0,255].
TraceImage to_image(const Point& p, Label label, std::string source_id);

inline constexpr std::size_t kDefaultSmoteK = 5;

// Appends SMOTE anomalies until the classes balance. Returns the input
// unchanged when no generation is needed.
BalancedSet balance_with_smote(std::span<const TraceImage> train, std::size_t k, std::uint64_t seed);

// Appends `generated`, recording a warning (not an error) when its size is
// not exactly the count needed to balance `train`.
BalancedSet balance_with_gan(std::span<const TraceImage> train, std::span<const TraceImage> generated);

BalancedSet as_unbalanced(std::span<const TraceImage> train);

}  // namespace anogen
