#include "anogen/oversampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "anogen/errors.hpp"
#include "anogen/rng.hpp"

namespace anogen {

std::size_t BalancedSet::normal_count() const {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const auto& i) { return i.label == Label::Normal; }));
}

std::size_t BalancedSet::anomaly_count() const { return images.size() - normal_count(); }

std::size_t BalancedSet::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p));
}

std::vector<std::vector<std::size_t>> nearest_neighbors(std::span<const Point> points, std::size_t k) {
  const std::size_t n = points.size();
  k = std::min(k, n == 0 ? 0 : n - 1);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::inner_product(points[i].begin(), points[i].end(), points[i].begin(), 0.0);
  }
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dot = std::inner_product(points[i].begin(), points[i].end(), points[j].begin(), 0.0);
      cand.emplace_back(norms[i] + norms[j] - 2.0 * dot, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    out[i].reserve(k);
    for (std::size_t r = 0; r < k; ++r) out[i].push_back(cand[r].second);
  }
  return out;
}

std::vector<SmoteSample> smote_samples(std::span<const Point> minority, std::size_t k, std::size_t n_needed,
                                       std::uint64_t seed, const SmoteOptions& options) {
  if (n_needed == 0) return {};
  if (minority.size() < 2) {
    throw DataError("smote: need at least 2 minority samples, got " + std::to_string(minority.size()));
  }
  if (k == 0) throw DataError("smote: k must be at least 1");
  const auto neighbors = nearest_neighbors(minority, k);
  Rng rng(seed);
  std::vector<SmoteSample> out;
  out.reserve(n_needed);
  for (std::size_t s = 0; s < n_needed; ++s) {
    SmoteSample sample;
    sample.base = rng.uniform_index(minority.size());
    const auto& nbrs = neighbors[sample.base];
    sample.neighbor = nbrs[rng.uniform_index(nbrs.size())];
    const double drawn = rng.uniform();
    sample.gap = options.fixed_gap.value_or(drawn);
    const Point& x = minority[sample.base];
    const Point& nn = minority[sample.neighbor];
    sample.point.resize(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) sample.point[d] = x[d] + sample.gap * (nn[d] - x[d]);
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<Point> smote(std::span<const Point> minority, std::size_t k, std::size_t n_needed, std::uint64_t seed,
                         const SmoteOptions& options) {
  std::vector<Point> out;
  for (auto& s : smote_samples(minority, k, n_needed, seed, options)) out.push_back(std::move(s.point));
  return out;
}

Point flatten(const TraceImage& image) { return Point(image.pixels.begin(), image.pixels.end()); }

TraceImage to_image(const Point& p, Label label, std::string source_id) {
  TraceImage img;
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(p.at(i)), 0.0, 255.0));
  }
  img.label = label;
  img.source_id = std::move(source_id);
  return img;
}

BalancedSet as_unbalanced(std::span<const TraceImage> train) {
  BalancedSet out;
  out.images.assign(train.begin(), train.end());
  out.provenance.assign(train.size(), Provenance::Original);
  return out;
}

BalancedSet balance_with_smote(std::span<const TraceImage> train, std::size_t k, std::uint64_t seed) {
  BalancedSet out = as_unbalanced(train);
  const std::size_t normals = out.normal_count(), anomalies = out.anomaly_count();
  if (anomalies >= normals) return out;
  std::vector<Point> minority;
  for (const auto& img : train) {
    if (img.label == Label::Anomaly) minority.push_back(flatten(img));
  }
  const auto samples = smote_samples(minority, k, normals - anomalies, seed);
  char id[40];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(id, sizeof id, "smote/%06zu", i);
    out.images.push_back(to_image(samples[i].point, Label::Anomaly, id));
    out.provenance.push_back(Provenance::Smote);
  }
  return out;
}

BalancedSet balance_with_gan(std::span<const TraceImage> train, std::span<const TraceImage> generated) {
  BalancedSet out = as_unbalanced(train);
  const std::size_t normals = out.normal_count(), anomalies = out.anomaly_count();
  const std::size_t required = normals > anomalies ? normals - anomalies : 0;
  if (generated.size() != required) {
    out.warnings.push_back("balance_with_gan: " + std::to_string(generated.size()) +
                           " generated images supplied, " + std::to_string(required) + " required to balance");
  }
  for (const auto& g : generated) {
    if (g.label != Label::Anomaly) {
      out.warnings.push_back("balance_with_gan: generated image '" + g.source_id + "' relabelled as anomaly");
    }
    TraceImage img = g;
    img.label = Label::Anomaly;
    out.images.push_back(std::move(img));
    out.provenance.push_back(Provenance::GanGenerated);
  }
  return out;
}

}  // namespace anogen
