#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "anogen/errors.hpp"
#include "anogen/oversampling.hpp"
#include "anogen/rng.hpp"

using namespace anogen;

namespace {

std::vector<Point> integer_points(std::size_t n, std::size_t dims, std::size_t levels, Rng& rng) {
  std::vector<Point> pts(n, Point(dims));
  for (auto& p : pts)
    for (auto& v : p) v = static_cast<double>(rng.uniform_index(levels));
  return pts;
}

// O(n^2) neighbours from direct squared differences, ties by index.
std::vector<std::vector<std::size_t>> brute_knn(const std::vector<Point>& pts, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      double s = 0;
      for (std::size_t c = 0; c < pts[i].size(); ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
      d.emplace_back(s, j);
    }
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> row;
    for (std::size_t r = 0; r < std::min(k, d.size()); ++r) row.push_back(d[r].second);
    out.push_back(row);
  }
  return out;
}

TEST(NearestNeighbors, MatchesBruteForce) {
  Rng rng(1);
  for (const std::size_t levels : {3u, 256u}) {  // few levels -> many distance ties
    const auto pts = integer_points(200, 16, levels, rng);
    EXPECT_EQ(nearest_neighbors(pts, 5), brute_knn(pts, 5));
  }
}

TEST(NearestNeighbors, KIsCappedAtNMinusOne) {
  Rng rng(2);
  const auto pts = integer_points(3, 4, 10, rng);
  for (const auto& row : nearest_neighbors(pts, 5)) EXPECT_EQ(row.size(), 2u);
}

TEST(Smote, SamplesLieOnParentSegments) {
  Rng rng(3);
  const auto pts = integer_points(40, 32, 256, rng);
  const auto nbrs = nearest_neighbors(pts, 5);
  const auto samples = smote_samples(pts, 5, 500, 9);
  ASSERT_EQ(samples.size(), 500u);
  for (const auto& s : samples) {
    ASSERT_LT(s.base, pts.size());
    EXPECT_NE(std::find(nbrs[s.base].begin(), nbrs[s.base].end(), s.neighbor), nbrs[s.base].end());
    EXPECT_GE(s.gap, 0.0);
    EXPECT_LT(s.gap, 1.0);
    for (std::size_t d = 0; d < 32; ++d) {
      const double x = pts[s.base][d], n = pts[s.neighbor][d];
      EXPECT_EQ(s.point[d], x + s.gap * (n - x));
      EXPECT_GE(s.point[d], std::min(x, n));
      EXPECT_LE(s.point[d], std::max(x, n));
    }
  }
}

TEST(Smote, FixedGapHitsTheEndpoints) {
  Rng rng(4);
  const auto pts = integer_points(10, 8, 256, rng);
  for (const auto& s : smote_samples(pts, 3, 20, 1, {0.0})) EXPECT_EQ(s.point, pts[s.base]);
  for (const auto& s : smote_samples(pts, 3, 20, 1, {1.0})) EXPECT_EQ(s.point, pts[s.neighbor]);
}

TEST(Smote, DeterministicAndValidated) {
  Rng rng(5);
  const auto pts = integer_points(10, 8, 256, rng);
  EXPECT_EQ(smote(pts, 5, 30, 77), smote(pts, 5, 30, 77));
  EXPECT_NE(smote(pts, 5, 30, 77), smote(pts, 5, 30, 78));
  EXPECT_THROW(smote(std::vector<Point>{pts[0]}, 5, 3, 1), DataError);
  EXPECT_THROW(smote(pts, 0, 3, 1), DataError);
  EXPECT_TRUE(smote(std::vector<Point>{}, 5, 0, 1).empty());
}

TEST(ToImage, RoundsHalfAwayFromZeroAndClamps) {
  Point p(kImagePixels, 0.0);
  p[0] = 2.5;
  p[1] = 2.4999;
  p[2] = -3.0;
  p[3] = 300.0;
  const auto img = to_image(p, Label::Anomaly, "s");
  EXPECT_EQ(img.pixels[0], 3);
  EXPECT_EQ(img.pixels[1], 2);
  EXPECT_EQ(img.pixels[2], 0);
  EXPECT_EQ(img.pixels[3], 255);
}

std::vector<TraceImage> random_images(std::size_t normal, std::size_t anomaly, Rng& rng) {
  std::vector<TraceImage> out(normal + anomaly);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (auto& px : out[i].pixels) px = static_cast<std::uint8_t>(rng.uniform_index(256));
    out[i].label = i < normal ? Label::Normal : Label::Anomaly;
  }
  return out;
}

TEST(BalanceWithSmote, AppendsExactlyTheDeficit) {
  Rng rng(6);
  const auto train = random_images(300, 40, rng);
  const auto b = balance_with_smote(train, kDefaultSmoteK, 1);
  EXPECT_EQ(b.count(Provenance::Smote), 260u);
  EXPECT_EQ(b.count(Provenance::Original), 340u);
  EXPECT_EQ(b.normal_count(), b.anomaly_count());
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(b.images[i], train[i]);
  const auto already = balance_with_smote(random_images(10, 12, rng), 5, 1);
  EXPECT_EQ(already.count(Provenance::Smote), 0u);
}

TEST(BalanceWithGan, WarnsOnCountMismatchAndRelabels) {
  Rng rng(7);
  const auto train = random_images(5, 2, rng);
  auto gen = random_images(3, 0, rng);
  const auto exact = balance_with_gan(train, gen);
  EXPECT_EQ(exact.count(Provenance::GanGenerated), 3u);
  EXPECT_EQ(exact.anomaly_count(), 5u);
  EXPECT_EQ(exact.warnings.size(), 3u);  // three relabelled, count is right
  gen.pop_back();
  const auto short_by_one = balance_with_gan(train, gen);
  EXPECT_EQ(short_by_one.images.size(), 9u);
  EXPECT_NE(short_by_one.warnings.front().find("required"), std::string::npos);
}

}  // namespace
