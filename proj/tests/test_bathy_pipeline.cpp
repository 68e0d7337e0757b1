#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "lakekeeper/bathy_pipeline.hpp"
#include "test_support.hpp"

using namespace lakekeeper;

namespace {

const GridSpec kGrid{{0, 0, 0}, 0.5, 20, 20};

Sounding at(double e, double n, double depth) {
  Sounding s;
  s.position = {e, n, depth};
  s.depth = depth;
  return s;
}

/// Naive median for the oracle: sort a copy and pick the middle.
double naive_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

WeedHeightMap uniform_map(const GridSpec& g, double h) { return {RasterD(g, h), "pre", "post"}; }

}  // namespace

TEST(BathyPipeline, GeoreferenceFortyFiveDegreeBeam) {
  SonarPing p;
  p.pose = Pose2D({10, 20, 0}, 0.0);  // heading east, starboard is south
  BeamReturn b;
  b.beam_index = 7;
  b.angle = std::numbers::pi / 4;
  b.two_way_time = 2.0 * 4.243 / 1480.0;
  b.intensity = -15.0;
  p.returns = {b};
  const auto s = georeference(p, SvpCast::constant(1480.0), 3);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0].position.east, 10.0, 1e-9);
  EXPECT_NEAR(s[0].position.north, 20.0 - 3.0, 1e-3);
  EXPECT_NEAR(s[0].depth, 3.0, 1e-3);
  EXPECT_EQ(s[0].ping_id, 3u);
  EXPECT_EQ(s[0].beam, 7);
}

TEST(BathyPipeline, GeoreferenceSkipsGatedBeams) {
  SonarPing p;
  p.pose = Pose2D({0, 0, 0}, 1.0);
  BeamReturn gated;
  gated.angle = 0.5;
  p.returns = {gated};
  EXPECT_TRUE(georeference(p, SvpCast::constant(1480.0)).empty());
}

TEST(BathyPipeline, GeoreferenceInvertsSimulatedFlatBed) {
  const GridSpec extent{{-20, -20, 0}, 0.25, 160, 160};
  const LakeTruth t = synth_lake(extent, BedParams{3.0, 0, 50}, {}, {}, 1);
  const SvpCast cast{{{0, 1481}, {3, 1480.2}, {6, 1479}}, {}};
  std::mt19937_64 rng(1);
  testkit::Gen gen(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose2D pose({gen.uniform(-5, 5), gen.uniform(-5, 5), 0}, gen.uniform(-3.1, 3.1));
    // Nominal depth makes the simulated two-way time consistent with the cast.
    const SonarPing p = ping(pose, t, SonarSpec{}.noise_free(), effective_speed(cast, 3.0), rng);
    const auto s = georeference(p, cast);
    ASSERT_FALSE(s.empty());
    for (const auto& x : s) EXPECT_NEAR(x.depth, 3.0, 2e-3);
  }
}

TEST(BathyPipeline, GriddingMedianExamples) {
  EXPECT_NEAR(grid_soundings({at(1.1, 1.1, 3.0), at(1.2, 1.2, 3.1), at(1.3, 1.3, 3.2)}, kGrid).at(2, 2), 3.1, 1e-12);
  // A spike is rejected and does not move the median.
  EXPECT_NEAR(grid_soundings({at(1.1, 1.1, 3.0), at(1.2, 1.2, 3.1), at(1.3, 1.3, 3.2), at(1.4, 1.4, 9.9)}, kGrid)
                  .at(2, 2),
              3.1, 1e-12);
  EXPECT_TRUE(is_nodata(grid_soundings({at(1.1, 1.1, 3.0), at(1.2, 1.2, 3.1)}, kGrid).at(2, 2)));
  EXPECT_TRUE(is_nodata(grid_soundings({}, kGrid).at(0, 0)));
  // Soundings outside the grid are ignored.
  EXPECT_NO_THROW(grid_soundings({at(-1, -1, 3.0), at(100, 0, 3.0)}, kGrid));
}

TEST(BathyPipeline, GriddingAgainstNaiveOracle) {
  testkit::Gen gen(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.integer(3, 25);
    std::vector<Sounding> s;
    std::vector<double> depths;
    for (int i = 0; i < n; ++i) {
      const double d = gen.coin() && i > 2 ? gen.uniform(0.0, 10.0) : 3.0 + gen.uniform(-0.1, 0.1);
      s.push_back(at(2.1 + gen.uniform(0, 0.35), 3.1 + gen.uniform(0, 0.35), d));
      depths.push_back(d);
    }
    const double med = naive_median(depths);
    std::vector<double> dev;
    for (double d : depths) dev.push_back(std::abs(d - med));
    const double limit = 3.0 * 1.4826 * naive_median(dev);
    std::vector<double> kept;
    for (double d : depths)
      if (std::abs(d - med) <= limit) kept.push_back(d);
    EXPECT_NEAR(grid_soundings(s, kGrid).at(4, 6), naive_median(kept), 1e-12);
  }
}

TEST(BathyPipeline, GriddingBoundsSpikeInfluence) {
  // Property: with fewer spikes than clean soundings, the cell value stays
  // inside the range of the clean soundings.
  testkit::Gen gen(22);
  for (int trial = 0; trial < 200; ++trial) {
    const int clean = gen.integer(3, 15);
    const int spikes = gen.integer(0, clean - 1);
    std::vector<Sounding> s;
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < clean; ++i) {
      const double d = 3.0 + gen.uniform(-0.05, 0.05);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      s.push_back(at(0.1, 0.1, d));
    }
    for (int i = 0; i < spikes; ++i) s.push_back(at(0.2, 0.2, gen.uniform(5, 50)));
    const double v = grid_soundings(s, kGrid).at(0, 0);
    EXPECT_GE(v, lo - 1e-12);
    EXPECT_LE(v, hi + 1e-12);
  }
}

TEST(BathyPipeline, DiffExamples) {
  RasterD pre(kGrid, 3.2), post(kGrid, 4.0);
  pre.at(1, 1) = 4.0;
  post.at(1, 1) = 4.02;
  pre.at(2, 2) = kNoData;
  const WeedHeightMap m = diff_grids(pre, post, 0.1);
  EXPECT_NEAR(m.height.at(0, 0), 0.8, 1e-12);
  EXPECT_EQ(m.height.at(1, 1), 0.0);
  EXPECT_TRUE(is_nodata(m.height.at(2, 2)));
  EXPECT_THROW(diff_grids(pre, RasterD(GridSpec{{0, 0, 0}, 0.5, 10, 10}, 4.0)), ConfigError);
}

TEST(BathyPipeline, DiffSwapIsFlooredToZero) {
  // Swapping pre and post turns a real height into a negative one, which the
  // floor removes: only one direction can show growth above the floor.
  testkit::Gen gen(23);
  RasterD a(kGrid), b(kGrid);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = gen.uniform(2.0, 4.0);
    b[i] = gen.uniform(2.0, 4.0);
  }
  const auto ab = diff_grids(a, b, 0.15), ba = diff_grids(b, a, 0.15);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(ab.height[i] > 0 && ba.height[i] > 0);
    const double raw = b[i] - a[i];
    EXPECT_EQ(ab.height[i], raw < 0.15 ? 0.0 : raw);
  }
}

TEST(BathyPipeline, MeanHeight) {
  RasterD h(GridSpec{{0, 0, 0}, 1.0, 3, 2}, 0.0);
  h.at(0, 0) = 0.7;
  h.at(1, 0) = 0.8;
  h.at(2, 0) = 0.9;
  h.at(0, 1) = kNoData;
  const WeedHeightMap m{h, "a", "b"};
  EXPECT_NEAR(mean_height(m), 0.8, 1e-12);
  EXPECT_NEAR(mean_height(m, Polygon{{0, 0, 0}, {1.6, 0, 0}, {1.6, 1, 0}, {0, 1, 0}}), 0.75, 1e-12);
  EXPECT_THROW(mean_height(uniform_map(kGrid, 0.0)), DomainError);
  Raster<std::uint8_t> mask(h.spec(), std::uint8_t{0});
  mask.at(2, 0) = 1;
  EXPECT_NEAR(mean_height(m, mask), 0.9, 1e-12);
}

TEST(BathyPipeline, ClusterVolumeAndLoad) {
  RasterD h(kGrid, 0.0);
  for (int r = 5; r < 15; ++r)
    for (int c = 5; c < 15; ++c) h.at(c, r) = 0.8;
  const auto clusters = extract_clusters(WeedHeightMap{h, "pre", "post"}, 0.0, 0.2);
  ASSERT_EQ(clusters.size(), 1u);
  const WeedCluster& c = clusters[0];
  EXPECT_EQ(c.id, 1);
  EXPECT_EQ(c.cells.size(), 100u);
  EXPECT_NEAR(c.area, 25.0, 1e-12);
  EXPECT_NEAR(c.volume, 20.0, 1e-9);
  EXPECT_NEAR(c.load_volume, 4.0, 1e-9);
  EXPECT_NEAR(c.mean_height, 0.8, 1e-12);
  EXPECT_NEAR(c.centroid.east, 5.0, 1e-12);
  EXPECT_NEAR(c.centroid.north, 5.0, 1e-12);
  EXPECT_NEAR(signed_area(c.polygon), 25.0, 1e-12);
  EXPECT_EQ(c.polygon.size(), 4u);
  EXPECT_TRUE(c.holes.empty());
}

TEST(BathyPipeline, ClusterMinAreaAndConnectivity) {
  RasterD h(kGrid, 0.0);
  h.at(1, 1) = 0.5;  // a single 0.25 m^2 cell
  h.at(5, 5) = h.at(6, 5) = h.at(5, 6) = h.at(6, 6) = 0.5;
  h.at(7, 7) = 0.5;  // diagonal neighbour: separate under 4-connectivity
  const WeedHeightMap m{h, "pre", "post"};
  EXPECT_EQ(extract_clusters(m, 0.0).size(), 3u);
  const auto big = extract_clusters(m, 0.5);
  ASSERT_EQ(big.size(), 1u);
  EXPECT_EQ(big[0].cells.size(), 4u);
  EXPECT_THROW(extract_clusters(m, -1.0), DomainError);
}

TEST(BathyPipeline, ClusterWithHoleHasInnerRing) {
  RasterD h(kGrid, 0.0);
  for (int r = 2; r < 7; ++r)
    for (int c = 2; c < 7; ++c) h.at(c, r) = (r == 4 && c == 4) ? 0.0 : 0.6;
  const auto clusters = extract_clusters(WeedHeightMap{h, "pre", "post"}, 0.0);
  ASSERT_EQ(clusters.size(), 1u);
  ASSERT_EQ(clusters[0].holes.size(), 1u);
  EXPECT_NEAR(signed_area(clusters[0].polygon), 25 * 0.25, 1e-12);
  EXPECT_NEAR(signed_area(clusters[0].holes[0]), -0.25, 1e-12);
}

TEST(BathyPipeline, ClusterPartitionProperty) {
  // Every positive cell belongs to exactly one cluster, and cluster volumes sum
  // to the map volume.
  testkit::Gen gen(24);
  for (int trial = 0; trial < 20; ++trial) {
    RasterD h(kGrid, 0.0);
    double total = 0.0;
    std::size_t positive = 0;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (gen.uniform(0, 1) < 0.4) {
        h[i] = gen.uniform(0.2, 1.2);
        total += h[i] * 0.25;
        ++positive;
      }
    const auto clusters = extract_clusters(WeedHeightMap{h, "pre", "post"}, 0.0);
    std::size_t cells = 0;
    double volume = 0.0, ring_area = 0.0;
    for (const auto& c : clusters) {
      cells += c.cells.size();
      volume += c.volume;
      ring_area += signed_area(c.polygon);
      for (const auto& hole : c.holes) ring_area += signed_area(hole);
    }
    EXPECT_EQ(cells, positive);
    EXPECT_NEAR(volume, total, 1e-9);
    EXPECT_NEAR(ring_area, positive * 0.25, 1e-9);
  }
}

TEST(BathyPipeline, NoiseFreeSurveyRecoversVolume) {
  // Noise-free pre survey over a patch, post survey over the bare bed: the
  // differenced volume matches the truth canopy volume above the floor.
  const GridSpec extent{{-10, -10, 0}, 0.25, 160, 120};
  const std::vector<WeedPatchSpec> patches{{{12, 10, 0}, 6.0, 1.4, 0.0, 0.2}};
  const LakeTruth pre_truth = synth_lake(extent, BedParams{3.0, 0, 50}, patches, {}, 5);
  const LakeTruth post_truth = synth_lake(extent, BedParams{3.0, 0, 50}, {}, {}, 5);
  const SonarSpec spec = SonarSpec{}.noise_free();
  const auto lines = lawnmower_path(Rect{0, 0, 25, 20}, 3.0);
  std::mt19937_64 rng(1);
  const auto pre = georeference_all(survey_lines(lines, 3 * kKnot, spec, pre_truth, 1480.0, rng), SvpCast::constant(1480.0));
  const auto post = georeference_all(survey_lines(lines, 3 * kKnot, spec, post_truth, 1480.0, rng), SvpCast::constant(1480.0));
  const GridSpec g{{0, 0, 0}, 0.5, 50, 40};
  const WeedHeightMap m = diff_grids(grid_soundings(pre, g), grid_soundings(post, g), 0.15);

  double measured = 0.0, truth = 0.0;
  for (std::size_t i = 0; i < m.height.size(); ++i) {
    if (!is_nodata(m.height[i])) measured += m.height[i] * g.cell_area();
    // Truth: canopy above the floor, averaged over the four fine cells in each coarse cell.
    const EnuPoint c = cell_center(g.unlinear(i), g);
    for (double de : {-0.125, 0.125})
      for (double dn : {-0.125, 0.125}) {
        const double h = *pre_truth.canopy_height.sample({c.east + de, c.north + dn, 0});
        truth += (h >= 0.15 ? h : 0.0) * g.cell_area() / 4.0;
      }
  }
  ASSERT_GT(truth, 10.0);
  EXPECT_NEAR(measured / truth, 1.0, 0.02);
}

TEST(BathyPipeline, GeoJsonRoundTrip) {
  RasterD h(kGrid, 0.0);
  for (int r = 2; r < 6; ++r)
    for (int c = 3; c < 9; ++c) h.at(c, r) = 0.8;
  for (int r = 10; r < 14; ++r)
    for (int c = 10; c < 12; ++c) h.at(c, r) = 0.4;
  const auto clusters = extract_clusters(WeedHeightMap{h, "pre", "post"}, 0.0);
  testkit::TempDir dir("geojson");
  write_clusters(clusters, dir / "c.geojson");
  const auto back = read_clusters(dir / "c.geojson");
  ASSERT_EQ(back.size(), clusters.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, clusters[i].id);
    EXPECT_EQ(back[i].polygon, clusters[i].polygon);
    EXPECT_EQ(back[i].cells.size(), clusters[i].cells.size());
    EXPECT_NEAR(back[i].area, clusters[i].area, 1e-12);
    EXPECT_NEAR(back[i].load_volume, clusters[i].load_volume, 1e-12);
    EXPECT_NEAR(back[i].centroid.east, clusters[i].centroid.east, 1e-9);
    EXPECT_NEAR(back[i].centroid.north, clusters[i].centroid.north, 1e-9);
  }
  const auto fc = clusters_to_geojson(clusters);
  EXPECT_EQ(fc["features"][0]["geometry"]["coordinates"][0].front(),
            fc["features"][0]["geometry"]["coordinates"][0].back());
  EXPECT_THROW(clusters_from_geojson(nlohmann::json{{"type", "Feature"}}), ConfigError);
}

TEST(BathyPipeline, PipelineIsDeterministic) {
  const GridSpec extent{{-10, -10, 0}, 0.25, 120, 120};
  const LakeTruth t = synth_lake(extent, BedParams{3.0, 0.2, 15}, {{{8, 8, 0}, 4.0, 1.2, 0.05, 0.2}}, {}, 8);
  auto run = [&] {
    std::mt19937_64 rng(77);
    const auto pings = survey_lines(lawnmower_path(Rect{0, 0, 16, 16}, 4.0), 3 * kKnot, SonarSpec{}, t, 1480.0, rng);
    return grid_soundings(georeference_all(pings, SvpCast::constant(1480.0)), GridSpec{{0, 0, 0}, 0.5, 32, 32});
  };
  EXPECT_EQ(esri::to_string(run()), esri::to_string(run()));
}
