#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dts/dataset.hpp"

using namespace dts;

namespace {

ConeBeamGeometry small_geometry() {
  ConeBeamGeometry g;
  g.volume_shape = {32, 16, 32};
  g.detector_rows = 32;
  g.detector_cols = 32;
  g.detector_pixel_mm = 19.2;
  g.angles = make_angle_set(15.0, 29);
  return g;
}

PhantomConfig config_for(const ConeBeamGeometry& g) {
  PhantomConfig pc;
  pc.shape = g.volume_shape;
  pc.fov_mm = g.fov_mm;
  return pc;
}

std::filesystem::path scratch() {
  auto dir = std::filesystem::temp_directory_path() / "dts_test_dataset";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("default phantom at 30 degrees: difference identities") {
  ConeBeamGeometry g;
  auto phantom = generate_phantom(100, PhantomConfig{});
  Case c = simulate_case(phantom, g, {});

  // I_delta is the elementwise float difference, bit for bit.
  REQUIRE(c.proj_delta.projections.size() == 59);
  for (std::size_t v = 0; v < 59; ++v)
    for (std::size_t n = 0; n < c.proj_delta.projections[v].data.size(); ++n)
      REQUIRE(c.proj_delta.projections[v].data[n] ==
              c.proj_full.projections[v].data[n] - c.proj_ribfree.projections[v].data[n]);

  // Reconstructing I_delta directly agrees with the difference of reconstructions.
  Volume3 direct = fbp(c.proj_delta, g, {});
  auto [lo, hi] = std::minmax_element(c.vol_full.data().begin(), c.vol_full.data().end());
  double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  double worst = 0.0;
  for (std::size_t n = 0; n < direct.size(); ++n)
    worst = std::max(worst, std::abs(static_cast<double>(direct[n]) - c.vol_delta[n]));
  CHECK(worst <= 1e-4 * range);
  CHECK(c.linearity_max_abs == doctest::Approx(worst));
  CHECK(c.vol_range == doctest::Approx(range));

  // Exact subtraction of the stored volumes.
  for (std::size_t n = 0; n < c.vol_delta.size(); ++n) REQUIRE(c.vol_delta[n] == c.vol_full[n] - c.vol_ribfree[n]);

  CHECK(c.truth_full == phantom.full);
  CHECK(c.lung_mask == phantom.lung_mask);
  CHECK(c.phantom_seed == 100);

  SUBCASE("rib deltas concentrate in the rib shadow") {
    // One voxel (6.4 mm) of in-plane dilation around columns that contain rib.
    Mask3 region = rib_shadow_region(c.rib_mask, 1);
    double frac = energy_fraction(c.vol_delta, region);
    double volume_frac = static_cast<double>(count(region)) / static_cast<double>(region.size());
    CHECK(frac >= 0.6);
    CHECK(frac > volume_frac);
  }
}

TEST_CASE("phantom without ribs has no rib component") {
  auto g = small_geometry();
  auto pc = config_for(g);
  pc.n_rib_pairs = 0;
  Case c = simulate_case(generate_phantom(3, pc), g, {});
  for (const auto& p : c.proj_delta.projections)
    for (float v : p.data) REQUIRE(v == 0.0f);
  for (float v : c.vol_delta.data()) REQUIRE(v == 0.0f);
}

TEST_CASE("simulation is deterministic and thread independent") {
  auto g = small_geometry();
  auto phantom = generate_phantom(8, config_for(g));
  Case a = simulate_case(phantom, g, {}, 1);
  Case b = simulate_case(phantom, g, {}, 1);
  Case c = simulate_case(phantom, g, {}, 3);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("geometry and phantom must agree") {
  auto g = small_geometry();
  auto phantom = generate_phantom(8, PhantomConfig{});
  CHECK_THROWS_AS(simulate_case(phantom, g, {}), Error);
}

TEST_CASE("build_dataset splits seeds and derives stats from training cases only") {
  auto g = small_geometry();
  auto pc = config_for(g);
  auto a = build_dataset(3, 1, 40, g, pc, {});
  auto b = build_dataset(3, 2, 40, g, pc, {}, 2);
  REQUIRE(a.train.size() == 3);
  REQUIRE(a.test.size() == 1);
  REQUIRE(b.test.size() == 2);
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& c : a.train) train_seeds.insert(c.phantom_seed);
  for (const auto& c : b.test) test_seeds.insert(c.phantom_seed);
  CHECK(train_seeds == std::set<std::uint64_t>{40, 41, 42});
  CHECK(test_seeds == std::set<std::uint64_t>{43, 44});
  CHECK(a.stats == b.stats);
  CHECK(a.train[1] == b.train[1]);

  for (const auto& c : a.train)
    for (const auto& p : c.proj_full.projections)
      for (float v : p.data) {
        REQUIRE(v >= a.stats.proj_min);
        REQUIRE(v <= a.stats.proj_max);
      }
  CHECK(a.stats.vol_max > a.stats.vol_min);
  // Standardised training inputs have zero mean and unit variance (two-pass reference).
  double m = 0.0, n = 0.0;
  for (const auto& c : a.train)
    for (const auto& p : c.proj_full.projections)
      for (float v : p.data) {
        m += a.stats.norm_proj(v);
        n += 1.0;
      }
  m /= n;
  double var = 0.0;
  for (const auto& c : a.train)
    for (const auto& p : c.proj_full.projections)
      for (float v : p.data) var += (a.stats.norm_proj(v) - m) * (a.stats.norm_proj(v) - m);
  CHECK(std::abs(m) < 1e-5);
  CHECK(var / n == doctest::Approx(1.0).epsilon(1e-5));
  double vmax = 0.0;
  for (const auto& c : a.train)
    for (float v : c.vol_delta.data()) vmax = std::max(vmax, std::abs(static_cast<double>(v)));
  CHECK(a.stats.vol_delta_scale == vmax);
  CHECK(a.stats.proj_delta_scale > 0.0);
  CHECK(a.stats.vol_std > 0.0);
  CHECK_THROWS_AS(build_dataset(0, 1, 40, g, pc, {}), Error);
}

TEST_CASE("phantom failures carry the seed") {
  auto g = small_geometry();
  auto pc = config_for(g);
  pc.lung_scale = 0.05;
  try {
    build_dataset(1, 1, 77, g, pc, {});
    FAIL("expected a lesion placement error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::lesion_placement);
    CHECK(std::string(e.what()).find("seed 77") != std::string::npos);
  }
}

TEST_CASE("dataset directory round trip") {
  auto g = small_geometry();
  auto split = build_dataset(1, 1, 5, g, config_for(g), {});
  auto dir = scratch() / "ds";
  std::filesystem::remove_all(dir);
  write_dataset(dir, split);
  for (const char* f : {"proj_full.prj", "proj_ribfree.prj", "proj_delta.prj", "vol_full.vol", "vol_ribfree.vol",
                        "vol_delta.vol", "lung_mask.msk", "lesion_mask.msk", "manifest.txt"})
    CHECK(std::filesystem::exists(case_dir(dir, 5) / f));
  auto back = read_dataset(dir);
  CHECK(back.geometry == g);
  CHECK(back.stats == split.stats);
  REQUIRE(back.train.size() == 1);
  CHECK(back.train[0] == split.train[0]);
  CHECK(back.test[0] == split.test[0]);

  auto other = g;
  other.angles = make_angle_set(30.0, 59);
  try {
    read_case(dir, 5, other);
    FAIL("expected a geometry mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::geometry_mismatch);
  }
  CHECK_THROWS_AS(read_case(dir, 99, g), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("simulation config text round trip") {
  SimulationConfig sim;
  sim.spectrum = Spectrum{{40.0, 60.0, 80.0}, {0.25, 0.5, 0.25}};
  sim.filter.kind = RampKind::hann;
  sim.projector.supersample = 2;
  KeyValueFile kv;
  write_simulation_config(kv, "sim", "recon", sim);
  auto back = read_simulation_config(kv, "sim", "recon");
  CHECK(back.spectrum.energy_bins_kev == sim.spectrum.energy_bins_kev);
  CHECK(back.spectrum.weights == sim.spectrum.weights);
  CHECK(back.filter.kind == RampKind::hann);
  CHECK(back.projector.supersample == 2);

  kv.set("sim", "spectrum", "40:0.5,60:0.2");
  CHECK_THROWS_AS(read_simulation_config(kv, "sim", "recon"), Error);
  kv.set("sim", "spectrum", "60");
  kv.set("sim", "photons", "1e6");
  CHECK_THROWS_AS(read_simulation_config(kv, "sim", "recon"), Error);
}
