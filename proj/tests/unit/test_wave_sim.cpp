#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "apsusct/errors.hpp"
#include "apsusct/phantom.hpp"
#include "apsusct/wave_sim.hpp"
#include "common/oracles.hpp"

using namespace apsusct;

namespace {

constexpr double f_peak = 0.3e6;
const double dx0 = dx_for_frequency(f_peak, 1400.0);

SimGrid grid_for(std::size_t n, std::size_t steps, double dx = dx0, double dt = 2.0e-7) {
  return SimGrid::make(n, dx, dt, steps, 1600.0);
}

SosMap homogeneous(std::size_t n, double c = 1500.0, double dx = dx0) { return SosMap(n, dx, c); }

SosMap random_phantom(std::size_t n, std::uint64_t seed) {
  PhantomSpec spec;
  spec.n = n;
  spec.dx = dx0;
  spec.inclusion_count_max = 5;
  return generate_phantom(spec, seed);
}

}  // namespace

TEST(Ricker, PeakZeroAndSymmetry) {
  const RickerSource src{1e6, 2e-6, 3.0};
  EXPECT_DOUBLE_EQ(ricker(src.t0, src), 3.0);
  EXPECT_NEAR(ricker(src.t0 + 1.0 / (std::numbers::sqrt2 * std::numbers::pi * src.f_peak), src), 0.0, 1e-14);
  for (double d : {1e-8, 3e-7, 1.1e-6}) EXPECT_DOUBLE_EQ(ricker(src.t0 + d, src), ricker(src.t0 - d, src));
  EXPECT_THROW((RickerSource{1e6, 1e-6, 1.0}.validate()), ConfigError);
}

TEST(Cfl, FormulaAndScaling) {
  EXPECT_NEAR(cfl_dt(1.5e-4, 1600.0), 6.629e-8, 1e-11);
  EXPECT_DOUBLE_EQ(cfl_dt(3.0e-4, 1600.0), 2.0 * cfl_dt(1.5e-4, 1600.0));
  double previous = std::numeric_limits<double>::infinity();
  for (double c : {1e3, 1e4, 1e6, 1e9}) {
    EXPECT_LT(cfl_dt(1e-4, c), previous);
    previous = cfl_dt(1e-4, c);
  }
}

TEST(SimGrid, RejectsCflViolationAndThinSponge) {
  EXPECT_THROW(SimGrid::make(32, dx0, 1.01 * cfl_dt(dx0, 1600.0), 10, 1600.0), ConfigError);
  EXPECT_NO_THROW(SimGrid::make(32, dx0, cfl_dt(dx0, 1600.0), 10, 1600.0));
  EXPECT_THROW(SimGrid::make(32, dx0, 1e-7, 10, 1600.0, 9), ConfigError);
  // A map faster than the grid was built for is rejected when simulating.
  const SimGrid g = SimGrid::make(32, dx0, cfl_dt(dx0, 1600.0), 10, 1600.0);
  EXPECT_THROW(simulate_shot(homogeneous(32, 1700.0), g, {0, 0}, {{dx0, 0}}, RickerSource::with_default_delay(f_peak)),
               ConfigError);
}

TEST(SimulateShot, ZeroWaveletGivesZeroTraces) {
  const auto traces = simulate_shot(homogeneous(32), grid_for(32, 64), {0, 0}, {{4 * dx0, 0}, {0, 6 * dx0}},
                                    RickerSource::with_default_delay(f_peak, 0.0));
  ASSERT_EQ(traces.size(), 128u);
  for (double v : traces) EXPECT_EQ(v, 0.0);
}

TEST(SimulateShot, EnvelopeArrivalMatchesTravelTime) {
  // 16 points per wavelength keeps the scheme's group-velocity lag well under the tolerance.
  const std::size_t n = 96;
  const double dx = dx_for_frequency(f_peak, 1400.0, 16.0);
  const SimGrid grid = SimGrid::make(n, dx, 0.9 * cfl_dt(dx, 1600.0), 400, 1600.0);
  const auto src = RickerSource::with_default_delay(f_peak);
  const auto trace = simulate_shot(homogeneous(n, 1500.0, dx), grid, {-44 * dx, 0.0}, {{44 * dx, 0.0}}, src);
  const auto env = oracles::hilbert_envelope(trace);
  const auto peak = std::max_element(env.begin(), env.end()) - env.begin();
  const double arrival = static_cast<double>(peak) * grid.dt;
  const double expected = 88.0 * dx / 1500.0 + src.t0;
  EXPECT_NEAR(arrival, expected, 0.03 * expected);
}

TEST(SimulateShot, LinearInSourceTerm) {
  const std::size_t n = 48;
  const SimGrid grid = grid_for(n, 160);
  const SosMap sos = random_phantom(n, 4);
  const std::vector<Point2> recv{{10 * dx0, 3 * dx0}, {-7 * dx0, -12 * dx0}};
  const auto s1 = ricker_samples(RickerSource::with_default_delay(f_peak), grid.dt, grid.time_steps);
  const auto s2 = ricker_samples(RickerSource{0.2e6, 9e-6, 1.0}, grid.dt, grid.time_steps);
  const double alpha = 1.7;
  const double beta = -0.45;
  std::vector<double> mix(s1.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = alpha * s1[k] + beta * s2[k];
  const auto u1 = simulate_shot_signal(sos, grid, {0, 0}, recv, s1);
  const auto u2 = simulate_shot_signal(sos, grid, {0, 0}, recv, s2);
  const auto um = simulate_shot_signal(sos, grid, {0, 0}, recv, mix);
  std::vector<double> combo(u1.size());
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = alpha * u1[i] + beta * u2[i];
  EXPECT_LE(oracles::l2_diff(um, combo), 1e-10 * oracles::l2(um));

  const auto w = RickerSource::with_default_delay(f_peak);
  const auto single = simulate_shot(sos, grid, {0, 0}, recv, w);
  const auto doubled = simulate_shot(sos, grid, {0, 0}, recv, RickerSource{w.f_peak, w.t0, 2.0});
  const double scale = oracles::l2(single);
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(doubled[i], 2.0 * single[i], 1e-12 * scale);
}

TEST(SimulateShot, ReciprocityInHeterogeneousMedium) {
  const std::size_t n = 64;
  const SimGrid grid = grid_for(n, 220);
  const SosMap sos = random_phantom(n, 17);
  const auto w = RickerSource::with_default_delay(f_peak);
  const Point2 a{-25 * dx0, 4 * dx0};
  const Point2 b{18 * dx0, -21 * dx0};
  const auto ab = simulate_shot(sos, grid, a, {b}, w);
  const auto ba = simulate_shot(sos, grid, b, {a}, w);
  EXPECT_GT(oracles::l2(ab), 0.0);
  EXPECT_LE(oracles::l2_diff(ab, ba) / oracles::l2(ab), 1e-6);
}

TEST(SimulateShot, BoundedOnRandomPhantoms) {
  const std::size_t n = 48;
  const SimGrid grid = SimGrid::make(n, dx0, cfl_dt(dx0, 1600.0), 600, 1600.0);
  const std::vector<Point2> recv{{15 * dx0, 0}, {0, -15 * dx0}};
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto traces = simulate_shot(random_phantom(n, seed), grid, {0, 0}, recv,
                                      RickerSource::with_default_delay(f_peak));
    double peak_early = 0.0;
    double peak_late = 0.0;
    for (std::size_t j = 0; j < recv.size(); ++j) {
      for (std::size_t k = 0; k < grid.time_steps; ++k) {
        const double v = std::abs(traces[j * grid.time_steps + k]);
        ASSERT_TRUE(std::isfinite(v));
        (k < 200 ? peak_early : peak_late) = std::max(k < 200 ? peak_early : peak_late, v);
      }
    }
    EXPECT_GT(peak_early, 0.0);
    EXPECT_LE(peak_late, peak_early);
  }
}

TEST(SimulateShot, InteriorEnergyDecaysAfterSourceStops) {
  const std::size_t n = 48;
  const SimGrid grid = grid_for(n, 500);
  const auto w = RickerSource::with_default_delay(f_peak);
  std::vector<Point2> every_node;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      every_node.push_back({(static_cast<double>(c) - n / 2) * dx0, (static_cast<double>(r) - n / 2) * dx0});
  const SosMap sos = random_phantom(n, 2);
  const auto field = simulate_shot(sos, grid, {0, 0}, every_node, w);
  auto snapshot = [&](std::size_t k) {
    std::vector<double> u(every_node.size());
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = field[j * grid.time_steps + k];
    return u;
  };
  auto energy = [&](std::size_t k) { return oracles::leapfrog_energy(snapshot(k), snapshot(k + 1), sos, grid.dt); };
  const auto off = static_cast<std::size_t>(std::ceil((w.t0 + 3.0 / w.f_peak) / grid.dt));
  for (std::size_t k = off; k + 101 < grid.time_steps; k += 10) {
    EXPECT_LE(energy(k + 100), 1.01 * energy(k)) << "step " << k;
  }
}

TEST(SimulateShot, SecondOrderConvergence) {
  // Interior large enough that no sponge reflection reaches a receiver inside the window.
  const std::size_t n0 = 64;
  const double dt0 = 2.0e-7;
  const std::size_t k0 = 80;
  auto speed = [](double x, double y) {
    return 1500.0 + 60.0 * std::exp(-((x - 2e-3) * (x - 2e-3) + y * y) / (2.0 * 3e-3 * 3e-3));
  };
  const std::vector<Point2> recv{{12 * dx0, 0}, {0, 12 * dx0}, {-8 * dx0, -8 * dx0}};
  auto run = [&](std::size_t refine) {
    const double dx = dx0 / static_cast<double>(refine);
    const double dt = dt0 / static_cast<double>(refine);
    const std::size_t steps = (k0 - 1) * refine + 1;
    const SimGrid grid = SimGrid::make(n0 * refine, dx, dt, steps, 1600.0);
    const auto full = simulate_shot(oracles::sample_map(n0 * refine, dx, speed), grid, {0, 0}, recv,
                                    RickerSource::with_default_delay(f_peak));
    std::vector<double> common;
    for (std::size_t j = 0; j < recv.size(); ++j)
      for (std::size_t k = 0; k < k0; ++k) common.push_back(full[j * steps + k * refine]);
    return common;
  };
  const auto coarse = run(1);
  const auto medium = run(2);
  const auto reference = run(4);
  const double e_coarse = oracles::l2_diff(coarse, reference);
  const double e_medium = oracles::l2_diff(medium, reference);
  EXPECT_GE(e_coarse / e_medium, 3.5) << "coarse " << e_coarse << " medium " << e_medium;
}

TEST(SimulateShot, OutsidePositionsAndNonFiniteRejected) {
  const SimGrid grid = grid_for(32, 20);
  const auto w = RickerSource::with_default_delay(f_peak);
  EXPECT_THROW(simulate_shot(homogeneous(32), grid, {40 * dx0, 0}, {{0, 0}}, w), ConfigError);
  EXPECT_THROW(simulate_shot(homogeneous(32), grid, {0, 0}, {{0, -30 * dx0}}, w), ConfigError);
  EXPECT_THROW(simulate_shot(homogeneous(24), grid, {0, 0}, {{0, 0}}, w), ConfigError);
  std::vector<double> bad(20, 0.0);
  bad[3] = std::numeric_limits<double>::infinity();
  try {
    simulate_shot_signal(homogeneous(32), grid, {0, 0}, {{0, 0}}, bad);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 4"), std::string::npos) << e.what();
  }
}

TEST(SimulateAcquisition, CubeShapeAndRestriction) {
  const std::size_t n = 48;
  const SimGrid grid = grid_for(n, 96);
  const RingGeometry ring = RingGeometry::centered(n, dx0);
  const AcquisitionConfig dense{8, 64, ring, grid.time_steps, grid.dt};
  const AcquisitionConfig sparse{8, 16, ring, grid.time_steps, grid.dt};
  const SosMap sos = random_phantom(n, 5);
  const auto w = RickerSource::with_default_delay(f_peak);
  const WaveformCube d = simulate_acquisition(sos, dense, grid, w);
  const WaveformCube s = simulate_acquisition(sos, sparse, grid, w);
  EXPECT_EQ(d.dims(), "(8, 64, 96)");
  EXPECT_NO_THROW(d.validate());
  const WaveformCube r = restrict_cube(d, sparse);
  ASSERT_TRUE(r.same_dims(s));
  EXPECT_EQ(r.values, s.values);

  const AcquisitionConfig fewer_sources{2, 16, ring, grid.time_steps, grid.dt};
  EXPECT_EQ(restrict_cube(d, fewer_sources).values, simulate_acquisition(sos, fewer_sources, grid, w).values);
}

TEST(SimulateAcquisition, WorkerCountDoesNotChangeResult) {
  const std::size_t n = 32;
  const SimGrid grid = grid_for(n, 64);
  const AcquisitionConfig cfg{4, 16, RingGeometry::centered(n, dx0), grid.time_steps, grid.dt};
  const SosMap sos = random_phantom(n, 8);
  const auto w = RickerSource::with_default_delay(f_peak);
  EXPECT_EQ(simulate_acquisition(sos, cfg, grid, w, 1).values, simulate_acquisition(sos, cfg, grid, w, 3).values);
}

TEST(SimulateAcquisition, MismatchedConfigRejected) {
  const SimGrid grid = grid_for(32, 64);
  AcquisitionConfig cfg{4, 16, RingGeometry::centered(32, dx0), 50, grid.dt};
  EXPECT_THROW(simulate_acquisition(homogeneous(32), cfg, grid, RickerSource::with_default_delay(f_peak)),
               ConfigError);
}
