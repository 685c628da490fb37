#include <gtest/gtest.h>

#include <sstream>

#include "apsusct/aps_fwi.hpp"
#include "apsusct/errors.hpp"
#include "apsusct/metrics.hpp"
#include "apsusct/nn/grad_check.hpp"

using namespace apsusct;

namespace {

AcquisitionConfig acq(std::size_t s, std::size_t r, std::size_t t) {
  return {s, r, RingGeometry::centered(64, 1e-3), t, 1e-7};
}

WaveformCube random_cube(std::size_t s, std::size_t r, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  WaveformCube c(s, r, t, acq(s, r, t));
  for (auto& v : c.values) v = normal(rng);
  return c;
}

SourceEncodingSpec encoding(std::size_t sources, std::size_t encoded) { return {sources, encoded, true}; }

}  // namespace

TEST(EncodeSources, OneHotRowSelectsSlice) {
  const WaveformCube c = random_cube(5, 3, 4, 1);
  std::vector<double> w(2 * 5, 0.0);
  w[0 * 5 + 3] = 1.0;
  w[1 * 5 + 0] = 1.0;
  const Tensor4<double> out = encode_sources(c, w, 2);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(out.plane(0, 0)[i], c.values[3 * 12 + i]);
    EXPECT_EQ(out.plane(0, 1)[i], c.values[i]);
  }
}

TEST(EncodeSources, LinearInCube) {
  const WaveformCube a = random_cube(6, 4, 5, 2);
  const WaveformCube b = random_cube(6, 4, 5, 3);
  Rng rng(4);
  std::vector<double> w(3 * 6);
  for (auto& v : w) v = normal(rng);
  const auto mask = rademacher_mask(6, rng);
  WaveformCube mix = a;
  for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = 2.5 * a.values[i] - 0.75 * b.values[i];
  const auto ea = encode_sources(a, w, 3, mask);
  const auto eb = encode_sources(b, w, 3, mask);
  const auto em = encode_sources(mix, w, 3, mask);
  for (std::size_t i = 0; i < em.size(); ++i) {
    const double expect = 2.5 * ea[i] - 0.75 * eb[i];
    EXPECT_LE(std::abs(em[i] - expect), 1e-12 * std::max(1.0, std::abs(expect)));
  }
}

TEST(EncodeSources, RademacherMaskIsInvolution) {
  const WaveformCube c = random_cube(4, 3, 6, 5);
  Rng rng(6);
  const auto mask = rademacher_mask(4, rng);
  for (double m : mask) EXPECT_TRUE(m == 1.0 || m == -1.0);
  std::vector<double> identity(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) identity[i * 4 + i] = 1.0;
  const Tensor4<double> once = encode_sources(c, identity, 4, mask);
  WaveformCube as_cube = c;
  for (std::size_t i = 0; i < once.size(); ++i) as_cube.values[i] = once[i];
  const Tensor4<double> twice = encode_sources(as_cube, identity, 4, mask);
  for (std::size_t i = 0; i < twice.size(); ++i) EXPECT_EQ(twice[i], c.values[i]);

  Rng many(7);
  const auto big = rademacher_mask(20000, many);
  double sum = 0.0;
  for (double m : big) sum += m;
  EXPECT_LT(std::abs(sum / 20000.0), 0.03);
}

TEST(EncodeSources, TapePathMatchesReference) {
  const WaveformCube c = random_cube(4, 3, 5, 8);
  nn::ParamStore<double> store;
  Rng rng(9);
  const SourceEncodingSpec enc = encoding(4, 2);
  const auto net = InversionNetSpec::make(3, 5, 4, 2, 4, false, 1400.0, 1600.0);
  init_inversion_net(enc, net, store, rng);
  const auto mask = rademacher_mask(4, rng);
  const auto& W = store.get("encode/weight").value;
  const std::vector<double> w(W.values().begin(), W.values().end());
  const Tensor4<double> ref = encode_sources(c, w, 2, mask);

  nn::Tape<double> tape(&store);
  Tensor4<double> x({1, 4, 3, 5});
  std::copy(c.values.begin(), c.values.end(), x.values().begin());
  const nn::Var wm = nn::mask_input_channels(tape, tape.param("encode/weight"), mask);
  const nn::Var y = nn::conv2d(tape, tape.constant(x), wm, nn::Var{}, nn::ConvGeometry{});
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(tape.value(y)[i], ref[i], 1e-12);
}

TEST(EncodeSources, Errors) {
  EXPECT_THROW(encoding(4, 5).validate(), ConfigError);
  EXPECT_THROW(encoding(4, 0).validate(), ConfigError);
  EXPECT_NO_THROW(encoding(4, 4).validate());
  const WaveformCube c = random_cube(4, 2, 2, 1);
  EXPECT_THROW(encode_sources(c, std::vector<double>(6, 1.0), 2), DataError);
  EXPECT_THROW(encode_sources(c, std::vector<double>(8, 1.0), 2, {1.0, -1.0}), DataError);
}

TEST(InversionNet, ShapesAndRange) {
  const SourceEncodingSpec enc = encoding(8, 4);
  for (auto [r, k, n] : {std::tuple{32, 64, 64}, {8, 128, 32}, {16, 48, 24}}) {
    const auto net = InversionNetSpec::make(static_cast<std::size_t>(r), static_cast<std::size_t>(k),
                                            static_cast<std::size_t>(n), 4, 4, true, 1400.0, 1600.0);
    nn::ParamStore<float> store;
    Rng rng(10);
    init_inversion_net(enc, net, store, rng);
    Tensor4<float> x({2, 8, net.receivers, net.time});
    for (auto& v : x.values()) v = static_cast<float>(50.0 * normal(rng));
    nn::Tape<float> tape(&store);
    const nn::Var y = inversion_forward(enc, net, tape, tape.constant(x));
    EXPECT_EQ(tape.value(y).shape(), (Shape4{2, 1, net.map_n, net.map_n}));
    for (float v : tape.value(y).values()) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(InversionNet, SpecValidation) {
  auto net = InversionNetSpec::make(8, 32, 16, 4, 4, true, 1400.0, 1600.0);
  net.decoder.pop_back();
  EXPECT_THROW(net.validate(), ConfigError);
  auto shallow = InversionNetSpec::make(8, 32, 16, 4, 4, true, 1400.0, 1600.0);
  shallow.encoder.erase(shallow.encoder.begin());
  shallow.encoder_norm.erase(shallow.encoder_norm.begin());
  EXPECT_THROW(shallow.validate(), ConfigError);
  EXPECT_THROW(InversionNetSpec::make(8, 32, 16, 4, 4, true, 1600.0, 1400.0), ConfigError);
  EXPECT_THROW(InversionNetSpec::make(8, 32, 16, 4, 2, true, 1400.0, 1600.0), ConfigError);
}

TEST(InversionNet, SeAddsParametersNotShape) {
  const SourceEncodingSpec enc = encoding(8, 4);
  nn::ParamStore<double> with;
  nn::ParamStore<double> without;
  Rng a(1);
  Rng b(1);
  const auto net_se = InversionNetSpec::make(8, 32, 16, 4, 4, true, 1400.0, 1600.0);
  const auto net_plain = InversionNetSpec::make(8, 32, 16, 4, 4, false, 1400.0, 1600.0);
  init_inversion_net(enc, net_se, with, a);
  init_inversion_net(enc, net_plain, without, b);
  EXPECT_GT(with.parameter_count(), without.parameter_count());
  Tensor4<double> x({1, 8, 8, 32}, 0.3);
  nn::Tape<double> t1(&with);
  nn::Tape<double> t2(&without);
  EXPECT_EQ(t1.value(inversion_forward(enc, net_se, t1, t1.constant(x))).shape(),
            t2.value(inversion_forward(enc, net_plain, t2, t2.constant(x))).shape());
}

TEST(InversionNet, GradCheckWithAndWithoutSe) {
  const SourceEncodingSpec enc = encoding(4, 2);
  for (bool se : {false, true}) {
    for (std::uint64_t seed : {1, 2}) {
      const auto net = InversionNetSpec::make(4, 8, 4, 2, 4, se, 1400.0, 1600.0);
      nn::ParamStore<double> store;
      Rng rng(seed);
      init_inversion_net(enc, net, store, rng);
      const auto mask = rademacher_mask(4, rng);
      Tensor4<double> x({2, 4, 4, 8});
      for (auto& v : x.values()) v = normal(rng);
      auto fwd = [&](nn::Tape<double>& t, nn::Var in) { return inversion_forward(enc, net, t, in, mask); };
      const auto report = nn::grad_check_function(store, x, fwd, 1e-6, 16, rng);
      EXPECT_LT(report.max_relative_error, 1e-4) << "se=" << se << " seed " << seed << ": " << report.worst_entry;
      EXPECT_GT(report.checked, 200u);
    }
  }
}

TEST(TrainFwi, ConstantLabelConverges) {
  std::vector<WaveformCube> cubes;
  std::vector<SosMap> labels;
  for (std::uint64_t i = 0; i < 6; ++i) {
    cubes.push_back(random_cube(4, 8, 32, 100 + i));
    labels.emplace_back(16, 5e-4, 1530.0);
  }
  FwiTrainConfig cfg;
  cfg.epochs = 100;
  cfg.base_channels = 4;
  cfg.encoded_channels = 2;
  cfg.batch_size = 1;
  cfg.adam.lr = 1e-2;
  const double target = normalize_speed(1530.0, 1400.0, 1600.0);
  for (std::uint64_t seed : {0, 1, 2}) {
    cfg.seed = seed;
    FwiTrainConfig untrained = cfg;
    untrained.epochs = 0;
    auto init_model = train_fwi<double>(cubes, labels, untrained, 1400.0, 1600.0);
    double initial = 0.0;
    for (const auto& c : cubes) {
      const SosMap m = reconstruct(init_model, c, 5e-4);
      for (double v : m.values) {
        const double d = normalize_speed(v, 1400.0, 1600.0) - target;
        initial += d * d;
      }
    }
    initial /= static_cast<double>(cubes.size() * 256);
    const auto model = train_fwi<double>(cubes, labels, cfg, 1400.0, 1600.0);
    ASSERT_EQ(model.loss_history.size(), 100u);
    EXPECT_LT(model.loss_history.back(), 1e-4 * initial)
        << "seed " << seed << " final " << model.loss_history.back() << " initial " << initial;
  }
}

TEST(TrainFwi, DeterministicAndReconstructContract) {
  std::vector<WaveformCube> cubes;
  std::vector<SosMap> labels;
  PhantomSpec ps;
  ps.n = 16;
  for (std::uint64_t i = 0; i < 4; ++i) {
    cubes.push_back(random_cube(4, 8, 16, 200 + i));
    labels.push_back(generate_phantom(ps, i));
  }
  FwiTrainConfig cfg;
  cfg.epochs = 3;
  cfg.base_channels = 4;
  cfg.encoded_channels = 2;
  cfg.seed = 9;
  auto m1 = train_fwi<float>(cubes, labels, cfg, 1400.0, 1600.0);
  auto m2 = train_fwi<float>(cubes, labels, cfg, 1400.0, 1600.0);
  EXPECT_EQ(m1.loss_history, m2.loss_history);
  cfg.seed = 10;
  auto m3 = train_fwi<float>(cubes, labels, cfg, 1400.0, 1600.0);
  EXPECT_NE(m1.loss_history, m3.loss_history);

  const SosMap a = reconstruct(m1, cubes[0], ps.dx);
  const SosMap b = reconstruct(m1, cubes[0], ps.dx);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.n, 16u);
  EXPECT_GE(a.min(), 1400.0);
  EXPECT_LE(a.max(), 1600.0);

  std::ostringstream diag;
  EXPECT_THROW(reconstruct(m1, random_cube(4, 4, 16, 1), ps.dx, &diag), DataError);
  EXPECT_NE(diag.str().find("trained density"), std::string::npos);
  EXPECT_THROW(train_fwi<float>(cubes, {labels[0]}, cfg, 1400.0, 1600.0), DataError);
}
