#include <doctest.h>

#include <cmath>

#include "anchormodel/model.hpp"
#include "support/gradcheck.hpp"

using namespace anchorforge;
using namespace anchorforge::model;
using diff::SeededRng;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.c = 2;
  cfg.patch = 1;
  cfg.d = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.text_vocab = 6;
  cfg.text_dim = 4;
  cfg.max_text_len = 3;
  cfg.max_frames = 3;
  cfg.latent_height = 2;
  cfg.latent_width = 2;
  return cfg;
}

// Replaces every parameter, including the zero-initialized ones, with noise.
template <typename T>
void randomize(ParamStore<T>& store, std::uint64_t seed, double sigma = 0.3) {
  SeededRng rng(seed);
  for (auto& e : store.entries())
    for (auto& v : e.param.mutable_value().data) v = static_cast<T>(rng.normal() * sigma);
}

LatentClip random_clip(SeededRng& rng, int f, int c, int h, int w) {
  LatentClip clip(f, c, h, w);
  for (auto& v : clip.values) v = static_cast<float>(rng.normal());
  return clip;
}

CondScalars scalars_for(int f) {
  CondScalars s;
  s.frame_count = f;
  s.motion = 0.5;
  return s;
}

}  // namespace

TEST_CASE("build_input channel order") {
  LatentClip noisy(2, 1, 1, 1);
  noisy.values = {0.25f, -0.5f};
  LatentClip clean(2, 1, 1, 1);
  clean.values = {0.75f, 0.125f};
  const auto spec = ConditionSpec::from_frames(clean, {1}, scalars_for(2));
  const auto in = build_input(noisy, spec);
  CHECK(in.channels == 3);
  CHECK(in.values == std::vector<float>{0.25f, 0.75f, 1.f, -0.5f, 0.f, 0.f});

  SeededRng rng(3);
  const auto x = random_clip(rng, 4, 3, 2, 2);
  const auto gen = build_input(x, ConditionSpec::all_generate(4, 3, 2, 2, scalars_for(4)));
  CHECK(gen.channels == 7);
  for (int f = 0; f < 4; ++f)
    for (int ch = 0; ch < 7; ++ch)
      for (int y = 0; y < 2; ++y)
        for (int xx = 0; xx < 2; ++xx) {
          if (ch < 3) CHECK(gen.at(f, ch, y, xx) == x.at(f, ch, y, xx));
          else CHECK(gen.at(f, ch, y, xx) == 0.f);
        }

  const auto all = build_input(x, ConditionSpec::from_frames(x, {1, 2, 3, 4}, scalars_for(4)));
  for (int f = 0; f < 4; ++f)
    for (int ch = 0; ch < 3; ++ch) CHECK(all.at(f, ch, 1, 1) == all.at(f, ch + 3, 1, 1));
}

TEST_CASE("condition spec invariants") {
  auto spec = ConditionSpec::all_generate(3, 2, 2, 2, scalars_for(3));
  CHECK_NOTHROW(spec.validate());
  spec.condition_latent.at(1, 0, 0, 0) = 0.5f;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);

  auto graded = ConditionSpec::all_generate(3, 2, 2, 2, scalars_for(3));
  graded.mask.at(0, 0, 0, 0) = 0.5f;
  CHECK_THROWS(graded.validate());

  auto wrong_count = ConditionSpec::all_generate(3, 2, 2, 2, scalars_for(3));
  wrong_count.scalars.frame_count = 4;
  CHECK_THROWS(wrong_count.validate());

  SeededRng rng(1);
  const auto clip = random_clip(rng, 3, 2, 2, 2);
  CHECK_THROWS(ConditionSpec::from_frames(clip, {4}, scalars_for(3)));
  CHECK(ConditionSpec::from_frames(clip, {1, 3}, scalars_for(3)).condition_frames() == std::vector<int>{1, 3});
  CHECK_THROWS(build_input(random_clip(rng, 2, 2, 2, 2), ConditionSpec::all_generate(3, 2, 2, 2, scalars_for(3))));
}

TEST_CASE("sinusoid at zero") {
  const auto e = sinusoid(0.0);
  REQUIRE(e.size() == 128);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == (i % 2 == 0 ? 0.0 : 1.0));
  const auto one = sinusoid(1.0, 4);
  CHECK(one[0] == doctest::Approx(std::sin(1.0)));
  CHECK(one[1] == doctest::Approx(std::cos(1.0)));
  CHECK(one[2] == doctest::Approx(std::sin(0.01)));
  CHECK(one[3] == doctest::Approx(std::cos(0.01)));
}

TEST_CASE("cond embedding") {
  const auto cfg = tiny_config();
  SeededRng rng(5);
  AnchorModel<double> m(cfg, init_params<double>(cfg, rng));
  auto a = scalars_for(3), b = scalars_for(3);
  b.frame_count = 4;
  const auto ea = m.cond_embedding(a, 0.3).value().data, eb = m.cond_embedding(b, 0.3).value().data;
  double diff2 = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) diff2 += (ea[i] - eb[i]) * (ea[i] - eb[i]);
  CHECK(diff2 > 0);

  // Zero MLP weights: the embedding is the sum of fc2 biases.
  auto params = m.params();
  std::vector<double> expect(cfg.d, 0.0);
  SeededRng brng(9);
  for (auto& e : params.entries()) {
    if (e.name.rfind("cond.", 0) != 0) continue;
    auto& vals = e.param.mutable_value().data;
    const bool is_w = e.name.back() == 'w';
    for (auto& v : vals) v = is_w ? 0.0 : brng.normal();
    if (e.name.find("fc2.b") != std::string::npos)
      for (int i = 0; i < cfg.d; ++i) expect[i] += vals[i];
  }
  AnchorModel<double> z(cfg, params);
  const auto e1 = z.cond_embedding(a, 0.1).value().data, e2 = z.cond_embedding(b, 0.9).value().data;
  for (int i = 0; i < cfg.d; ++i) {
    CHECK(e1[i] == doctest::Approx(expect[i]));
    CHECK(e2[i] == e1[i]);
  }
}

TEST_CASE("parameter count formula") {
  ModelConfig cfg;
  cfg.c = 4;
  cfg.patch = 2;
  cfg.d = 64;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.text_vocab = 160;
  cfg.text_dim = 64;
  cfg.max_text_len = 128;
  cfg.max_frames = 16;
  cfg.latent_height = 8;
  cfg.latent_width = 8;
  const std::int64_t patch_embed = 9 * 4 * 64 + 64;
  const std::int64_t pos = 16 * 64 + 16 * 64;
  const std::int64_t text = 160 * 64 + 128 * 64;
  const std::int64_t cond = 7 * ((128 * 64 + 64) + (64 * 64 + 64));
  const std::int64_t block = (64 * 576 + 576) + (64 * 192 + 192) + 3 * (64 * 64 + 64) + (64 * 128 + 128) +
                             (64 * 256 + 256) + (256 * 64 + 64);
  const std::int64_t final_layer = (64 * 128 + 128) + (64 * 16 + 16);
  const std::int64_t expected = patch_embed + pos + text + cond + 2 * block + final_layer;
  CHECK(expected == 2368 + 2048 + 18432 + 86912 + 2 * 103808 + 9360);
  CHECK(param_count(cfg) == expected);
  SeededRng rng(0);
  CHECK(init_params<float>(cfg, rng).scalar_count() == expected);
}

TEST_CASE("init is seeded and output starts at zero") {
  const auto cfg = tiny_config();
  SeededRng r1(11), r2(11);
  const auto p1 = init_params<float>(cfg, r1), p2 = init_params<float>(cfg, r2);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1.entries()[i].param.value().data == p2.entries()[i].param.value().data);

  AnchorModel<float> m(cfg, p1);
  SeededRng rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_clip(rng, 3, 2, 2, 2);
    const auto out = m.predict(x, ConditionSpec::from_frames(x, {1}, scalars_for(3)), {2, 3}, rng.uniform());
    CHECK(out.frames == 3);
    CHECK(out.channels == 2);
    CHECK(out.height == 2);
    CHECK(out.width == 2);
    for (float v : out.values) CHECK(v == 0.0f);
  }
}

TEST_CASE("all-generate output ignores user condition frames") {
  const auto cfg = tiny_config();
  SeededRng rng(4);
  auto params = init_params<float>(cfg, rng);
  randomize(params, 8);
  AnchorModel<float> m(cfg, params);
  const auto noisy = random_clip(rng, 3, 2, 2, 2);
  const auto user_a = random_clip(rng, 3, 2, 2, 2), user_b = random_clip(rng, 3, 2, 2, 2);
  const auto a = m.predict(noisy, ConditionSpec::from_frames(user_a, {}, scalars_for(3)), {1}, 0.5);
  const auto b = m.predict(noisy, ConditionSpec::from_frames(user_b, {}, scalars_for(3)), {1}, 0.5);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK_MESSAGE(a.values[i] == b.values[i], i, " ", a.values[i], " ", b.values[i]);
  const auto c = m.predict(noisy, ConditionSpec::from_frames(user_a, {2}, scalars_for(3)), {1}, 0.5);
  CHECK(c.values != a.values);
}

TEST_CASE("bidirectional attention") {
  const auto cfg = tiny_config();
  SeededRng rng(6);
  auto params = init_params<double>(cfg, rng);
  randomize(params, 12);
  AnchorModel<double> m(cfg, params);
  const auto noisy = random_clip(rng, 3, 2, 2, 2);
  auto spec = ConditionSpec::all_generate(3, 2, 2, 2, scalars_for(3));
  auto in = diff::Tensor<double>::variable(to_array<double>(build_input(noisy, spec)));

  auto out = m.forward(in, spec.scalars, 0.4, {1, 2});
  diff::backward(diff::sum(diff::slice(out, 0, 0, 1)));
  const auto& g = in.grad();
  const std::size_t plane = static_cast<std::size_t>(5 * 2 * 2);
  double norm = 0;
  for (std::size_t i = 2 * plane; i < 3 * plane; ++i) norm += g[i] * g[i];
  CHECK(norm > 0);

  // Finite-difference probe of the same dependency.
  auto base = m.forward(diff::Tensor<double>::constant(in.value()), spec.scalars, 0.4, {1, 2}).value();
  auto bumped_in = in.value();
  bumped_in.data[2 * plane] += 1e-3;
  auto bumped = m.forward(diff::Tensor<double>::constant(bumped_in), spec.scalars, 0.4, {1, 2}).value();
  double change = 0;
  for (int i = 0; i < 2 * 2 * 2; ++i) change += std::abs(bumped.data[i] - base.data[i]);
  CHECK(change > 0);

  for (const auto& w : m.self_attention_weights(in, spec.scalars, 0.4, {1, 2})) {
    CHECK(w.shape == diff::Shape{2, 12, 12});
    for (double v : w.data) CHECK(v > 0.0);
  }
}

TEST_CASE("full model gradient check") {
  const auto cfg = tiny_config();
  SeededRng rng(21);
  auto params = init_params<double>(cfg, rng);
  randomize(params, 22);
  AnchorModel<double> m(cfg, params);
  const auto noisy = random_clip(rng, 3, 2, 2, 2);
  const auto spec = ConditionSpec::from_frames(noisy, {1}, scalars_for(3));
  auto in = diff::Tensor<double>::variable(to_array<double>(build_input(noisy, spec)));
  diff::Array<double> weights({3, 2, 2, 2});
  for (auto& w : weights.data) w = rng.normal();
  const auto W = diff::Tensor<double>::constant(weights);

  std::vector<diff::Tensor<double>> inputs{in};
  std::vector<std::string> names{"input"};
  for (const auto& e : m.params().entries()) {
    inputs.push_back(e.param);
    names.push_back(e.name);
  }
  const auto r = testing::gradcheck(
      inputs, [&] { return diff::sum(diff::mul(m.forward(in, spec.scalars, 0.35, {1, 4, 2}), W)); }, names);
  INFO("worst " << r.worst << " checked " << r.checked);
  CHECK(r.checked == static_cast<std::size_t>(param_count(cfg) + in.size()));
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("forward rejects mismatched shapes") {
  const auto cfg = tiny_config();
  SeededRng rng(1);
  AnchorModel<float> m(cfg, init_params<float>(cfg, rng));
  auto bad = diff::Tensor<float>::constant(diff::Array<float>({3, 4, 2, 2}));
  CHECK_THROWS(m.forward(bad, scalars_for(3), 0.5, {1}));
  auto ok = diff::Tensor<float>::constant(diff::Array<float>({3, 5, 2, 2}));
  CHECK_THROWS(m.forward(ok, scalars_for(3), 0.5, {}));
  CHECK_THROWS(m.forward(ok, scalars_for(3), 0.5, {9}));
  CHECK_NOTHROW(m.forward(ok, scalars_for(3), 0.5, {5}));

  auto cfg2 = cfg;
  cfg2.heads = 3;
  CHECK_THROWS(cfg2.validate());
  CHECK(model_config_from_json(to_json(cfg)).d == cfg.d);
}
