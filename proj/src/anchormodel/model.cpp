#include "anchormodel/model.hpp"

#include <cmath>
#include <stdexcept>

namespace anchorforge::model {

using namespace diff;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (c < 1 || patch < 1 || d < 1 || depth < 0 || heads < 1 || text_vocab < 2 || text_dim < 1 || max_text_len < 1 ||
      max_frames < 1 || latent_height < 1 || latent_width < 1 || mlp_ratio < 1) {
    fail("all sizes must be positive");
  }
  if (d % heads != 0) fail("d must be divisible by heads");
  if (latent_height % patch != 0 || latent_width % patch != 0) fail("latent extents must be divisible by patch");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"c", cfg.c},
          {"patch", cfg.patch},
          {"d", cfg.d},
          {"depth", cfg.depth},
          {"heads", cfg.heads},
          {"text_vocab", cfg.text_vocab},
          {"text_dim", cfg.text_dim},
          {"max_text_len", cfg.max_text_len},
          {"max_frames", cfg.max_frames},
          {"latent_height", cfg.latent_height},
          {"latent_width", cfg.latent_width},
          {"mlp_ratio", cfg.mlp_ratio}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.c = j.value("c", cfg.c);
    cfg.patch = j.value("patch", cfg.patch);
    cfg.d = j.value("d", cfg.d);
    cfg.depth = j.value("depth", cfg.depth);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.text_vocab = j.value("text_vocab", cfg.text_vocab);
    cfg.text_dim = j.value("text_dim", cfg.text_dim);
    cfg.max_text_len = j.value("max_text_len", cfg.max_text_len);
    cfg.max_frames = j.value("max_frames", cfg.max_frames);
    cfg.latent_height = j.value("latent_height", cfg.latent_height);
    cfg.latent_width = j.value("latent_width", cfg.latent_width);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Conditions

std::vector<int> ConditionSpec::condition_frames() const {
  std::vector<int> out;
  const std::size_t plane = mask.frame_size();
  for (int f = 0; f < mask.frames; ++f)
    if (mask.values[f * plane] != 0.f) out.push_back(f + 1);
  return out;
}

void ConditionSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("condition spec: " + m); };
  if (mask.channels != 1) fail("mask must have one channel");
  if (mask.frames < 1) fail("no frames");
  if (condition_latent.frames != mask.frames || condition_latent.height != mask.height ||
      condition_latent.width != mask.width) {
    fail("mask and condition latent shapes disagree");
  }
  if (mask.values.size() != mask.frame_size() * mask.frames ||
      condition_latent.values.size() != condition_latent.frame_size() * condition_latent.frames) {
    fail("malformed arrays");
  }
  if (static_cast<int>(std::lround(scalars.frame_count)) != mask.frames) fail("frame_count does not match f");
  for (int f = 0; f < mask.frames; ++f)
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x) {
        const float m = mask.at(f, 0, y, x);
        if (m != 0.f && m != 1.f) fail("mask values must be 0 or 1");
        if (m == 0.f) {
          for (int ch = 0; ch < condition_latent.channels; ++ch)
            if (condition_latent.at(f, ch, y, x) != 0.f) fail("condition latent is nonzero at a generate position");
        }
      }
  if (scalars.fps <= 0 || scalars.interval <= 0 || scalars.motion < 0 || scalars.width <= 0 || scalars.height <= 0) {
    fail("scalar conditions out of range");
  }
}

ConditionSpec ConditionSpec::all_generate(int f, int c, int h, int w, const CondScalars& scalars) {
  ConditionSpec spec{LatentClip(f, 1, h, w), LatentClip(f, c, h, w), scalars};
  spec.scalars.frame_count = f;
  return spec;
}

ConditionSpec ConditionSpec::from_frames(const LatentClip& clean, const std::vector<int>& frames,
                                         const CondScalars& scalars) {
  auto spec = all_generate(clean.frames, clean.channels, clean.height, clean.width, scalars);
  const std::size_t plane = clean.frame_size(), mplane = spec.mask.frame_size();
  for (int k : frames) {
    if (k < 1 || k > clean.frames) {
      throw std::invalid_argument("condition frame " + std::to_string(k) + " is outside 1.." +
                                  std::to_string(clean.frames));
    }
    std::fill_n(spec.mask.values.begin() + static_cast<std::ptrdiff_t>((k - 1) * mplane), mplane, 1.f);
    std::copy_n(clean.values.begin() + static_cast<std::ptrdiff_t>((k - 1) * plane), plane,
                spec.condition_latent.values.begin() + static_cast<std::ptrdiff_t>((k - 1) * plane));
  }
  return spec;
}

LatentClip build_input(const LatentClip& noisy, const ConditionSpec& cond) {
  cond.validate();
  if (noisy.frames != cond.frames() || noisy.channels != cond.condition_latent.channels ||
      noisy.height != cond.mask.height || noisy.width != cond.mask.width) {
    throw std::invalid_argument("build_input: noisy latent shape does not match the condition spec");
  }
  const int c = noisy.channels;
  LatentClip out(noisy.frames, 2 * c + 1, noisy.height, noisy.width);
  const std::size_t plane = static_cast<std::size_t>(noisy.height) * noisy.width;
  for (int f = 0; f < noisy.frames; ++f) {
    auto dst = out.values.begin() + static_cast<std::ptrdiff_t>(f * out.frame_size());
    const auto off = static_cast<std::ptrdiff_t>(f * noisy.frame_size());
    dst = std::copy_n(noisy.values.begin() + off, c * plane, dst);
    dst = std::copy_n(cond.condition_latent.values.begin() + off, c * plane, dst);
    std::copy_n(cond.mask.values.begin() + static_cast<std::ptrdiff_t>(f * plane), plane, dst);
  }
  return out;
}

std::vector<double> sinusoid(double x, int dim) {
  std::vector<double> e(static_cast<std::size_t>(dim));
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * i / half);
    e[2 * i] = std::sin(x * w);
    e[2 * i + 1] = std::cos(x * w);
  }
  return e;
}

std::array<double, kCondCount> cond_inputs(const CondScalars& s, double t) {
  return {t * 1000.0, s.fps, s.interval, s.motion * 100.0, s.width, s.height, s.frame_count};
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  enum Init { Normal, Zero } init;
};

std::vector<ParamSpec> param_layout(const ModelConfig& cfg) {
  const std::int64_t d = cfg.d, p2 = cfg.patch * cfg.patch, hid = cfg.mlp_ratio * cfg.d;
  std::vector<ParamSpec> L;
  auto lin = [&](const std::string& name, std::int64_t in, std::int64_t out, ParamSpec::Init init) {
    L.push_back({name + ".w", {in, out}, init});
    L.push_back({name + ".b", {out}, ParamSpec::Zero});
  };
  lin("patch_embed", (2 * cfg.c + 1) * p2, d, ParamSpec::Normal);
  L.push_back({"pos.frame", {cfg.max_frames, d}, ParamSpec::Normal});
  L.push_back({"pos.space", {cfg.tokens_per_frame(), d}, ParamSpec::Normal});
  L.push_back({"text.tok", {cfg.text_vocab, cfg.text_dim}, ParamSpec::Normal});
  L.push_back({"text.pos", {cfg.max_text_len, cfg.text_dim}, ParamSpec::Normal});
  for (const char* name : kCondNames) {
    lin(std::string("cond.") + name + ".fc1", kSinusoidDim, d, ParamSpec::Normal);
    lin(std::string("cond.") + name + ".fc2", d, d, ParamSpec::Normal);
  }
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string b = "block" + std::to_string(i) + ".";
    lin(b + "ada", d, 9 * d, ParamSpec::Zero);
    lin(b + "attn.qkv", d, 3 * d, ParamSpec::Normal);
    lin(b + "attn.out", d, d, ParamSpec::Normal);
    lin(b + "cross.q", d, d, ParamSpec::Normal);
    lin(b + "cross.kv", cfg.text_dim, 2 * d, ParamSpec::Normal);
    lin(b + "cross.out", d, d, ParamSpec::Normal);
    lin(b + "mlp.fc1", d, hid, ParamSpec::Normal);
    lin(b + "mlp.fc2", hid, d, ParamSpec::Normal);
  }
  lin("final.ada", d, 2 * d, ParamSpec::Zero);
  lin("final.out", d, cfg.c * p2, ParamSpec::Zero);
  return L;
}

}  // namespace

std::int64_t param_count(const ModelConfig& cfg) {
  std::int64_t n = 0;
  for (const auto& spec : param_layout(cfg)) n += numel(spec.shape);
  return n;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, SeededRng& rng) {
  cfg.validate();
  ParamStore<T> store;
  for (const auto& spec : param_layout(cfg)) {
    Array<T> a(spec.shape);
    if (spec.init == ParamSpec::Normal)
      for (auto& v : a.data) v = static_cast<T>(rng.truncated_normal(0.02));
    store.add(spec.name, std::move(a));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Forward

template <typename T>
Array<T> to_array(const LatentClip& clip) {
  Array<T> a({clip.frames, clip.channels, clip.height, clip.width});
  std::copy(clip.values.begin(), clip.values.end(), a.data.begin());
  return a;
}

LatentClip to_clip(const Array<float>& a) {
  if (a.rank() != 4) throw std::invalid_argument("to_clip: expected a rank-4 array");
  LatentClip c(static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1]), static_cast<int>(a.shape[2]),
               static_cast<int>(a.shape[3]));
  c.values.assign(a.data.begin(), a.data.end());
  return c;
}

template <typename T>
AnchorModel<T>::AnchorModel(ModelConfig cfg, ParamStore<T> params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  for (const auto& spec : param_layout(cfg_)) {
    if (!params_.contains(spec.name) || params_.get(spec.name).shape() != spec.shape) {
      throw std::invalid_argument("parameter '" + spec.name + "' is missing or has the wrong shape");
    }
  }
}

template <typename T>
Tensor<T> AnchorModel<T>::cond_embedding(const CondScalars& scalars, double t) const {
  const auto inputs = cond_inputs(scalars, t);
  Tensor<T> total;
  for (int i = 0; i < kCondCount; ++i) {
    const auto e = sinusoid(inputs[i]);
    auto x = Tensor<T>::constant(Array<T>({kSinusoidDim}, std::vector<T>(e.begin(), e.end())));
    const std::string n = std::string("cond.") + kCondNames[i];
    auto h = silu(linear(x, p(n + ".fc1.w"), p(n + ".fc1.b")));
    auto y = linear(h, p(n + ".fc2.w"), p(n + ".fc2.b"));
    total = total.defined() ? add(total, y) : y;
  }
  return total;
}

template <typename T>
Tensor<T> AnchorModel<T>::forward(const Tensor<T>& input, const CondScalars& scalars, double t,
                                  const std::vector<int>& text) const {
  return run(input, scalars, t, text, nullptr);
}

template <typename T>
std::vector<Array<T>> AnchorModel<T>::self_attention_weights(const Tensor<T>& input, const CondScalars& scalars,
                                                             double t, const std::vector<int>& text) const {
  std::vector<Array<T>> out;
  run(input, scalars, t, text, &out);
  return out;
}

template <typename T>
Tensor<T> AnchorModel<T>::run(const Tensor<T>& input, const CondScalars& scalars, double t,
                              const std::vector<int>& text, std::vector<Array<T>>* attn) const {
  const auto& cfg = cfg_;
  const auto& s = input.shape();
  if (s.size() != 4 || s[1] != 2 * cfg.c + 1 || s[2] != cfg.latent_height || s[3] != cfg.latent_width) {
    throw std::invalid_argument("forward: input " + shape_str(s) + " does not match the model config");
  }
  const std::int64_t f = s[0], P = cfg.patch, C = 2 * cfg.c + 1, d = cfg.d, H = cfg.heads, dh = d / H;
  const std::int64_t gh = cfg.latent_height / P, gw = cfg.latent_width / P, S = gh * gw, N = f * S;
  if (f > cfg.max_frames) throw std::invalid_argument("forward: more frames than max_frames");
  if (text.empty() || static_cast<int>(text.size()) > cfg.max_text_len) {
    throw std::invalid_argument("forward: text length must be in 1.." + std::to_string(cfg.max_text_len));
  }

  // Patch embedding with learned frame and spatial position tables.
  auto x = reshape(input, {f, C, gh, P, gw, P});
  x = permute(x, {0, 2, 4, 1, 3, 5});
  x = reshape(x, {N, C * P * P});
  x = linear(x, p("patch_embed.w"), p("patch_embed.b"));
  std::vector<std::int64_t> frame_ids(static_cast<std::size_t>(N)), space_ids(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    frame_ids[i] = i / S;
    space_ids[i] = i % S;
  }
  x = add(x, add(gather_rows(p("pos.frame"), frame_ids), gather_rows(p("pos.space"), space_ids)));

  std::vector<std::int64_t> ids(text.begin(), text.end()), pos_ids(text.size());
  for (auto id : ids)
    if (id < 0 || id >= cfg.text_vocab) throw std::invalid_argument("forward: token id out of range");
  for (std::size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<std::int64_t>(i);
  const std::int64_t L = static_cast<std::int64_t>(ids.size());
  auto txt = add(gather_rows(p("text.tok"), ids), gather_rows(p("text.pos"), pos_ids));

  const auto c = silu(cond_embedding(scalars, t));
  auto chunk = [&](const Tensor<T>& m, int i) { return slice(m, 0, i * d, d); };
  auto modulate = [&](const Tensor<T>& h, const Tensor<T>& shift, const Tensor<T>& scale) {
    return scale_shift(layer_norm(h), add_scalar(scale, T{1}), shift);
  };
  auto heads_first = [&](const Tensor<T>& y, std::int64_t rows, std::int64_t parts) {
    // [rows, parts*d] -> [parts*H, rows, dh]
    auto r = reshape(y, {rows, parts, H, dh});
    r = permute(r, {1, 2, 0, 3});
    return reshape(r, {parts * H, rows, dh});
  };
  auto merge_heads = [&](const Tensor<T>& o, std::int64_t rows) {
    return reshape(permute(o, {1, 0, 2}), {rows, d});
  };

  for (int b = 0; b < cfg.depth; ++b) {
    const std::string n = "block" + std::to_string(b) + ".";
    const auto mod = linear(c, p(n + "ada.w"), p(n + "ada.b"));

    auto h = modulate(x, chunk(mod, 0), chunk(mod, 1));
    auto qkv = heads_first(linear(h, p(n + "attn.qkv.w"), p(n + "attn.qkv.b")), N, 3);
    auto q = slice(qkv, 0, 0, H), k = slice(qkv, 0, H, H), v = slice(qkv, 0, 2 * H, H);
    if (attn) attn->push_back(attention_weights(q.value(), k.value()));
    auto o = linear(merge_heads(softmax_attention(q, k, v), N), p(n + "attn.out.w"), p(n + "attn.out.b"));
    x = add(x, mul(o, chunk(mod, 2)));

    h = modulate(x, chunk(mod, 3), chunk(mod, 4));
    auto cq = heads_first(linear(h, p(n + "cross.q.w"), p(n + "cross.q.b")), N, 1);
    auto kv = heads_first(linear(txt, p(n + "cross.kv.w"), p(n + "cross.kv.b")), L, 2);
    o = softmax_attention(cq, slice(kv, 0, 0, H), slice(kv, 0, H, H));
    o = linear(merge_heads(o, N), p(n + "cross.out.w"), p(n + "cross.out.b"));
    x = add(x, mul(o, chunk(mod, 5)));

    h = modulate(x, chunk(mod, 6), chunk(mod, 7));
    h = linear(silu(linear(h, p(n + "mlp.fc1.w"), p(n + "mlp.fc1.b"))), p(n + "mlp.fc2.w"), p(n + "mlp.fc2.b"));
    x = add(x, mul(h, chunk(mod, 8)));
  }

  const auto fin = linear(c, p("final.ada.w"), p("final.ada.b"));
  x = modulate(x, chunk(fin, 0), chunk(fin, 1));
  x = linear(x, p("final.out.w"), p("final.out.b"));  // [N, c*P*P]
  x = reshape(x, {f, gh, gw, cfg.c, P, P});
  x = permute(x, {0, 3, 1, 4, 2, 5});
  return reshape(x, {f, cfg.c, cfg.latent_height, cfg.latent_width});
}

template <typename T>
LatentClip AnchorModel<T>::predict(const LatentClip& noisy, const ConditionSpec& cond, const std::vector<int>& text,
                                   double t) const {
  const auto in = Tensor<T>::constant(to_array<T>(build_input(noisy, cond)));
  const auto out = forward(in, cond.scalars, t, text);
  return to_clip(out.value().template cast<float>());
}

template class AnchorModel<float>;
template class AnchorModel<double>;
template ParamStore<float> init_params<float>(const ModelConfig&, SeededRng&);
template ParamStore<double> init_params<double>(const ModelConfig&, SeededRng&);
template Array<float> to_array<float>(const LatentClip&);
template Array<double> to_array<double>(const LatentClip&);

}  // namespace anchorforge::model
