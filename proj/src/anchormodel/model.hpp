#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffcore/ops.hpp"
#include "diffcore/param_store.hpp"
#include "diffcore/rng.hpp"
#include "latentio/latent.hpp"

namespace anchorforge::model {

using diff::Array;
using diff::ParamStore;
using diff::Tensor;
using latent::LatentClip;

struct ModelConfig {
  int c = 48;
  int patch = 1;
  int d = 64;
  int depth = 4;
  int heads = 4;
  int text_vocab = 160;
  int text_dim = 64;
  int max_text_len = 128;
  // Extents the learned positional tables cover.
  int max_frames = 16;
  int latent_height = 8;
  int latent_width = 8;
  int mlp_ratio = 4;

  void validate() const;
  int tokens_per_frame() const { return (latent_height / patch) * (latent_width / patch); }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// The clip-level scalar conditions.
struct CondScalars {
  double fps = 24;
  double interval = 69;
  double motion = 0;
  double width = 32;
  double height = 32;
  double frame_count = 8;
};

/// Generate/condition mask plus condition latents. Mask 0 = generate, 1 = condition.
struct ConditionSpec {
  LatentClip mask;              // [f, 1, h, w]
  LatentClip condition_latent;  // [f, c, h, w], zero where mask is 0
  CondScalars scalars;

  int frames() const { return mask.frames; }
  /// 1-based indices of frames whose mask is 1.
  std::vector<int> condition_frames() const;
  /// Throws std::invalid_argument on non-binary masks, condition values at
  /// generate positions, shape disagreement or a frame_count mismatch.
  void validate() const;

  static ConditionSpec all_generate(int f, int c, int h, int w, const CondScalars& scalars);
  /// Conditions on the listed 1-based frames of `clean`; other frames are zero.
  static ConditionSpec from_frames(const LatentClip& clean, const std::vector<int>& frames, const CondScalars& scalars);
};

/// [f, 2c+1, h, w] in channel order noisy | condition | mask.
LatentClip build_input(const LatentClip& noisy, const ConditionSpec& cond);

inline constexpr int kSinusoidDim = 128;
inline constexpr int kCondCount = 7;
inline constexpr std::array<const char*, kCondCount> kCondNames{"t",     "fps",    "interval",   "motion",
                                                                "width", "height", "frame_count"};

/// Interleaved sin/cos ladder: e[2i] = sin(x w_i), e[2i+1] = cos(x w_i),
/// w_i = exp(-ln(10000) i / (dim/2)).
std::vector<double> sinusoid(double x, int dim = kSinusoidDim);

/// Scalar values fed to the seven embeddings; t is scaled by 1000 and motion by 100.
std::array<double, kCondCount> cond_inputs(const CondScalars& scalars, double t);

/// Number of scalars init_params creates for `cfg`.
std::int64_t param_count(const ModelConfig& cfg);

/// Truncated-normal(0.02) weights, zero biases; AdaLN modulation layers and
/// the output projection start at zero.
template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, diff::SeededRng& rng);

template <typename T>
class AnchorModel {
 public:
  AnchorModel(ModelConfig cfg, ParamStore<T> params);

  const ModelConfig& config() const { return cfg_; }
  const ParamStore<T>& params() const { return params_; }
  ParamStore<T>& params() { return params_; }

  /// Conditioning vector [d] from the seven scalars.
  Tensor<T> cond_embedding(const CondScalars& scalars, double t) const;

  /// Velocity prediction [f, c, h, w] from an assembled [f, 2c+1, h, w] input.
  Tensor<T> forward(const Tensor<T>& input, const CondScalars& scalars, double t, const std::vector<int>& text) const;

  /// Convenience: build_input then forward, returning plain values.
  LatentClip predict(const LatentClip& noisy, const ConditionSpec& cond, const std::vector<int>& text, double t) const;

  /// Per-block self-attention weights [heads, N, N] for inspection.
  std::vector<Array<T>> self_attention_weights(const Tensor<T>& input, const CondScalars& scalars, double t,
                                               const std::vector<int>& text) const;

 private:
  Tensor<T> run(const Tensor<T>& input, const CondScalars& scalars, double t, const std::vector<int>& text,
                std::vector<Array<T>>* attn) const;
  const Tensor<T>& p(const std::string& name) const { return params_.get(name); }

  ModelConfig cfg_;
  ParamStore<T> params_;
};

extern template class AnchorModel<float>;
extern template class AnchorModel<double>;

/// Converts a LatentClip to an Array<T> of shape [f, c, h, w].
template <typename T>
Array<T> to_array(const LatentClip& clip);
LatentClip to_clip(const Array<float>& a);

}  // namespace anchorforge::model
