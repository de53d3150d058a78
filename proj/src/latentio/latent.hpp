#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace anchorforge::latent {

/// 8-bit RGB image, row-major, channels interleaved.
struct FrameImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  FrameImage() = default;
  FrameImage(int h, int w, std::uint8_t fill = 0);

  std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int y, int x) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const FrameImage&) const = default;
};

/// [f, c, h, w] latent, row-major.
struct LatentClip {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  LatentClip() = default;
  LatentClip(int f, int c, int h, int w, float fill = 0.f);

  std::size_t frame_size() const { return static_cast<std::size_t>(channels) * height * width; }
  float& at(int f, int c, int y, int x) {
    return values[((static_cast<std::size_t>(f) * channels + c) * height + y) * width + x];
  }
  float at(int f, int c, int y, int x) const {
    return values[((static_cast<std::size_t>(f) * channels + c) * height + y) * width + x];
  }
  bool operator==(const LatentClip&) const = default;
};

inline constexpr int kDefaultCodecPatch = 4;

/// Channels the codec produces for patch size p.
constexpr int latent_channels(int patch) { return 3 * patch * patch; }

/// Space-to-channel patchify: pixel (y, x, rgb) lands in channel
/// rgb*p*p + (y%p)*p + (x%p) at latent position (y/p, x/p), mapped
/// affinely from [0,255] to [-1,1].
LatentClip encode(std::span<const FrameImage> frames, int patch = kDefaultCodecPatch);

/// Inverse of encode. Values are mapped back with v = (x+1)*127.5, rounded
/// half up and clamped to [0,255].
std::vector<FrameImage> decode(const LatentClip& latent, int patch = kDefaultCodecPatch);

void write_ppm(const std::filesystem::path& path, const FrameImage& image);
FrameImage read_ppm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const FrameImage& image);
FrameImage decode_ppm(std::span<const std::uint8_t> bytes);

/// Tiles frames row-major into `columns` columns; a short last row is padded
/// with black tiles.
FrameImage frame_grid(std::span<const FrameImage> frames, int columns);
void write_frame_grid(std::span<const FrameImage> frames, int columns, const std::filesystem::path& path);

/// Clip container: f, c, h, w as little-endian int32, then float32 values.
void write_clip(const std::filesystem::path& path, const LatentClip& clip);
LatentClip read_clip(const std::filesystem::path& path);

}  // namespace anchorforge::latent
