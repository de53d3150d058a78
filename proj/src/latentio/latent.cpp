#include "latentio/latent.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace anchorforge::latent {

static_assert(std::endian::native == std::endian::little, "clip I/O assumes a little-endian host");

FrameImage::FrameImage(int h, int w, std::uint8_t fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

LatentClip::LatentClip(int f, int c, int h, int w, float fill)
    : frames(f), channels(c), height(h), width(w), values(static_cast<std::size_t>(f) * c * h * w, fill) {}

LatentClip encode(std::span<const FrameImage> frames, int patch) {
  if (patch < 1) throw std::invalid_argument("encode: patch size must be positive");
  if (frames.empty()) throw std::invalid_argument("encode: no frames");
  const int H = frames[0].height, W = frames[0].width;
  if (H % patch != 0 || W % patch != 0 || H == 0 || W == 0) {
    throw std::invalid_argument("encode: frame size " + std::to_string(H) + "x" + std::to_string(W) +
                                " is not divisible by patch " + std::to_string(patch));
  }
  for (const auto& fr : frames) {
    if (fr.height != H || fr.width != W) throw std::invalid_argument("encode: frames have mixed sizes");
    if (fr.pixels.size() != static_cast<std::size_t>(H) * W * 3) {
      throw std::invalid_argument("encode: pixel buffer does not match frame size");
    }
  }
  LatentClip out(static_cast<int>(frames.size()), latent_channels(patch), H / patch, W / patch);
  for (int f = 0; f < out.frames; ++f) {
    const auto& fr = frames[f];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int rgb = 0; rgb < 3; ++rgb) {
          const int c = rgb * patch * patch + (y % patch) * patch + (x % patch);
          out.at(f, c, y / patch, x / patch) = static_cast<float>(fr.at(y, x)[rgb]) / 127.5f - 1.0f;
        }
  }
  return out;
}

std::vector<FrameImage> decode(const LatentClip& latent, int patch) {
  if (patch < 1 || latent.channels != latent_channels(patch)) {
    throw std::invalid_argument("decode: " + std::to_string(latent.channels) + " channels do not match patch " +
                                std::to_string(patch));
  }
  if (latent.values.size() != static_cast<std::size_t>(latent.frames) * latent.frame_size() || latent.frames < 1) {
    throw std::invalid_argument("decode: malformed latent");
  }
  const int H = latent.height * patch, W = latent.width * patch;
  std::vector<FrameImage> out(static_cast<std::size_t>(latent.frames), FrameImage(H, W));
  for (int f = 0; f < latent.frames; ++f)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int rgb = 0; rgb < 3; ++rgb) {
          const int c = rgb * patch * patch + (y % patch) * patch + (x % patch);
          const double v = (static_cast<double>(latent.at(f, c, y / patch, x / patch)) + 1.0) * 127.5;
          const double r = std::floor(v + 0.5);
          out[f].at(y, x)[rgb] = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
        }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const FrameImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

FrameImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw std::runtime_error("ppm: not a binary P6 image");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error("ppm: malformed header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error("ppm: unsupported dimensions or depth");
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < pos + n) throw std::runtime_error("ppm: truncated raster");
  FrameImage img(h, w);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), n, img.pixels.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const FrameImage& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

FrameImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

FrameImage frame_grid(std::span<const FrameImage> frames, int columns) {
  if (frames.empty()) throw std::invalid_argument("frame_grid: no frames");
  if (columns < 1) throw std::invalid_argument("frame_grid: columns must be positive");
  const int H = frames[0].height, W = frames[0].width;
  const int cols = std::min<int>(columns, static_cast<int>(frames.size()));
  const int rows = (static_cast<int>(frames.size()) + columns - 1) / columns;
  // A single row only needs as many columns as there are frames.
  const int grid_cols = rows == 1 ? cols : columns;
  FrameImage out(rows * H, grid_cols * W);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    if (fr.height != H || fr.width != W) throw std::invalid_argument("frame_grid: frames have mixed sizes");
    const int oy = static_cast<int>(i) / columns * H;
    const int ox = static_cast<int>(i) % columns * W;
    for (int y = 0; y < H; ++y) std::copy_n(fr.at(y, 0), W * 3, out.at(oy + y, ox));
  }
  return out;
}

void write_frame_grid(std::span<const FrameImage> frames, int columns, const std::filesystem::path& path) {
  write_ppm(path, frame_grid(frames, columns));
}

void write_clip(const std::filesystem::path& path, const LatentClip& clip) {
  if (clip.values.size() != static_cast<std::size_t>(clip.frames) * clip.frame_size()) {
    throw std::invalid_argument("write_clip: malformed clip");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::int32_t header[4] = {clip.frames, clip.channels, clip.height, clip.width};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(clip.values.data()),
           static_cast<std::streamsize>(clip.values.size() * sizeof(float)));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

LatentClip read_clip(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open clip " + path.string());
  std::int32_t header[4];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (is.gcount() != sizeof(header)) throw std::runtime_error("truncated clip header in " + path.string());
  for (auto v : header) {
    if (v <= 0 || v > (1 << 16)) throw std::runtime_error("invalid clip header in " + path.string());
  }
  LatentClip clip(header[0], header[1], header[2], header[3]);
  const auto bytes = static_cast<std::streamsize>(clip.values.size() * sizeof(float));
  is.read(reinterpret_cast<char*>(clip.values.data()), bytes);
  if (is.gcount() != bytes) throw std::runtime_error("truncated clip values in " + path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in clip " + path.string());
  for (float v : clip.values) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in clip " + path.string());
  }
  return clip;
}

}  // namespace anchorforge::latent
