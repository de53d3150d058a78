#include "storyworld/render.hpp"

#include <cmath>
#include <numbers>

namespace anchorforge::story {

bool shape_covers(ShapeKind shape, int size, int dx, int dy) {
  const double cx = dx + 0.5 - size / 2.0;
  const double cy = dy + 0.5 - size / 2.0;
  switch (shape) {
    case ShapeKind::Square: return true;
    case ShapeKind::Circle: return cx * cx + cy * cy <= size * size / 4.0;
    // Apex at the top center, base along the bottom edge.
    case ShapeKind::Triangle: return std::abs(cx) <= (dy + 0.5) / 2.0;
  }
  return false;
}

double analytic_area(ShapeKind shape, int size) {
  switch (shape) {
    case ShapeKind::Square: return double(size) * size;
    case ShapeKind::Circle: return std::numbers::pi * size * size / 4.0;
    case ShapeKind::Triangle: return double(size) * size / 2.0;
  }
  return 0.0;
}

int texture_spacing(Style style) {
  switch (style) {
    case Style::Classic: return 4;
    case Style::Pop: return 3;
    case Style::Noir: return 6;
  }
  return 4;
}

std::vector<FrameImage> render(const StoryScript& script) {
  validate(script);
  const Track track = subject_track(script);
  const int sp = texture_spacing(script.style);
  std::vector<FrameImage> frames;
  frames.reserve(static_cast<std::size_t>(script.f));
  for (int frame = 1; frame <= script.f; ++frame) {
    const Scene& scene = script.scene(script.events[static_cast<std::size_t>(event_at(script, frame))].scene_id);
    const auto& bg = kPaletteRgb[static_cast<int>(scene.background)];
    FrameImage img(script.height, script.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        bool mark = false;
        if (scene.texture == Texture::Stripes) mark = y % sp == sp - 1;
        if (scene.texture == Texture::Dots) mark = y % sp == sp / 2 && x % sp == sp / 2;
        auto* px = img.at(y, x);
        for (int ch = 0; ch < 3; ++ch) px[ch] = mark ? static_cast<std::uint8_t>((bg[ch] + 1) / 2) : bg[ch];
      }
    for (std::size_t k = 0; k < script.subjects.size(); ++k) {
      const auto& st = track[frame - 1][k];
      if (!st.visible) continue;
      const auto& sub = script.subjects[k];
      const auto& rgb = kPaletteRgb[static_cast<int>(sub.color)];
      for (int dy = 0; dy < sub.size; ++dy)
        for (int dx = 0; dx < sub.size; ++dx) {
          const int y = st.y + dy, x = st.x + dx;
          if (y < 0 || x < 0 || y >= img.height || x >= img.width) continue;
          if (!shape_covers(sub.shape, sub.size, dx, dy)) continue;
          auto* px = img.at(y, x);
          px[0] = rgb[0];
          px[1] = rgb[1];
          px[2] = rgb[2];
        }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

}  // namespace anchorforge::story
