#include "storyworld/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>
#include <tuple>

namespace anchorforge::story {

namespace {

bool matches(const std::uint8_t* px, Color c) {
  const auto& rgb = kPaletteRgb[static_cast<int>(c)];
  for (int ch = 0; ch < 3; ++ch)
    if (std::abs(int(px[ch]) - int(rgb[ch])) > kColorTolerance) return false;
  return true;
}

bool subject_found(const Detection& d, const Subject& sub) {
  const double area = analytic_area(sub.shape, sub.size);
  return d.found && d.shape == sub.shape && d.pixels >= 0.5 * area && d.pixels <= 1.5 * area + 2.0 * sub.size;
}

int sign_of(double v) { return v > 0.5 ? 1 : (v < -0.5 ? -1 : 0); }

}  // namespace

Detection detect(const FrameImage& frame, Color color) {
  const int H = frame.height, W = frame.width;
  std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
  std::vector<int> stack;
  Detection best;
  int next = 0;
  for (int start = 0; start < H * W; ++start) {
    if (label[start] >= 0 || !matches(frame.at(start / W, start % W), color)) continue;
    int count = 0, x0 = W, x1 = -1, y0 = H, y1 = -1;
    double sx = 0, sy = 0;
    label[start] = next;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / W, x = p % W;
      ++count;
      sx += x;
      sy += y;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= H || n[1] >= W) continue;
        const int q = n[0] * W + n[1];
        if (label[q] >= 0 || !matches(frame.at(n[0], n[1]), color)) continue;
        label[q] = next;
        stack.push_back(q);
      }
    }
    ++next;
    if (count > best.pixels) {
      best.found = true;
      best.pixels = count;
      best.cx = sx / count;
      best.cy = sy / count;
      const double fill = double(count) / (double(x1 - x0 + 1) * (y1 - y0 + 1));
      best.shape = fill >= 0.95 ? ShapeKind::Square : (fill >= 0.72 ? ShapeKind::Circle : ShapeKind::Triangle);
    }
  }
  return best;
}

std::optional<Color> dominant_color(const FrameImage& frame) {
  std::array<int, kPaletteSize> counts{};
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < kPaletteSize; ++c)
        if (matches(frame.at(y, x), static_cast<Color>(c))) {
          ++counts[c];
          break;
        }
  const auto it = std::max_element(counts.begin(), counts.end());
  if (*it == 0) return std::nullopt;
  return static_cast<Color>(it - counts.begin());
}

OracleScores oracle_metrics(std::span<const FrameImage> frames, const StoryScript& script) {
  if (static_cast<int>(frames.size()) != script.f) throw std::invalid_argument("oracle_metrics: frame count mismatch");
  for (const auto& fr : frames) {
    if (fr.height != script.height || fr.width != script.width) {
      throw std::invalid_argument("oracle_metrics: resolution mismatch with script");
    }
  }
  const Track track = subject_track(script);
  const std::size_t n = script.subjects.size();

  // Per frame and subject: detection and whether it counts as found.
  std::vector<std::vector<Detection>> det(frames.size(), std::vector<Detection>(n));
  std::vector<std::vector<bool>> ok(frames.size(), std::vector<bool>(n, false));
  std::vector<std::optional<Color>> bg(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    bg[i] = dominant_color(frames[i]);
    for (std::size_t k = 0; k < n; ++k) {
      det[i][k] = detect(frames[i], script.subjects[k].color);
      ok[i][k] = subject_found(det[i][k], script.subjects[k]);
    }
  }

  OracleScores out;
  int good = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    bool all = true;
    for (std::size_t k = 0; k < n; ++k)
      if (track[i][k].visible && !ok[i][k]) all = false;
    good += all;
  }
  out.sc = double(good) / script.f;

  std::set<int> scripted, detected;
  for (const auto& e : script.events) scripted.insert(static_cast<int>(script.scene(e.scene_id).background));
  for (const auto& b : bg)
    if (b) detected.insert(static_cast<int>(*b));
  out.scene_d = std::min(1.0, double(detected.size()) / double(scripted.size()));

  auto index_of = [&](int id) {
    for (std::size_t k = 0; k < n; ++k)
      if (script.subjects[k].id == id) return k;
    throw std::invalid_argument("unknown subject id");
  };

  int pfa_hits = 0, nq_hits = 0;
  for (const auto& e : script.events) {
    bool match = true;
    for (int id : e.subject_ids) {
      const std::size_t k = index_of(id);
      int from = std::max(e.frame_range.start - 1, 1);
      const int to = e.frame_range.end;
      if (!track[from - 1][k].visible) from = e.frame_range.start;
      if (!track[from - 1][k].visible || !track[to - 1][k].visible) continue;
      if (!ok[from - 1][k] || !ok[to - 1][k]) {
        match = false;
        continue;
      }
      const int ex = track[to - 1][k].x - track[from - 1][k].x;
      const int ey = track[to - 1][k].y - track[from - 1][k].y;
      const double gx = det[to - 1][k].cx - det[from - 1][k].cx;
      const double gy = det[to - 1][k].cy - det[from - 1][k].cy;
      if (sign_of(ex) != sign_of(gx) || sign_of(ey) != sign_of(gy)) match = false;
    }
    pfa_hits += match;

    const int mid = (e.frame_range.start + e.frame_range.end + 1) / 2;
    bool present = bg[mid - 1] && *bg[mid - 1] == script.scene(e.scene_id).background;
    for (int id : e.subject_ids) {
      const std::size_t k = index_of(id);
      if (track[mid - 1][k].visible && !ok[mid - 1][k]) present = false;
    }
    nq_hits += present;
  }
  out.pfa = double(pfa_hits) / script.events.size();
  out.nq = double(nq_hits) / script.events.size();

  std::set<std::vector<int>> compositions;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::vector<int> key{bg[i] ? static_cast<int>(*bg[i]) : -1};
    for (std::size_t k = 0; k < n; ++k) {
      if (!ok[i][k]) continue;
      key.push_back(static_cast<int>(k));
      key.push_back(static_cast<int>(det[i][k].cx) / 8);
      key.push_back(static_cast<int>(det[i][k].cy) / 8);
    }
    compositions.insert(key);
  }
  out.shot_d = double(compositions.size()) / script.f;
  return out;
}

int bin_score(double value) {
  int score = 1;
  for (double edge : {0.2, 0.4, 0.6, 0.8})
    if (value >= edge) ++score;
  return score;
}

}  // namespace anchorforge::story
