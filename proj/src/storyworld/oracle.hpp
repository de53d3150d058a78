#pragma once

#include <optional>
#include <span>

#include "storyworld/render.hpp"

namespace anchorforge::story {

/// A pixel matches a palette color when every channel is within this distance.
inline constexpr int kColorTolerance = 64;

struct Detection {
  bool found = false;
  int pixels = 0;
  double cx = 0, cy = 0;  // centroid
  ShapeKind shape = ShapeKind::Square;
};

/// Largest 4-connected component of pixels matching `color`, with its shape
/// class read from the bounding-box fill ratio.
Detection detect(const FrameImage& frame, Color color);

/// Most frequent palette color among matching pixels.
std::optional<Color> dominant_color(const FrameImage& frame);

struct OracleScores {
  double sc = 0;       // frames where every visible subject is found with its color and shape
  double scene_d = 0;  // distinct detected backgrounds / distinct scripted backgrounds, capped at 1
  double pfa = 0;      // events whose displacement signs match the script
  double nq = 0;       // events whose scene and actors are present at their middle frame
  double shot_d = 0;   // distinct frame compositions / f
};

OracleScores oracle_metrics(std::span<const FrameImage> frames, const StoryScript& script);

/// 1..5 from bins [0,.2), [.2,.4), [.4,.6), [.6,.8), [.8,1].
int bin_score(double value);

}  // namespace anchorforge::story
