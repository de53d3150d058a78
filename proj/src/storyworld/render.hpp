#pragma once

#include <vector>

#include "latentio/latent.hpp"
#include "storyworld/script.hpp"

namespace anchorforge::story {

using latent::FrameImage;

/// True when pixel (dx, dy) of a size x size box belongs to the shape.
bool shape_covers(ShapeKind shape, int size, int dx, int dy);

/// Continuous area of the shape inscribed in a size x size box.
double analytic_area(ShapeKind shape, int size);

/// Texture line/dot spacing for a style.
int texture_spacing(Style style);

/// One frame per story frame: scene background, texture in half-intensity
/// background color, then visible subjects at their tracked positions.
std::vector<FrameImage> render(const StoryScript& script);

}  // namespace anchorforge::story
