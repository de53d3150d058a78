#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace anchorforge::story {

enum class Color : std::uint8_t { Black, White, Red, Green, Blue, Yellow, Cyan, Magenta };
enum class ShapeKind : std::uint8_t { Square, Circle, Triangle };
enum class Texture : std::uint8_t { Flat, Stripes, Dots };
enum class Action : std::uint8_t { Enter, MoveLeft, MoveRight, MoveUp, MoveDown, Meet, Exit };
enum class Style : std::uint8_t { Classic, Pop, Noir };

inline constexpr int kPaletteSize = 8;
inline constexpr std::array<std::array<std::uint8_t, 3>, kPaletteSize> kPaletteRgb{{
    {0, 0, 0}, {255, 255, 255}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}, {0, 255, 255}, {255, 0, 255},
}};

std::string_view name_of(Color c);
std::string_view name_of(ShapeKind s);
std::string_view name_of(Texture t);
std::string_view name_of(Action a);
std::string_view name_of(Style s);
Color parse_color(std::string_view s);
ShapeKind parse_shape(std::string_view s);
Texture parse_texture(std::string_view s);
Action parse_action(std::string_view s);
Style parse_style(std::string_view s);

/// Inclusive, 1-based frame range.
struct FrameRange {
  int start = 1;
  int end = 1;
  int length() const { return end - start + 1; }
  bool contains(int frame) const { return frame >= start && frame <= end; }
  bool operator==(const FrameRange&) const = default;
};

struct Subject {
  int id = 0;
  ShapeKind shape = ShapeKind::Square;
  Color color = Color::Red;
  int size = 6;
  // Top-left pixel position when the subject first appears.
  int x = 0;
  int y = 0;
  bool operator==(const Subject&) const = default;
};

struct Scene {
  int id = 0;
  Color background = Color::Blue;
  Texture texture = Texture::Flat;
  bool operator==(const Scene&) const = default;
};

struct Event {
  std::vector<int> subject_ids;
  Action action = Action::MoveRight;
  int scene_id = 0;
  FrameRange frame_range;
  bool operator==(const Event&) const = default;
};

struct StoryScript {
  std::uint64_t seed = 0;
  int f = 8;
  int width = 32;
  int height = 32;
  std::vector<Subject> subjects;
  std::vector<Scene> scenes;
  std::vector<Event> events;  // ordered by start
  Style style = Style::Classic;
  int speed = 1;               // pixels per frame moved by acting subjects
  double motion_scalar = 0.0;  // mean per-frame subject displacement, derived
  int source_interval = 69;    // frames between story frames in the notional source video
  int fps = 24;
  bool operator==(const StoryScript&) const = default;

  const Subject& subject(int id) const;
  const Scene& scene(int id) const;
};

struct GenerateOptions {
  int width = 32;
  int height = 32;
};

/// Deterministic script whose event ranges partition [1, f].
StoryScript generate_script(std::uint64_t seed, int f, int n_events, const GenerateOptions& opts = {});

/// Throws std::invalid_argument describing the first violated invariant.
void validate(const StoryScript& script);

/// Per-frame subject state derived from the script.
struct SubjectState {
  bool visible = false;
  int x = 0;
  int y = 0;
};

/// track[frame - 1][subject index] for every frame and subject.
using Track = std::vector<std::vector<SubjectState>>;
Track subject_track(const StoryScript& script);

/// Mean per-frame displacement of subjects visible in consecutive frames.
double measure_motion(const StoryScript& script, const Track& track);

/// Index of the event covering `frame` (first match).
int event_at(const StoryScript& script, int frame);

nlohmann::json to_json(const StoryScript& script);
StoryScript script_from_json(const nlohmann::json& j);

}  // namespace anchorforge::story
