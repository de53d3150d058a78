#include "storyworld/script.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffcore/rng.hpp"

namespace anchorforge::story {

namespace {

constexpr std::array<std::string_view, 8> kColorNames{"black", "white", "red", "green",
                                                      "blue",  "yellow", "cyan", "magenta"};
constexpr std::array<std::string_view, 3> kShapeNames{"square", "circle", "triangle"};
constexpr std::array<std::string_view, 3> kTextureNames{"flat", "stripes", "dots"};
constexpr std::array<std::string_view, 7> kActionNames{"enter",     "move-left", "move-right", "move-up",
                                                       "move-down", "meet",      "exit"};
constexpr std::array<std::string_view, 3> kStyleNames{"classic", "pop", "noir"};

template <typename E, std::size_t N>
E parse_enum(const std::array<std::string_view, N>& names, std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

int sign(int v) { return (v > 0) - (v < 0); }

struct Lane {
  int top;
  int bottom;  // last valid top-left y
};

Lane lane_of(const StoryScript& s, std::size_t index) {
  const int n = static_cast<int>(s.subjects.size());
  const int lane_h = s.height / std::max(n, 1);
  const int top = static_cast<int>(index) * lane_h;
  return {top, top + lane_h - s.subjects[index].size};
}

int subject_index(const StoryScript& s, int id) {
  for (std::size_t i = 0; i < s.subjects.size(); ++i)
    if (s.subjects[i].id == id) return static_cast<int>(i);
  throw std::invalid_argument("event references unknown subject " + std::to_string(id));
}

}  // namespace

std::string_view name_of(Color c) { return kColorNames[static_cast<int>(c)]; }
std::string_view name_of(ShapeKind s) { return kShapeNames[static_cast<int>(s)]; }
std::string_view name_of(Texture t) { return kTextureNames[static_cast<int>(t)]; }
std::string_view name_of(Action a) { return kActionNames[static_cast<int>(a)]; }
std::string_view name_of(Style s) { return kStyleNames[static_cast<int>(s)]; }
Color parse_color(std::string_view s) { return parse_enum<Color>(kColorNames, s, "color"); }
ShapeKind parse_shape(std::string_view s) { return parse_enum<ShapeKind>(kShapeNames, s, "shape"); }
Texture parse_texture(std::string_view s) { return parse_enum<Texture>(kTextureNames, s, "texture"); }
Action parse_action(std::string_view s) { return parse_enum<Action>(kActionNames, s, "action"); }
Style parse_style(std::string_view s) { return parse_enum<Style>(kStyleNames, s, "style"); }

const Subject& StoryScript::subject(int id) const { return subjects[static_cast<std::size_t>(subject_index(*this, id))]; }

const Scene& StoryScript::scene(int id) const {
  for (const auto& sc : scenes)
    if (sc.id == id) return sc;
  throw std::invalid_argument("unknown scene " + std::to_string(id));
}

int event_at(const StoryScript& script, int frame) {
  for (std::size_t i = 0; i < script.events.size(); ++i)
    if (script.events[i].frame_range.contains(frame)) return static_cast<int>(i);
  throw std::invalid_argument("frame " + std::to_string(frame) + " is not covered by any event");
}

Track subject_track(const StoryScript& script) {
  const std::size_t n = script.subjects.size();
  // Frames are covered by events up to the last event's end; beyond that the
  // track holds still (only relevant for partial scripts during generation).
  int covered = 0;
  for (const auto& e : script.events) covered = std::max(covered, e.frame_range.end);

  std::vector<int> intro(n, script.f + 1), gone_after(n, script.f + 1);
  for (const auto& e : script.events) {
    for (int id : e.subject_ids) {
      const auto k = static_cast<std::size_t>(subject_index(script, id));
      intro[k] = std::min(intro[k], e.frame_range.start);
      if (e.action == Action::Exit) gone_after[k] = std::min(gone_after[k], e.frame_range.end);
    }
  }

  Track track(static_cast<std::size_t>(script.f), std::vector<SubjectState>(n));
  const int center = [&] {
    const int size = n ? script.subjects[0].size : 0;
    return (script.width - size) / 2;
  }();
  for (int frame = 1; frame <= script.f; ++frame) {
    auto& now = track[frame - 1];
    const auto* prev = frame > 1 ? &track[frame - 2] : nullptr;
    const Event* ev = nullptr;
    if (frame <= covered) ev = &script.events[static_cast<std::size_t>(event_at(script, frame))];
    double meet_target = 0;
    if (ev && ev->action == Action::Meet && prev) {
      int count = 0;
      for (int id : ev->subject_ids) {
        meet_target += (*prev)[subject_index(script, id)].x;
        ++count;
      }
      meet_target = count > 1 ? meet_target / count : center;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto& subj = script.subjects[k];
      auto& st = now[k];
      st.visible = frame >= intro[k] && frame <= gone_after[k];
      if (!st.visible) continue;
      if (!prev || !(*prev)[k].visible) {
        st.x = subj.x;
        st.y = subj.y;
        continue;
      }
      st.x = (*prev)[k].x;
      st.y = (*prev)[k].y;
      if (!ev || std::find(ev->subject_ids.begin(), ev->subject_ids.end(), subj.id) == ev->subject_ids.end()) continue;
      const int s = script.speed;
      int dx = 0, dy = 0;
      switch (ev->action) {
        case Action::MoveLeft: dx = -s; break;
        case Action::MoveRight: dx = s; break;
        case Action::MoveUp: dy = -s; break;
        case Action::MoveDown: dy = s; break;
        case Action::Enter: dx = sign(center - st.x) * std::min(s, std::abs(center - st.x)); break;
        case Action::Exit: dx = st.x < center ? -s : s; break;
        case Action::Meet: {
          const int target = static_cast<int>(std::lround(meet_target));
          dx = sign(target - st.x) * std::min(s, std::abs(target - st.x));
          break;
        }
      }
      const Lane lane = lane_of(script, k);
      st.x = std::clamp(st.x + dx, 0, script.width - subj.size);
      st.y = std::clamp(st.y + dy, lane.top, lane.bottom);
    }
  }
  return track;
}

double measure_motion(const StoryScript& script, const Track& track) {
  double total = 0;
  int count = 0;
  for (int frame = 2; frame <= script.f; ++frame) {
    double sum = 0;
    int n = 0;
    for (std::size_t k = 0; k < script.subjects.size(); ++k) {
      const auto& a = track[frame - 2][k];
      const auto& b = track[frame - 1][k];
      if (!a.visible || !b.visible) continue;
      sum += std::hypot(double(b.x - a.x), double(b.y - a.y));
      ++n;
    }
    if (n) {
      total += sum / n;
      ++count;
    }
  }
  return count ? total / count : 0.0;
}

void validate(const StoryScript& s) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid script: " + m); };
  if (s.f < 1) fail("f must be positive");
  if (s.width < 1 || s.height < 1) fail("resolution must be positive");
  if (s.subjects.empty()) fail("no subjects");
  if (s.events.empty()) fail("no events");
  if (s.motion_scalar < 0) fail("motion_scalar must be non-negative");
  for (std::size_t i = 0; i < s.subjects.size(); ++i) {
    for (std::size_t j = i + 1; j < s.subjects.size(); ++j)
      if (s.subjects[i].id == s.subjects[j].id) fail("duplicate subject id");
    const auto& sub = s.subjects[i];
    if (sub.size < 1 || sub.x < 0 || sub.y < 0 || sub.x + sub.size > s.width || sub.y + sub.size > s.height) {
      fail("subject " + std::to_string(sub.id) + " lies outside the frame");
    }
  }
  for (std::size_t i = 0; i < s.scenes.size(); ++i)
    for (std::size_t j = i + 1; j < s.scenes.size(); ++j)
      if (s.scenes[i].id == s.scenes[j].id) fail("duplicate scene id");
  std::vector<bool> covered(static_cast<std::size_t>(s.f) + 1, false);
  int prev_start = 0;
  for (const auto& e : s.events) {
    const auto& r = e.frame_range;
    if (r.start < 1 || r.start > r.end || r.end > s.f) fail("event range out of bounds");
    if (r.start < prev_start) fail("events are not ordered by start");
    prev_start = r.start;
    if (e.subject_ids.empty()) fail("event without subjects");
    for (int id : e.subject_ids) (void)s.subject(id);
    (void)s.scene(e.scene_id);
    for (int k = r.start; k <= r.end; ++k) covered[k] = true;
  }
  for (int k = 1; k <= s.f; ++k)
    if (!covered[k]) fail("frame " + std::to_string(k) + " is not covered by any event");
}

StoryScript generate_script(std::uint64_t seed, int f, int n_events, const GenerateOptions& opts) {
  if (n_events < 1) throw std::invalid_argument("generate_script: n_events must be at least 1");
  if (f < n_events) throw std::invalid_argument("generate_script: f must be at least n_events");
  diff::SeededRng rng(diff::derive_seed(seed, "storyworld.script"));
  auto pick = [&](int lo, int hi) { return static_cast<int>(rng.uniform_int(lo, hi)); };

  StoryScript s;
  s.seed = seed;
  s.f = f;
  s.width = opts.width;
  s.height = opts.height;
  s.style = static_cast<Style>(pick(0, 2));
  s.speed = pick(1, 2);
  s.source_interval = pick(0, 1) ? 139 : 69;

  int n_subjects = pick(1, 3);
  const int base_size = std::max(4, std::min(s.width, s.height) / 5);
  while (n_subjects > 1 && s.height / n_subjects < base_size) --n_subjects;
  const int size = std::min(base_size, s.height / n_subjects);
  if (size > s.width) throw std::invalid_argument("generate_script: frame too small for a subject");

  std::array<int, kPaletteSize> colors;
  std::iota(colors.begin(), colors.end(), 0);
  for (int i = kPaletteSize - 1; i > 0; --i) std::swap(colors[i], colors[pick(0, i)]);

  for (int k = 0; k < n_subjects; ++k) {
    Subject sub;
    sub.id = k;
    sub.shape = static_cast<ShapeKind>(pick(0, 2));
    sub.color = static_cast<Color>(colors[k]);
    sub.size = size;
    s.subjects.push_back(sub);
  }
  for (int k = 0; k < n_subjects; ++k) {
    const Lane lane = lane_of(s, static_cast<std::size_t>(k));
    s.subjects[k].x = pick(0, s.width - size);
    s.subjects[k].y = pick(lane.top, lane.bottom);
  }

  const int n_scenes = pick(1, std::min(n_events, kPaletteSize - n_subjects));
  for (int k = 0; k < n_scenes; ++k) {
    s.scenes.push_back({k, static_cast<Color>(colors[n_subjects + k]), static_cast<Texture>(pick(0, 2))});
  }

  // Event lengths: at least two frames each when there is room.
  const int min_len = f >= 2 * n_events ? 2 : 1;
  std::vector<int> lengths(static_cast<std::size_t>(n_events), min_len);
  for (int left = f - min_len * n_events; left > 0; --left) ++lengths[pick(0, n_events - 1)];

  // Scene changes at n_scenes - 1 distinct event boundaries.
  std::vector<int> boundaries(static_cast<std::size_t>(std::max(0, n_events - 1)));
  std::iota(boundaries.begin(), boundaries.end(), 1);
  for (int i = static_cast<int>(boundaries.size()) - 1; i > 0; --i) std::swap(boundaries[i], boundaries[pick(0, i)]);
  boundaries.resize(static_cast<std::size_t>(n_scenes - 1));
  std::vector<int> scene_of(static_cast<std::size_t>(n_events), 0);
  for (int e = 1; e < n_events; ++e)
    scene_of[e] = scene_of[e - 1] + (std::find(boundaries.begin(), boundaries.end(), e) != boundaries.end());

  std::vector<int> intro_event(static_cast<std::size_t>(n_subjects), 0);
  for (int k = 1; k < n_subjects; ++k) intro_event[k] = pick(0, n_events - 1);

  std::vector<bool> exited(static_cast<std::size_t>(n_subjects), false);
  int start = 1;
  for (int e = 0; e < n_events; ++e) {
    Event ev;
    ev.scene_id = scene_of[e];
    ev.frame_range = {start, start + lengths[e] - 1};
    start += lengths[e];

    std::vector<int> fresh, on_screen;
    for (int k = 0; k < n_subjects; ++k) {
      if (intro_event[k] == e) fresh.push_back(k);
      else if (intro_event[k] < e && !exited[k]) on_screen.push_back(k);
    }
    if (!fresh.empty()) {
      ev.action = Action::Enter;
      ev.subject_ids = fresh;
      s.events.push_back(ev);
      continue;
    }

    const Event* prev = &s.events.back();
    Event best = ev;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Event cand = ev;
      const int kind = pick(0, on_screen.size() >= 2 ? 6 : 5);
      if (kind == 6) {
        cand.action = Action::Meet;
        const int a = pick(0, static_cast<int>(on_screen.size()) - 1);
        int b = pick(0, static_cast<int>(on_screen.size()) - 2);
        if (b >= a) ++b;
        cand.subject_ids = {std::min(on_screen[a], on_screen[b]), std::max(on_screen[a], on_screen[b])};
      } else {
        cand.subject_ids = {on_screen[pick(0, static_cast<int>(on_screen.size()) - 1)]};
        constexpr Action kSingle[] = {Action::MoveLeft, Action::MoveRight, Action::MoveUp,
                                      Action::MoveDown, Action::MoveLeft,  Action::Exit};
        cand.action = kSingle[kind];
        if (cand.action == Action::Exit && on_screen.size() < 2) cand.action = Action::MoveRight;
      }
      best = cand;
      const bool repeats = cand.action == prev->action && cand.subject_ids == prev->subject_ids &&
                           cand.scene_id == prev->scene_id;
      if (repeats) continue;
      // Prefer actions that visibly move every acting subject.
      StoryScript trial = s;
      trial.events.push_back(cand);
      const Track tr = subject_track(trial);
      const int from = std::max(1, cand.frame_range.start - 1), to = cand.frame_range.end;
      bool moves = true;
      for (int id : cand.subject_ids) {
        const auto& a = tr[from - 1][id];
        const auto& b = tr[to - 1][id];
        if (a.x == b.x && a.y == b.y) moves = false;
      }
      if (moves) break;
    }
    if (best.action == Action::Exit) exited[best.subject_ids[0]] = true;
    s.events.push_back(best);
  }

  s.motion_scalar = measure_motion(s, subject_track(s));
  validate(s);
  return s;
}

nlohmann::json to_json(const StoryScript& s) {
  using nlohmann::json;
  json subjects = json::array(), scenes = json::array(), events = json::array();
  for (const auto& sub : s.subjects) {
    subjects.push_back({{"id", sub.id},
                        {"shape", name_of(sub.shape)},
                        {"color", name_of(sub.color)},
                        {"size", sub.size},
                        {"x", sub.x},
                        {"y", sub.y}});
  }
  for (const auto& sc : s.scenes) {
    scenes.push_back({{"id", sc.id}, {"background", name_of(sc.background)}, {"texture", name_of(sc.texture)}});
  }
  for (const auto& e : s.events) {
    events.push_back({{"subject_ids", e.subject_ids},
                      {"action", name_of(e.action)},
                      {"scene_id", e.scene_id},
                      {"frame_range", {e.frame_range.start, e.frame_range.end}}});
  }
  return {{"seed", s.seed},         {"f", s.f},
          {"width", s.width},       {"height", s.height},
          {"subjects", subjects},   {"scenes", scenes},
          {"events", events},       {"style", name_of(s.style)},
          {"speed", s.speed},       {"motion_scalar", s.motion_scalar},
          {"source_interval", s.source_interval}, {"fps", s.fps}};
}

StoryScript script_from_json(const nlohmann::json& j) {
  StoryScript s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.f = j.at("f").get<int>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& js : j.at("subjects")) {
      s.subjects.push_back({js.at("id").get<int>(), parse_shape(js.at("shape").get<std::string>()),
                            parse_color(js.at("color").get<std::string>()), js.at("size").get<int>(),
                            js.at("x").get<int>(), js.at("y").get<int>()});
    }
    for (const auto& js : j.at("scenes")) {
      s.scenes.push_back({js.at("id").get<int>(), parse_color(js.at("background").get<std::string>()),
                          parse_texture(js.at("texture").get<std::string>())});
    }
    for (const auto& je : j.at("events")) {
      Event e;
      e.subject_ids = je.at("subject_ids").get<std::vector<int>>();
      e.action = parse_action(je.at("action").get<std::string>());
      e.scene_id = je.at("scene_id").get<int>();
      const auto r = je.at("frame_range").get<std::vector<int>>();
      if (r.size() != 2) throw std::invalid_argument("frame_range must have two entries");
      e.frame_range = {r[0], r[1]};
      s.events.push_back(std::move(e));
    }
    s.style = parse_style(j.at("style").get<std::string>());
    s.speed = j.at("speed").get<int>();
    s.motion_scalar = j.at("motion_scalar").get<double>();
    s.source_interval = j.at("source_interval").get<int>();
    s.fps = j.value("fps", 24);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed script JSON: ") + e.what());
  }
  validate(s);
  return s;
}

}  // namespace anchorforge::story
