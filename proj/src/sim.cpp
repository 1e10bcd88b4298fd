#include "cb/sim.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cb/io.hpp"

namespace cb {
namespace sim {

namespace {

constexpr float kBackground[3] = {0.10f, 0.10f, 0.12f};
// graspable-center marker: a thin ring so the exact center keeps the object color
constexpr float kMarkerColor[3] = {1.0f, 0.85f, 0.10f};
constexpr float kMarkerInner = 0.022f;
constexpr float kMarkerOuter = 0.040f;
constexpr float kPlaceMargin = 0.12f;
constexpr float kPlacePad = 0.012f;
constexpr float kRingInnerFrac = 0.55f;
constexpr float kRectAspect = 0.55f;
constexpr int kMaxPlacementTries = 1000;

void hsv_to_rgb(double h, double s, double v, float out[3]) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (i % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  out[0] = static_cast<float>(r);
  out[1] = static_cast<float>(g);
  out[2] = static_cast<float>(b);
}

// Bounding radius used for the overlap constraint.
float bound_radius(const ObjectSpec& o) {
  return (o.shape == ShapeKind::Square || o.shape == ShapeKind::Rect)
             ? o.size * 1.4142136f
             : o.size;
}

bool inside(const ObjectSpec& o, float px, float py) {
  const float dx = px - o.x, dy = py - o.y;
  const float c = std::cos(o.theta), s = std::sin(o.theta);
  const float u = c * dx + s * dy;
  const float v = -s * dx + c * dy;
  switch (o.shape) {
    case ShapeKind::Square:
      return std::abs(u) <= o.size && std::abs(v) <= o.size;
    case ShapeKind::Rect:
      return std::abs(u) <= o.size && std::abs(v) <= o.size * kRectAspect;
    case ShapeKind::Disc:
      return u * u + v * v <= o.size * o.size;
    case ShapeKind::Ring: {
      const float r2 = u * u + v * v;
      const float inner = o.size * kRingInnerFrac;
      return r2 <= o.size * o.size && r2 >= inner * inner;
    }
  }
  return false;
}

}  // namespace

const char* task_name(Task t) { return t == Task::Picking ? "picking" : "pouring"; }

const char* domain_name(DomainKind d) {
  switch (d) {
    case DomainKind::SourcePlain: return "source_plain";
    case DomainKind::SourceExtrainfo: return "source_extrainfo";
    case DomainKind::Target: return "target";
  }
  return "?";
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Rect: return "rect";
    case ShapeKind::Disc: return "disc";
    case ShapeKind::Ring: return "ring";
  }
  return "?";
}

const char* role_name(ObjectRole r) {
  switch (r) {
    case ObjectRole::Template: return "template";
    case ObjectRole::TaskObject: return "task_object";
    case ObjectRole::Clutter: return "clutter";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "picking") return Task::Picking;
  if (s == "pouring") return Task::Pouring;
  throw ConfigError("unknown task '" + s + "' (valid: picking, pouring)");
}

DomainKind parse_domain(const std::string& s) {
  if (s == "source_plain") return DomainKind::SourcePlain;
  if (s == "source_extrainfo") return DomainKind::SourceExtrainfo;
  if (s == "target") return DomainKind::Target;
  throw ConfigError("unknown domain kind '" + s + "'");
}

const ObjectSpec* SceneSpec::graspable() const {
  for (auto it = objects.rbegin(); it != objects.rend(); ++it)
    if (it->graspable()) return &*it;
  return nullptr;
}

ObjectSpec template_object(Task task) {
  ObjectSpec o;
  o.role = ObjectRole::Template;
  o.id = 0;
  if (task == Task::Picking) {
    o.shape = ShapeKind::Square;
    o.size = 0.065f;
  } else {
    o.shape = ShapeKind::Ring;
    o.size = 0.070f;
  }
  o.color[0] = 0.93f;
  o.color[1] = 0.93f;
  o.color[2] = 0.90f;
  return o;
}

ObjectSpec task_object(Task task, int id) {
  ObjectSpec o;
  o.role = ObjectRole::TaskObject;
  o.id = id;
  if (task == Task::Pouring) {
    if (id < 1 || id > kNumPouringCups)
      throw Error("pouring task object id out of range: " + std::to_string(id));
    o.shape = ShapeKind::Ring;
    // Cup 1 is deliberately close to the template cup's appearance.
    switch (id) {
      case 1: o.color[0] = 0.85f; o.color[1] = 0.85f; o.color[2] = 0.84f; o.size = 0.068f; break;
      case 2: o.color[0] = 0.85f; o.color[1] = 0.20f; o.color[2] = 0.18f; o.size = 0.064f; break;
      default: o.color[0] = 0.20f; o.color[1] = 0.35f; o.color[2] = 0.85f; o.size = 0.072f; break;
    }
    return o;
  }
  if (id < 1 || id > kNumPickingObjects)
    throw Error("picking task object id out of range: " + std::to_string(id));
  constexpr ShapeKind kFamily[3] = {ShapeKind::Square, ShapeKind::Rect, ShapeKind::Disc};
  o.shape = kFamily[(id - 1) % 3];
  // Seen ids take golden-angle hues; unseen ids (16..20) take held-out hues
  // halfway between, same shape family and size range.
  const bool unseen = id > kNumSeenPicking;
  const double hue = unseen ? std::fmod((id - kNumSeenPicking - 0.5) * 137.50776, 360.0)
                            : std::fmod(id * 137.50776, 360.0);
  hsv_to_rgb(hue, 0.80, 0.90, o.color);
  constexpr float kSizes[5] = {0.055f, 0.065f, 0.075f, 0.060f, 0.070f};
  o.size = kSizes[(id - 1) % 5] + (unseen ? 0.003f : 0.0f);
  return o;
}

ObjectSpec clutter_object(int id) {
  if (id < 1 || id > kNumClutter)
    throw Error("clutter id out of range: " + std::to_string(id));
  ObjectSpec o;
  o.role = ObjectRole::Clutter;
  o.id = id;
  switch (id) {
    case 1:  // template lookalike
      o.shape = ShapeKind::Square;
      o.color[0] = 0.80f; o.color[1] = 0.80f; o.color[2] = 0.80f;
      o.size = 0.060f;
      break;
    case 2:  // cup-like ring
      o.shape = ShapeKind::Ring;
      o.color[0] = 0.62f; o.color[1] = 0.62f; o.color[2] = 0.66f;
      o.size = 0.066f;
      break;
    case 3: o.shape = ShapeKind::Disc; hsv_to_rgb(220, 0.45, 0.42, o.color); o.size = 0.050f; break;
    case 4: o.shape = ShapeKind::Rect; hsv_to_rgb(80, 0.45, 0.40, o.color); o.size = 0.070f; break;
    case 5: o.shape = ShapeKind::Ring; hsv_to_rgb(25, 0.50, 0.38, o.color); o.size = 0.055f; break;
    case 6: o.shape = ShapeKind::Disc; hsv_to_rgb(170, 0.45, 0.45, o.color); o.size = 0.062f; break;
    case 7: o.shape = ShapeKind::Rect; hsv_to_rgb(280, 0.40, 0.42, o.color); o.size = 0.050f; break;
    default: o.shape = ShapeKind::Square; hsv_to_rgb(350, 0.45, 0.35, o.color); o.size = 0.058f; break;
  }
  return o;
}

std::vector<int> seen_ids(Task task) {
  std::vector<int> ids;
  const int n = task == Task::Picking ? kNumSeenPicking : kNumPouringCups;
  for (int i = 1; i <= n; ++i) ids.push_back(i);
  return ids;
}

std::vector<int> unseen_ids(Task task) {
  std::vector<int> ids;
  if (task == Task::Picking)
    for (int i = kNumSeenPicking + 1; i <= kNumPickingObjects; ++i) ids.push_back(i);
  return ids;
}

namespace {

void place(ObjectSpec& o, const std::vector<ObjectSpec>& placed, Rng& rng) {
  for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
    o.x = static_cast<float>(rng.uniform(kPlaceMargin, 1.0 - kPlaceMargin));
    o.y = static_cast<float>(rng.uniform(kPlaceMargin, 1.0 - kPlaceMargin));
    o.theta = static_cast<float>(rng.uniform(0.0, 3.14159265358979));
    bool ok = true;
    for (const ObjectSpec& p : placed) {
      const float dx = o.x - p.x, dy = o.y - p.y;
      const float min_d = bound_radius(o) + bound_radius(p) + kPlacePad;
      if (dx * dx + dy * dy < min_d * min_d) {
        ok = false;
        break;
      }
    }
    if (ok) return;
  }
  throw Error("sample_scene: placement failed after " +
              std::to_string(kMaxPlacementTries) + " attempts (overcrowded scene)");
}

}  // namespace

SceneSpec sample_scene(Task task, DomainKind domain, std::optional<int> object_id,
                       std::uint64_t seed) {
  Rng rng = derive_rng(seed, "scene");
  SceneSpec scene;
  scene.task = task;
  scene.domain = domain;
  scene.seed = seed;

  std::optional<ObjectSpec> main;
  if (domain == DomainKind::Target) {
    if (object_id) {
      if (task == Task::Pouring && (*object_id < 1 || *object_id > kNumPouringCups))
        throw Error("invalid pouring object id " + std::to_string(*object_id));
      if (task == Task::Picking && (*object_id < 1 || *object_id > kNumPickingObjects))
        throw Error("invalid picking object id " + std::to_string(*object_id));
      main = task_object(task, *object_id);
    }
  } else {
    main = template_object(task);
  }

  std::vector<ObjectSpec> placed;
  if (main) {
    place(*main, placed, rng);
    placed.push_back(*main);
  }

  const bool with_clutter = domain != DomainKind::SourcePlain;
  if (with_clutter) {
    const int n_clutter = rng.uniform_int(2, 6);
    for (int i = 0; i < n_clutter; ++i) {
      ObjectSpec c = clutter_object(rng.uniform_int(1, kNumClutter));
      place(c, placed, rng);
      placed.push_back(c);
    }
  }

  // Painter order: clutter first, graspable last.
  for (const ObjectSpec& o : placed)
    if (!o.graspable()) scene.objects.push_back(o);
  for (const ObjectSpec& o : placed)
    if (o.graspable()) scene.objects.push_back(o);
  return scene;
}

SceneSpec sample_scene(Task task, DomainKind domain, std::optional<int> object_id,
                       Rng& rng) {
  return sample_scene(task, domain, object_id, rng.next_u64());
}

SceneSpec strip_clutter(const SceneSpec& scene) {
  SceneSpec out = scene;
  out.objects.clear();
  for (const ObjectSpec& o : scene.objects)
    if (o.graspable()) out.objects.push_back(o);
  return out;
}

Image render(const SceneSpec& scene) {
  Image img({kImageC, kImageH, kImageW});
  const long long plane = static_cast<long long>(kImageH) * kImageW;
  for (int i = 0; i < kImageH; ++i) {
    const float py = 1.0f - (i + 0.5f) / kImageH;
    for (int j = 0; j < kImageW; ++j) {
      const float px = (j + 0.5f) / kImageW;
      const float* color = kBackground;
      // topmost object wins: scan painter order from the back
      for (auto it = scene.objects.rbegin(); it != scene.objects.rend(); ++it) {
        if (it->graspable()) {
          const float dx = px - it->x, dy = py - it->y;
          const float d2 = dx * dx + dy * dy;
          if (d2 >= kMarkerInner * kMarkerInner && d2 <= kMarkerOuter * kMarkerOuter) {
            color = kMarkerColor;
            break;
          }
        }
        if (inside(*it, px, py)) {
          color = it->color;
          break;
        }
      }
      const long long pix = static_cast<long long>(i) * kImageW + j;
      img.data[0 * plane + pix] = color[0];
      img.data[1 * plane + pix] = color[1];
      img.data[2 * plane + pix] = color[2];
    }
  }
  return img;
}

Vec2 execute(const Trajectory& traj, const SceneSpec&) {
  double x = kStartX, y = kStartY;
  for (int t = 0; t < traj.u.rows(); ++t) {
    x += traj.u(t, 0);
    y += traj.u(t, 1);
  }
  Vec2 f;
  f.x = static_cast<float>(std::clamp(x, 0.0, 1.0));
  f.y = static_cast<float>(std::clamp(y, 0.0, 1.0));
  return f;
}

Vec2 goal_point(const SceneSpec& scene) {
  const ObjectSpec* obj = scene.graspable();
  if (!obj) throw Error("scene has no graspable object");
  Vec2 g{obj->x, obj->y};
  if (scene.task == Task::Pouring) g.y += obj->size;  // pour point above the cup
  return g;
}

float score_picking(Vec2 final_pose, const SceneSpec& scene) {
  if (scene.task != Task::Picking) throw Error("score_picking on non-picking scene");
  const ObjectSpec* obj = scene.graspable();
  if (!obj) throw Error("score_picking: no graspable object in scene");
  const float dx = final_pose.x - obj->x, dy = final_pose.y - obj->y;
  const float d2 = dx * dx + dy * dy;  // squared form keeps the boundary exact
  if (d2 <= kPickInnerRadius * kPickInnerRadius) return 1.0f;
  if (d2 <= kPickOuterRadius * kPickOuterRadius) return 0.5f;
  return 0.0f;
}

float score_pouring(Vec2 final_pose, const SceneSpec& scene) {
  if (scene.task != Task::Pouring) throw Error("score_pouring on non-pouring scene");
  const ObjectSpec* obj = scene.graspable();
  if (!obj) throw Error("score_pouring: no target cup in scene");
  const Vec2 pour = goal_point(scene);
  const float dx = final_pose.x - pour.x, dy = final_pose.y - pour.y;
  // boundary inclusive
  return dx * dx + dy * dy <= kPourRadius * kPourRadius ? 1.0f : 0.0f;
}

float score(Vec2 final_pose, const SceneSpec& scene) {
  return scene.task == Task::Picking ? score_picking(final_pose, scene)
                                     : score_pouring(final_pose, scene);
}

Trajectory oracle_trajectory(const SceneSpec& scene, Rng& rng, double noise_sigma) {
  const Vec2 goal = goal_point(scene);
  const double gx = goal.x - kStartX, gy = goal.y - kStartY;
  const double dist = std::sqrt(gx * gx + gy * gy);
  if (dist > kTrajLen * static_cast<double>(kStepBound))
    throw Error("oracle_trajectory: goal unreachable within T*delta");
  Trajectory traj;
  for (int t = 0; t < kTrajLen; ++t) {
    double ux = gx / kTrajLen + noise_sigma * rng.normal();
    double uy = gy / kTrajLen + noise_sigma * rng.normal();
    const double norm = std::sqrt(ux * ux + uy * uy);
    if (norm > kStepBound) {
      ux *= kStepBound / norm;
      uy *= kStepBound / norm;
    }
    traj.u(t, 0) = static_cast<float>(ux);
    traj.u(t, 1) = static_cast<float>(uy);
  }
  return traj;
}

Tensor traj_to_tensor(const Trajectory& t) {
  Tensor out({kTrajLen * kActionDim});
  for (int i = 0; i < kTrajLen; ++i)
    for (int j = 0; j < kActionDim; ++j) out.data[i * kActionDim + j] = t.u(i, j);
  return out;
}

Trajectory traj_from_tensor(const Tensor& t) {
  if (t.size() != kTrajLen * kActionDim)
    throw ShapeError("trajectory tensor must have " +
                     std::to_string(kTrajLen * kActionDim) + " elements, got " +
                     shape_str(t.shape));
  Trajectory out;
  for (int i = 0; i < kTrajLen; ++i)
    for (int j = 0; j < kActionDim; ++j) out.u(i, j) = t.data[i * kActionDim + j];
  return out;
}

std::string scene_to_text(const SceneSpec& scene) {
  std::ostringstream os;
  os << "scene " << task_name(scene.task) << " " << domain_name(scene.domain) << " "
     << scene.seed << "\n";
  char line[256];
  for (const ObjectSpec& o : scene.objects) {
    std::snprintf(line, sizeof(line), "%s %d %s %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  role_name(o.role), o.id, shape_name(o.shape), o.color[0], o.color[1],
                  o.color[2], o.size, o.x, o.y, o.theta);
    os << line;
  }
  os << "end\n";
  return os.str();
}

SceneSpec scene_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  SceneSpec scene;
  std::string task_s, domain_s;
  if (!(is >> tag >> task_s >> domain_s >> scene.seed) || tag != "scene")
    throw IoError("scene text: bad header");
  scene.task = parse_task(task_s);
  scene.domain = parse_domain(domain_s);
  std::string role_s;
  while (is >> role_s) {
    if (role_s == "end") return scene;
    ObjectSpec o;
    std::string shape_s;
    if (!(is >> o.id >> shape_s >> o.color[0] >> o.color[1] >> o.color[2] >> o.size >>
          o.x >> o.y >> o.theta))
      throw IoError("scene text: bad object line");
    if (role_s == "template") o.role = ObjectRole::Template;
    else if (role_s == "task_object") o.role = ObjectRole::TaskObject;
    else if (role_s == "clutter") o.role = ObjectRole::Clutter;
    else throw IoError("scene text: unknown role '" + role_s + "'");
    if (shape_s == "square") o.shape = ShapeKind::Square;
    else if (shape_s == "rect") o.shape = ShapeKind::Rect;
    else if (shape_s == "disc") o.shape = ShapeKind::Disc;
    else if (shape_s == "ring") o.shape = ShapeKind::Ring;
    else throw IoError("scene text: unknown shape '" + shape_s + "'");
    scene.objects.push_back(o);
  }
  throw IoError("scene text: missing end marker");
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.shape != std::vector<int>{kImageC, kImageH, kImageW})
    throw ShapeError("write_ppm expects a 3x48x48 image, got " + shape_str(img.shape));
  std::string out = "P6\n" + std::to_string(kImageW) + " " + std::to_string(kImageH) +
                    "\n255\n";
  const long long plane = static_cast<long long>(kImageH) * kImageW;
  for (long long pix = 0; pix < plane; ++pix) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(img.data[c * plane + pix], 0.0f, 1.0f);
      out.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
  }
  write_file_atomic(path, out);
}

}  // namespace sim
}  // namespace cb
