#pragma once

// Deterministic 2D tabletop: scene sampling, rasterization to 48x48 RGB,
// kinematic trajectory execution and task scoring.
//
// Conventions: workspace is [0,1]^2 with y up, the image maps it at 48x48
// with anti-aliasing off. Template and task objects carry a graspable-center
// marker; clutter does not. The clutter palette deliberately contains a
// template lookalike and a cup-like ring so that visual confusion is possible.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cb/tensor.hpp"

namespace cb {
namespace sim {

inline constexpr int kImageC = 3;
inline constexpr int kImageH = 48;
inline constexpr int kImageW = 48;

inline constexpr int kTrajLen = 20;    // T
inline constexpr int kActionDim = 2;   // M
inline constexpr float kStepBound = 0.08f;  // per-step displacement bound
inline constexpr float kStartX = 0.5f;
inline constexpr float kStartY = 0.05f;

inline constexpr float kPickInnerRadius = 0.04f;
inline constexpr float kPickOuterRadius = 0.08f;
inline constexpr float kPourRadius = 0.05f;

inline constexpr int kNumPickingObjects = 20;   // ids 1..20, 16..20 unseen
inline constexpr int kNumSeenPicking = 15;
inline constexpr int kNumPouringCups = 3;       // ids 1..3, all seen
inline constexpr int kNumClutter = 8;           // clutter ids 1..8

enum class Task { Picking, Pouring };
enum class DomainKind { SourcePlain, SourceExtrainfo, Target };
enum class ShapeKind { Square, Rect, Disc, Ring };
enum class ObjectRole { Template, TaskObject, Clutter };

const char* task_name(Task t);
const char* domain_name(DomainKind d);
const char* shape_name(ShapeKind s);
const char* role_name(ObjectRole r);
Task parse_task(const std::string& s);
DomainKind parse_domain(const std::string& s);

struct ObjectSpec {
  ObjectRole role = ObjectRole::Clutter;
  int id = 0;  // task-object or clutter palette id
  ShapeKind shape = ShapeKind::Square;
  float color[3] = {0, 0, 0};
  float size = 0.05f;  // half-extent, workspace units
  float x = 0.5f, y = 0.5f;
  float theta = 0.0f;  // [0, pi)

  bool graspable() const { return role != ObjectRole::Clutter; }
  bool operator==(const ObjectSpec&) const = default;
};

struct SceneSpec {
  Task task = Task::Picking;
  DomainKind domain = DomainKind::SourcePlain;
  std::uint64_t seed = 0;
  // Painter order: clutter first, graspable object (if any) last.
  std::vector<ObjectSpec> objects;

  const ObjectSpec* graspable() const;
  bool operator==(const SceneSpec&) const = default;
};

using Image = Tensor;  // {3, 48, 48}, values in [0,1]

struct Trajectory {
  MatX<float> u;  // kTrajLen x kActionDim

  Trajectory() : u(MatX<float>::Zero(kTrajLen, kActionDim)) {}
  bool operator==(const Trajectory& o) const { return u == o.u; }
};

struct Vec2 {
  float x = 0, y = 0;
};

// Palette archetypes (pose fields left at defaults).
ObjectSpec template_object(Task task);
ObjectSpec task_object(Task task, int id);
ObjectSpec clutter_object(int id);
std::vector<int> seen_ids(Task task);
std::vector<int> unseen_ids(Task task);

// Samples a non-overlapping scene. `object_id` selects the task object for
// target scenes; pass nullopt for clutter-only target scenes. The seed fully
// determines the result.
SceneSpec sample_scene(Task task, DomainKind domain, std::optional<int> object_id,
                       std::uint64_t seed);
SceneSpec sample_scene(Task task, DomainKind domain, std::optional<int> object_id,
                       Rng& rng);

// Same scene with clutter removed (used to pose the template alone).
SceneSpec strip_clutter(const SceneSpec& scene);

Image render(const SceneSpec& scene);

Vec2 execute(const Trajectory& traj, const SceneSpec& scene);

// The point a successful trajectory must reach.
Vec2 goal_point(const SceneSpec& scene);

float score_picking(Vec2 final_pose, const SceneSpec& scene);
float score_pouring(Vec2 final_pose, const SceneSpec& scene);
float score(Vec2 final_pose, const SceneSpec& scene);  // dispatch on scene.task

// Straight-line path split into kTrajLen equal steps plus optional Gaussian
// step noise; scores 1 at zero noise by construction.
Trajectory oracle_trajectory(const SceneSpec& scene, Rng& rng,
                             double noise_sigma = 0.003);

// Flat {T*M} tensor view of a trajectory (row-major by timestep).
Tensor traj_to_tensor(const Trajectory& t);
Trajectory traj_from_tensor(const Tensor& t);

// Line-oriented scene text: header, one object per line, "end" terminator.
std::string scene_to_text(const SceneSpec& scene);
SceneSpec scene_from_text(const std::string& text);

void write_ppm(const std::string& path, const Image& img);

}  // namespace sim
}  // namespace cb
