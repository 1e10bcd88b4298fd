#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <set>

#include "cb/io.hpp"
#include "cb/sim.hpp"

using namespace cb;
using namespace cb::sim;

TEST_CASE("sample_scene: source_plain is template-only") {
  SceneSpec s = sample_scene(Task::Picking, DomainKind::SourcePlain, std::nullopt, 7);
  REQUIRE(s.objects.size() == 1);
  CHECK(s.objects[0].role == ObjectRole::Template);
  CHECK(s.domain == DomainKind::SourcePlain);
}

TEST_CASE("sample_scene: target scene carries the task object plus clutter") {
  SceneSpec s = sample_scene(Task::Picking, DomainKind::Target, 3, 7);
  int n_task = 0, n_clutter = 0, n_template = 0;
  for (const ObjectSpec& o : s.objects) {
    if (o.role == ObjectRole::TaskObject) {
      ++n_task;
      CHECK(o.id == 3);
    } else if (o.role == ObjectRole::Clutter) {
      ++n_clutter;
    } else {
      ++n_template;
    }
  }
  CHECK(n_task == 1);
  CHECK(n_template == 0);
  CHECK(n_clutter >= 2);
  CHECK(n_clutter <= 6);
}

TEST_CASE("sample_scene: same seed gives identical scenes") {
  SceneSpec a = sample_scene(Task::Pouring, DomainKind::Target, 2, 42);
  SceneSpec b = sample_scene(Task::Pouring, DomainKind::Target, 2, 42);
  CHECK(a == b);
}

TEST_CASE("sample_scene: 10000 seeds respect the invariants") {
  for (int seed = 0; seed < 10000; ++seed) {
    const DomainKind dom = seed % 3 == 0 ? DomainKind::SourceExtrainfo
                                         : DomainKind::Target;
    std::optional<int> id;
    if (dom == DomainKind::Target && seed % 2 == 0) id = 1 + seed % 15;
    SceneSpec s = sample_scene(Task::Picking, dom, id, seed);
    int graspable = 0;
    for (const ObjectSpec& o : s.objects)
      if (o.graspable()) ++graspable;
    REQUIRE(graspable <= 1);
    for (std::size_t i = 0; i < s.objects.size(); ++i)
      for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
        const auto& a = s.objects[i];
        const auto& b = s.objects[j];
        const float dx = a.x - b.x, dy = a.y - b.y;
        const float ra = (a.shape == ShapeKind::Square || a.shape == ShapeKind::Rect)
                             ? a.size * 1.4142136f : a.size;
        const float rb = (b.shape == ShapeKind::Square || b.shape == ShapeKind::Rect)
                             ? b.size * 1.4142136f : b.size;
        REQUIRE(std::sqrt(dx * dx + dy * dy) >= ra + rb);
      }
  }
}

TEST_CASE("render: empty scene is uniform background") {
  SceneSpec s;
  s.task = Task::Picking;
  s.domain = DomainKind::Target;
  Image img = render(s);
  const long long plane = kImageH * kImageW;
  for (long long p = 0; p < plane; ++p) {
    CHECK(img.data[p] == img.data[0]);
    CHECK(img.data[plane + p] == img.data[plane]);
    CHECK(img.data[2 * plane + p] == img.data[2 * plane]);
  }
}

TEST_CASE("render: pure function, byte-exact repeats") {
  SceneSpec s = sample_scene(Task::Picking, DomainKind::Target, 5, 99);
  Image a = render(s), b = render(s);
  CHECK(a.data == b.data);
}

TEST_CASE("render: template center pixel carries the template color") {
  SceneSpec s;
  s.task = Task::Picking;
  s.domain = DomainKind::SourcePlain;
  ObjectSpec tpl = template_object(Task::Picking);
  tpl.size = 0.1f;
  tpl.x = 0.5f;
  tpl.y = 0.5f;
  tpl.theta = 0.0f;
  s.objects.push_back(tpl);
  Image img = render(s);
  // pixel whose center is nearest (0.5, 0.5)
  const int row = 23, col = 23;
  const long long plane = kImageH * kImageW;
  const long long pix = row * kImageW + col;
  CHECK(img.data[pix] == doctest::Approx(tpl.color[0]));
  CHECK(img.data[plane + pix] == doctest::Approx(tpl.color[1]));
  CHECK(img.data[2 * plane + pix] == doctest::Approx(tpl.color[2]));
}

TEST_CASE("render: source_plain images contain no clutter pixels") {
  const ObjectSpec tpl = template_object(Task::Picking);
  for (int seed = 0; seed < 20; ++seed) {
    SceneSpec s = sample_scene(Task::Picking, DomainKind::SourcePlain, std::nullopt, seed);
    Image img = render(s);
    const long long plane = kImageH * kImageW;
    for (long long p = 0; p < plane; ++p) {
      const std::array<float, 3> c = {img.data[p], img.data[plane + p],
                                      img.data[2 * plane + p]};
      const bool bg = c[0] == doctest::Approx(0.10f) && c[2] == doctest::Approx(0.12f);
      const bool tpl_c = c[0] == tpl.color[0] && c[1] == tpl.color[1];
      const bool marker = c[0] == 1.0f && c[2] == doctest::Approx(0.10f);
      CHECK((bg || tpl_c || marker));
    }
  }
}

TEST_CASE("render: moving the task object by 2 pixels changes the image") {
  for (int seed = 100; seed < 120; ++seed) {
    SceneSpec a = sample_scene(Task::Picking, DomainKind::Target, 4, seed);
    SceneSpec b = a;
    for (ObjectSpec& o : b.objects)
      if (o.graspable()) o.x += 2.0f / kImageW;
    CHECK(render(a).data != render(b).data);
  }
}

TEST_CASE("execute: zero, constant, and clipped trajectories") {
  SceneSpec s = sample_scene(Task::Picking, DomainKind::SourcePlain, std::nullopt, 1);
  Trajectory zero;
  Vec2 f = execute(zero, s);
  CHECK(f.x == doctest::Approx(kStartX));
  CHECK(f.y == doctest::Approx(kStartY));

  Trajectory up;
  for (int t = 0; t < kTrajLen; ++t) up.u(t, 1) = 0.04f;
  f = execute(up, s);
  CHECK(f.x == doctest::Approx(0.5));
  CHECK(f.y == doctest::Approx(0.85));

  Trajectory beyond;
  for (int t = 0; t < kTrajLen; ++t) beyond.u(t, 1) = 0.08f;
  f = execute(beyond, s);
  CHECK(f.y == doctest::Approx(1.0));
}

TEST_CASE("execute: final equals start plus displacement sum when unclipped") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Trajectory traj;
    double sx = 0, sy = 0;
    for (int t = 0; t < kTrajLen; ++t) {
      traj.u(t, 0) = static_cast<float>(rng.uniform(-0.01, 0.01));
      traj.u(t, 1) = static_cast<float>(rng.uniform(-0.002, 0.03));
      sx += traj.u(t, 0);
      sy += traj.u(t, 1);
    }
    SceneSpec s = sample_scene(Task::Picking, DomainKind::SourcePlain, std::nullopt, 1);
    Vec2 f = execute(traj, s);
    CHECK(f.x == doctest::Approx(kStartX + sx).epsilon(1e-5));
    CHECK(f.y == doctest::Approx(kStartY + sy).epsilon(1e-5));
  }
}

TEST_CASE("score_picking: rubric thresholds") {
  SceneSpec s;
  s.task = Task::Picking;
  ObjectSpec obj = task_object(Task::Picking, 1);
  obj.x = 0.5f;
  obj.y = 0.5f;
  s.objects.push_back(obj);

  CHECK(score_picking({0.5f, 0.5f}, s) == 1.0f);
  CHECK(score_picking({0.5f, 0.56f}, s) == 0.5f);
  CHECK(score_picking({0.5f, 1.0f}, s) == 0.0f);

  // monotone non-increasing in distance
  float prev = 1.0f;
  for (float d = 0.0f; d < 0.2f; d += 0.005f) {
    const float v = score_picking({0.5f + d, 0.5f}, s);
    CHECK(v <= prev);
    prev = v;
  }

  SceneSpec empty;
  empty.task = Task::Picking;
  CHECK_THROWS_AS(score_picking({0.5f, 0.5f}, empty), Error);
}

TEST_CASE("score_pouring: pour point with inclusive boundary") {
  SceneSpec s;
  s.task = Task::Pouring;
  ObjectSpec cup = task_object(Task::Pouring, 2);
  cup.x = 0.0f;  // so pour.x + kPourRadius is an exact float offset
  cup.y = 0.6f;
  s.objects.push_back(cup);
  const Vec2 pour = goal_point(s);
  CHECK(pour.y == doctest::Approx(0.6f + cup.size));
  CHECK(score_pouring(pour, s) == 1.0f);
  CHECK(score_pouring({pour.x + 0.2f, pour.y}, s) == 0.0f);
  CHECK(score_pouring({pour.x + kPourRadius, pour.y}, s) == 1.0f);  // inclusive
  CHECK(score_pouring({std::nextafter(pour.x + kPourRadius, 1.0f), pour.y}, s) == 0.0f);
}

TEST_CASE("oracle_trajectory: zero noise always scores 1") {
  for (int seed = 0; seed < 200; ++seed) {
    const auto task = seed % 2 == 0 ? Task::Picking : Task::Pouring;
    std::optional<int> id = seed % 2 == 0 ? std::optional<int>(1 + seed % 15)
                                          : std::optional<int>(1 + seed % 3);
    SceneSpec s = sample_scene(task, DomainKind::Target, id, seed);
    Rng rng(seed);
    Trajectory traj = oracle_trajectory(s, rng, 0.0);
    CHECK(score(execute(traj, s), s) == 1.0f);
    for (int t = 0; t < kTrajLen; ++t)
      CHECK(traj.u.row(t).norm() <= kStepBound + 1e-7f);
  }
}

TEST_CASE("oracle_trajectory: uniform split toward (0.5, 0.85)") {
  SceneSpec s;
  s.task = Task::Picking;
  ObjectSpec obj = template_object(Task::Picking);
  obj.x = 0.5f;
  obj.y = 0.85f;
  s.objects.push_back(obj);
  Rng rng(1);
  Trajectory traj = oracle_trajectory(s, rng, 0.0);
  for (int t = 0; t < kTrajLen; ++t) {
    CHECK(traj.u(t, 0) == doctest::Approx(0.0));
    CHECK(traj.u(t, 1) == doctest::Approx(0.04));
  }
}

TEST_CASE("oracle_trajectory: noisy steps respect the bound") {
  Rng rng(2);
  SceneSpec s = sample_scene(Task::Picking, DomainKind::Target, 2, 5);
  for (int i = 0; i < 50; ++i) {
    Trajectory traj = oracle_trajectory(s, rng, 0.05);
    for (int t = 0; t < kTrajLen; ++t)
      CHECK(traj.u.row(t).norm() <= kStepBound + 1e-7f);
  }
}

TEST_CASE("scene text roundtrip is exact") {
  for (int seed = 0; seed < 50; ++seed) {
    SceneSpec s = sample_scene(Task::Pouring, DomainKind::Target,
                               seed % 2 ? std::optional<int>(1 + seed % 3) : std::nullopt,
                               seed);
    const std::string text = scene_to_text(s);
    SceneSpec back = scene_from_text(text);
    CHECK(back == s);
  }
  CHECK_THROWS_AS(scene_from_text("scene picking target 1\n"), IoError);
  CHECK_THROWS_AS(scene_from_text("nope"), IoError);
}

TEST_CASE("ppm dump: P6 header and pixel bytes") {
  SceneSpec s = sample_scene(Task::Picking, DomainKind::Target, 1, 3);
  const std::string path = "/tmp/cb_test_scene.ppm";
  write_ppm(path, render(s));
  const std::string bytes = read_file(path);
  CHECK(bytes.rfind("P6\n48 48\n255\n", 0) == 0);
  CHECK(bytes.size() == 13 + 48 * 48 * 3);
  std::filesystem::remove(path);
}

TEST_CASE("unseen picking palette stays in the shape family") {
  const auto unseen = unseen_ids(Task::Picking);
  REQUIRE(unseen.size() == 5);
  std::set<ShapeKind> family = {ShapeKind::Square, ShapeKind::Rect, ShapeKind::Disc};
  for (int id : unseen) {
    const ObjectSpec o = task_object(Task::Picking, id);
    CHECK(family.count(o.shape) == 1);
  }
  // held-out colors: no unseen color matches a seen color
  for (int u : unseen)
    for (int sid : seen_ids(Task::Picking)) {
      const ObjectSpec a = task_object(Task::Picking, u);
      const ObjectSpec b = task_object(Task::Picking, sid);
      const bool same = a.color[0] == b.color[0] && a.color[1] == b.color[1] &&
                        a.color[2] == b.color[2];
      CHECK_FALSE(same);
    }
}
