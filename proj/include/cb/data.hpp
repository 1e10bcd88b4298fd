#pragma once

// Construction of the two training corpora: the task data-set (source domain,
// image -> latent pairs from the converged policy) and the weakly labeled
// task-object data-set (target domain). Label convention: 1 = clutter-only,
// 0 = a task object is present. Pixels are never stored; images regenerate
// from the recorded SceneSpecs.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cb/net.hpp"
#include "cb/sim.hpp"
#include "cb/vae.hpp"

namespace cb {

struct SourceSample {
  sim::SceneSpec scene;
  VecX<float> z_star;  // converged policy's mean action for this scene

  sim::Image image() const { return sim::render(scene); }
  bool operator==(const SourceSample& o) const {
    return scene == o.scene && z_star == o.z_star;
  }
};

struct LabeledImage {
  sim::SceneSpec scene;
  int label = 0;  // 1 iff clutter-only
  std::optional<int> object_id;

  sim::Image image() const { return sim::render(scene); }
  bool operator==(const LabeledImage&) const = default;
};

struct DatasetBundle {
  sim::Task task = sim::Task::Picking;
  std::vector<SourceSample> source;
  std::vector<LabeledImage> target;
  std::vector<int> seen;
  std::vector<int> unseen;

  bool operator==(const DatasetBundle&) const = default;
};

// Records n (image, z*) pairs from the converged policy. For extrainfo scenes
// the mean action is read off the clutter-free view of the same template
// pose, so the recorded latent still solves the scene. Every pair is replayed
// through the decoder; more than 10% scoring below 0.5 aborts.
std::vector<SourceSample> record_source(const Net& perception, const Net& policy,
                                        const TrajVae& vae, sim::Task task, int n,
                                        bool extrainfo, std::uint64_t seed);

// per_object label-0 scenes per seen id plus clutter_only label-1 scenes.
std::vector<LabeledImage> gen_target(sim::Task task, int per_object, int clutter_only,
                                     const std::vector<int>& seen_ids,
                                     std::uint64_t seed);

// Fraction of source samples whose stored latent still scores >= 0.5.
double replay_fraction(const DatasetBundle& bundle, const TrajVae& vae);

// Bundle file ("CBDS"): u32 version, u32 source count, u32 target count,
// u8 task, id lists, then per sample: u64 scene seed, scene text record,
// u8 label (255 = n.a.), u16 object id (0xFFFF = none), latent f32s (source
// samples only).
void save_bundle(const std::string& path, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::string& path);

std::string encode_bundle(const DatasetBundle& bundle);
DatasetBundle decode_bundle(const std::string& bytes, const std::string& origin);

}  // namespace cb
