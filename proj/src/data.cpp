#include "cb/data.hpp"

#include "cb/io.hpp"
#include "cb/policy.hpp"

namespace cb {

namespace {
constexpr char kBundleMagic[4] = {'C', 'B', 'D', 'S'};
constexpr std::uint32_t kBundleVersion = 1;
}  // namespace

std::vector<SourceSample> record_source(const Net& perception, const Net& policy,
                                        const TrajVae& vae, sim::Task task, int n,
                                        bool extrainfo, std::uint64_t seed) {
  if (n < 1) throw Error("record_source: n must be >= 1");
  const sim::DomainKind domain =
      extrainfo ? sim::DomainKind::SourceExtrainfo : sim::DomainKind::SourcePlain;
  std::vector<SourceSample> out(n);
  std::vector<char> ok(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, "source." + std::to_string(i));
    SourceSample& sample = out[i];
    sample.scene = sim::sample_scene(task, domain, std::nullopt, s);
    // the latent is the policy's mean action for the template pose itself
    const sim::SceneSpec plain = sim::strip_clutter(sample.scene);
    Rng dummy(0);
    ActResult a = act(perception, policy, vae, sim::render(plain), ActMode::Mean, dummy);
    sample.z_star = a.z;
    const float score = sim::score(sim::execute(a.traj, sample.scene), sample.scene);
    ok[i] = score >= 0.5f ? 1 : 0;
  });
  long failures = 0;
  for (char c : ok)
    if (!c) ++failures;
  if (failures * 10 > n)
    throw Error("record_source: replay failure rate " +
                std::to_string(static_cast<double>(failures) / n) +
                " exceeds 10% (policy not converged)");
  return out;
}

std::vector<LabeledImage> gen_target(sim::Task task, int per_object, int clutter_only,
                                     const std::vector<int>& seen_ids,
                                     std::uint64_t seed) {
  if (seen_ids.empty()) throw Error("gen_target: seen id list must be nonempty");
  std::vector<LabeledImage> out;
  out.resize(seen_ids.size() * per_object + clutter_only);
  const std::size_t n_obj = seen_ids.size() * per_object;
  parallel_for(out.size(), [&](std::size_t i) {
    LabeledImage& li = out[i];
    const std::uint64_t s = derive_seed(seed, "target." + std::to_string(i));
    if (i < n_obj) {
      const int id = seen_ids[i / per_object];
      li.scene = sim::sample_scene(task, sim::DomainKind::Target, id, s);
      li.label = 0;
      li.object_id = id;
    } else {
      li.scene = sim::sample_scene(task, sim::DomainKind::Target, std::nullopt, s);
      li.label = 1;
      li.object_id = std::nullopt;
    }
  });
  return out;
}

double replay_fraction(const DatasetBundle& bundle, const TrajVae& vae) {
  if (bundle.source.empty()) return 0.0;
  long ok = 0;
  for (const SourceSample& s : bundle.source) {
    const sim::Trajectory traj = decode(vae, s.z_star);
    if (sim::score(sim::execute(traj, s.scene), s.scene) >= 0.5f) ++ok;
  }
  return static_cast<double>(ok) / bundle.source.size();
}

std::string encode_bundle(const DatasetBundle& bundle) {
  if (bundle.source.empty())
    throw Error("bundle must contain source samples (task loss needs them)");
  BinWriter w;
  w.bytes(kBundleMagic, 4);
  w.u32(kBundleVersion);
  w.u32(static_cast<std::uint32_t>(bundle.source.size()));
  w.u32(static_cast<std::uint32_t>(bundle.target.size()));
  w.u8(bundle.task == sim::Task::Picking ? 0 : 1);
  w.u16(static_cast<std::uint16_t>(bundle.seen.size()));
  for (int id : bundle.seen) w.u16(static_cast<std::uint16_t>(id));
  w.u16(static_cast<std::uint16_t>(bundle.unseen.size()));
  for (int id : bundle.unseen) w.u16(static_cast<std::uint16_t>(id));
  auto put_scene = [&w](const sim::SceneSpec& scene) {
    const std::string text = sim::scene_to_text(scene);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.str(text);
  };
  for (const SourceSample& s : bundle.source) {
    w.u64(s.scene.seed);
    put_scene(s.scene);
    w.u8(255);     // label n.a.
    w.u16(0xffff); // object id: none
    for (int k = 0; k < s.z_star.size(); ++k) w.f32(s.z_star[k]);
  }
  for (const LabeledImage& t : bundle.target) {
    w.u64(t.scene.seed);
    put_scene(t.scene);
    w.u8(static_cast<std::uint8_t>(t.label));
    w.u16(t.object_id ? static_cast<std::uint16_t>(*t.object_id) : 0xffff);
  }
  return w.buffer();
}

DatasetBundle decode_bundle(const std::string& bytes, const std::string& origin) {
  BinReader r(bytes, origin);
  if (r.str(4) != std::string(kBundleMagic, 4))
    throw IoError(origin + ": bad bundle magic");
  const std::uint32_t version = r.u32();
  if (version != kBundleVersion)
    throw IoError(origin + ": unsupported bundle version " + std::to_string(version));
  DatasetBundle b;
  const std::uint32_t n_src = r.u32();
  const std::uint32_t n_tgt = r.u32();
  b.task = r.u8() == 0 ? sim::Task::Picking : sim::Task::Pouring;
  const std::uint16_t n_seen = r.u16();
  for (int i = 0; i < n_seen; ++i) b.seen.push_back(r.u16());
  const std::uint16_t n_unseen = r.u16();
  for (int i = 0; i < n_unseen; ++i) b.unseen.push_back(r.u16());
  auto get_scene = [&r, &origin]() {
    const std::uint32_t len = r.u32();
    return sim::scene_from_text(r.str(len));
  };
  if (n_src == 0) throw IoError(origin + ": bundle has no source samples");
  b.source.resize(n_src);
  for (auto& s : b.source) {
    const std::uint64_t seed = r.u64();
    s.scene = get_scene();
    if (s.scene.seed != seed)
      throw IoError(origin + ": scene seed mismatch in source sample");
    if (r.u8() != 255) throw IoError(origin + ": source sample carries a label");
    r.u16();
    s.z_star = VecX<float>(kLatentDim);
    for (int k = 0; k < kLatentDim; ++k) s.z_star[k] = r.f32();
    if (!s.z_star.allFinite()) throw IoError(origin + ": non-finite latent");
  }
  b.target.resize(n_tgt);
  for (auto& t : b.target) {
    const std::uint64_t seed = r.u64();
    t.scene = get_scene();
    if (t.scene.seed != seed)
      throw IoError(origin + ": scene seed mismatch in target sample");
    const std::uint8_t label = r.u8();
    if (label > 1) throw IoError(origin + ": bad target label");
    t.label = label;
    const std::uint16_t id = r.u16();
    t.object_id = id == 0xffff ? std::nullopt : std::optional<int>(id);
  }
  r.expect_end();
  return b;
}

void save_bundle(const std::string& path, const DatasetBundle& bundle) {
  write_file_atomic(path, encode_bundle(bundle));
}

DatasetBundle load_bundle(const std::string& path) {
  return decode_bundle(read_file(path), path);
}

}  // namespace cb
