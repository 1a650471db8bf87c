#include "hcustom/dataset.hpp"

#include <cstdio>

#include "hcustom/errors.hpp"

namespace hcustom::synth {

void put_sample(Container& c, const TrainSample& s) {
  c.meta["kind"] = "train_sample";
  c.meta["id"] = s.id;
  c.meta["seed"] = s.seed;
  c.meta["scene"] = s.scene;
  c.meta["identities"] = s.identities;
  c.meta["caption"] = s.caption;
  c.meta["annotation"] = s.annotation;
  codec::put_video(c, "video", s.video);
  for (std::size_t i = 0; i < s.identity_images.size(); ++i) {
    codec::put_video(c, "identity/" + std::to_string(i), s.identity_images[i]);
  }
  audio::put_audio(c, "audio", s.audio);
  c.put_u8("mask", {s.video.frames, s.video.height, s.video.width}, s.mask);
}

TrainSample get_sample(const Container& c) {
  if (c.meta.value("kind", std::string()) != "train_sample") throw IoError("container is not a train sample");
  TrainSample s;
  s.id = c.meta.at("id").get<std::string>();
  s.seed = c.meta.at("seed").get<std::uint64_t>();
  s.scene = c.meta.at("scene").get<SceneParams>();
  s.identities = c.meta.at("identities").get<std::vector<SpriteIdentity>>();
  s.caption = c.meta.at("caption").get<std::string>();
  s.annotation = c.meta.at("annotation").get<AnnotationRecord>();
  s.video = codec::get_video(c, "video");
  for (std::size_t i = 0; i < s.identities.size(); ++i) {
    s.identity_images.push_back(codec::get_video(c, "identity/" + std::to_string(i)));
  }
  s.audio = audio::get_audio(c, "audio");
  s.mask = c.get_u8("mask");
  if (s.mask.size() != static_cast<std::size_t>(s.video.frames) * s.video.height * s.video.width) {
    throw IoError("sample mask does not match the video shape");
  }
  return s;
}

void save_sample(const std::filesystem::path& path, const TrainSample& s) {
  Container c;
  put_sample(c, s);
  c.save(path);
}

TrainSample load_sample(const std::filesystem::path& path) { return get_sample(Container::load(path)); }

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json j = {{"version", 1}, {"seed", m.seed}, {"subjects", m.subjects}, {"scene", m.scene}};
  j["samples"] = nlohmann::json::array();
  for (const auto& e : m.samples) j["samples"].push_back({{"id", e.id}, {"file", e.file}, {"caption", e.caption}});
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest in " + dir.string() + " is not valid JSON: " + e.what());
  }
  Manifest m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.subjects = j.value("subjects", 1);
  if (j.contains("scene")) m.scene = j.at("scene").get<SceneParams>();
  for (const auto& e : j.at("samples")) {
    m.samples.push_back({e.at("id").get<std::string>(), e.at("file").get<std::string>(),
                         e.value("caption", std::string())});
  }
  return m;
}

TrainSample generate_indexed(const GenerateOptions& o, int index) {
  Rng id_rng(derive_seed(o.seed, 0x1D000000ULL + static_cast<std::uint64_t>(index)));
  const auto ids = random_identities(id_rng, o.subjects);
  TrainSample s = generate_scene(ids, o.scene, derive_seed(o.seed, static_cast<std::uint64_t>(index)));
  char name[32];
  std::snprintf(name, sizeof(name), "sample_%05d", index);
  s.id = name;
  s.annotation.clip_id = name;
  return s;
}

Manifest generate_dataset(const std::filesystem::path& dir, const GenerateOptions& o) {
  if (o.count < 1) throw ConfigError("count", "must be >= 1");
  o.scene.validate();
  std::filesystem::create_directories(dir);
  Manifest m;
  m.seed = o.seed;
  m.subjects = o.subjects;
  m.scene = o.scene;
  for (int i = 0; i < o.count; ++i) {
    TrainSample s = generate_indexed(o, i);
    const std::string file = s.id + ".hcar";
    save_sample(dir / file, s);
    m.samples.push_back({s.id, file, s.caption});
  }
  write_manifest(dir, m);
  return m;
}

std::vector<TrainSample> load_dataset(const std::filesystem::path& dir) {
  const Manifest m = read_manifest(dir);
  if (m.samples.empty()) throw ValidationError("dataset " + dir.string() + " is empty");
  std::vector<TrainSample> out;
  out.reserve(m.samples.size());
  for (const auto& e : m.samples) out.push_back(load_sample(dir / e.file));
  return out;
}

}  // namespace hcustom::synth
