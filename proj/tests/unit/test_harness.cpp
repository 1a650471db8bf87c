#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hcustom/container.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/harness.hpp"

using namespace hcustom;
using namespace hcustom::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hcustom_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args) {
  static int n = 0;
  const fs::path log = fs::temp_directory_path() / ("hcustom_cli_out_" + std::to_string(n++) + ".txt");
  const std::string cmd = std::string("\"") + HCUSTOM_EXE + "\" " + args + " > \"" + log.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(log);
  return {WEXITSTATUS(status), ss.str()};
}

std::string tiny_config(const fs::path& dir, const std::string& task = "single_subject") {
  nlohmann::json j = {
      {"task", task},
      {"dataset", (dir / "data").string()},
      {"out_dir", (dir / "run").string()},
      {"seed", 4},
      {"codec", {{"hidden", 16}, {"latent_channels", 4}}},
      {"codec_train", {{"steps", 5}, {"batch", 16}}},
      {"model",
       {{"backbone", {{"width", 16}, {"heads", 2}, {"blocks", 1}, {"text_width", 8}, {"freq_dim", 8}, {"mlp_ratio", 2}}},
        {"audio", {{"features", 32}, {"heads", 2}}}}},
      {"train", {{"steps", 3}, {"eval_draws", 1}}}};
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p.string();
}

}  // namespace

TEST_CASE("run config round-trips through JSON") {
  RunConfig c;
  c.task = Task::audio_custom;
  c.dataset = "d";
  c.seed = 9;
  c.train.steps = 12;
  c.model.backbone.width = 32;
  c.mask_dilate = 3;
  c.normalize();
  c.validate();
  RunConfig back = nlohmann::json(c).get<RunConfig>();
  back.normalize();
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK(back.model == c.model);
}

TEST_CASE("overrides use dotted paths and last one wins") {
  nlohmann::json j = {{"train", {{"steps", 1}}}};
  apply_override(j, "train.steps=5");
  apply_override(j, "train.steps=7");
  apply_override(j, "model.identity=none");
  apply_override(j, "dataset=some/dir");
  CHECK(j["train"]["steps"] == 7);
  CHECK(j["model"]["identity"] == "none");
  CHECK(j["dataset"] == "some/dir");
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
}

TEST_CASE("task decides the active condition branches") {
  nlohmann::json j = {{"task", "t2v"}, {"model", {{"use_audio", true}}}};
  CHECK_THROWS_AS(j.get<RunConfig>(), ConfigError);
  j = {{"task", "bogus"}};
  CHECK_THROWS_AS(j.get<RunConfig>(), ConfigError);
  j = {{"task", "single_subject"}, {"typo_key", 1}};
  CHECK_THROWS_AS(j.get<RunConfig>(), ConfigError);
  RunConfig c;
  c.task = Task::video_custom;
  c.normalize();
  CHECK(c.model.use_video);
  CHECK_FALSE(c.model.use_audio);
}

TEST_CASE("ablation pairs differ only in the ablated switch") {
  RunConfig base;
  base.out_dir = "x";
  base.normalize();
  for (auto axis : kAblationAxes) {
    auto [a, b] = ablation_pair(axis, base);
    CHECK(a.seed == b.seed);
    CHECK(a.train.seed == b.train.seed);
    nlohmann::json ja = a, jb = b;
    ja.erase("out_dir");
    jb.erase("out_dir");
    int diffs = 0;
    for (auto& [k, v] : ja["model"].items()) diffs += v != jb["model"][k];
    CHECK(diffs >= 1);
    ja["model"] = jb["model"] = nullptr;
    CHECK(ja == jb);
  }
  CHECK(canonical_axis("identity_enhancement") == "no_identity_enhancement");
  CHECK_THROWS_AS(canonical_axis("bogus"), ConfigError);
  auto [a, b] = ablation_pair("channel_concat", base);
  CHECK(b.model.backbone.input_channels == 2 * a.model.backbone.input_channels);
}

TEST_CASE("cli: usage errors exit 2, help exits 0") {
  CHECK(cli("--bogus").code == 2);
  CHECK(cli("").code == 2);
  CHECK(cli("train --nope x").code == 2);
  CHECK(cli("inspect-positions --latent 4x4").code == 2);
  const Result help = cli("train --help");
  CHECK(help.code == 0);
  CHECK(help.out.find("--config") != std::string::npos);
}

TEST_CASE("cli: inspect-positions lists identity blocks then video triples") {
  const Result r = cli("inspect-positions --subjects 2 --latent 4x4x3");
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<int, 4>> rows;  // subject, t, x, y
  std::vector<std::string> kinds;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    std::array<int, 4> v{};
    ls >> kind >> v[0] >> v[1] >> v[2] >> v[3];
    kinds.push_back(kind);
    rows.push_back(v);
  }
  REQUIRE(rows.size() == 2u * 16 + 48);
  for (int i = 0; i < 32; ++i) {
    CHECK(kinds[i] == "identity");
    CHECK(rows[i][1] == -(i / 16 + 1));
    CHECK(rows[i][2] == 4 + i % 4);
    CHECK(rows[i][3] == 4 + (i % 16) / 4);
  }
  for (int i = 0; i < 48; ++i) {
    CHECK(kinds[32 + i] == "video");
    CHECK(rows[32 + i][1] == i / 16);
  }
}

TEST_CASE("cli: invalid config exits 2 naming the field; missing dataset exits 1") {
  const fs::path dir = scratch("badcfg");
  const std::string cfg = tiny_config(dir);
  CHECK(cli("train --config " + cfg + " --set model.backbone.heads=3").code == 2);
  CHECK(cli("train --config " + cfg + " --set train.steps=-1").code == 2);
  CHECK(cli("train --config " + cfg).code == 1);  // dataset directory does not exist
  fs::remove_all(dir);
}

TEST_CASE("cli: gen-data, train twice, sample and evaluate") {
  const fs::path dir = scratch("e2e");
  REQUIRE(cli("gen-data --count 2 --seed 3 --frames 5 --height 16 --width 16 --out " + (dir / "data").string()).code == 0);
  const std::string cfg = tiny_config(dir);
  REQUIRE(cli("train --config " + cfg).code == 0);
  REQUIRE(cli("train --config " + cfg + " --set out_dir=" + (dir / "run2").string()).code == 0);
  CHECK(read_file(dir / "run" / "checkpoint.hcar") == read_file(dir / "run2" / "checkpoint.hcar"));
  CHECK(fs::exists(dir / "run" / "loss.csv"));
  CHECK(fs::exists(dir / "run" / "train_summary.json"));

  ::setenv("HCUSTOM_OUT", (dir / "env_run").string().c_str(), 1);
  CHECK(cli("train --config " + cfg).code == 0);
  ::unsetenv("HCUSTOM_OUT");
  CHECK(fs::exists(dir / "env_run" / "checkpoint.hcar"));

  const auto samples = synth::load_dataset(dir / "data");
  codec::save_video(dir / "id.hcar", samples[0].identity_images[0]);
  fs::create_directories(dir / "gen");
  const std::string out = (dir / "gen" / (samples[0].id + ".hcar")).string();
  const std::string base = "sample --ckpt " + (dir / "run" / "checkpoint.hcar").string() + " --prompt \"" +
                           samples[0].caption + "\" --height 16 --width 16 --frames 5 --steps 3 --out " + out;
  const std::string subject = " --subject name=" + samples[0].identities[0].descriptor() + ",image=" + (dir / "id.hcar").string();
  CHECK(cli(base + " --subject " + samples[0].identities[0].descriptor()).code == 2);
  CHECK(cli(base + " --subject name=x,image=" + (dir / "missing.hcar").string()).code == 1);
  REQUIRE(cli(base + subject).code == 0);
  CHECK(cli(base + subject + " --video-inject-mode concat").code == 2);
  CHECK(cli(base + subject + " --template embedded").code == 0);
  const codec::PixelVideo v = codec::load_video(out);
  CHECK(v.frames == 5);
  CHECK(v.height == 16);
  const Result ev = cli("evaluate --videos " + (dir / "gen").string() + " --refs " + (dir / "data").string() +
                        " --report " + (dir / "report.json").string());
  CHECK(ev.code == 0);
  CHECK(ev.out.find("Face-Sim") != std::string::npos);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["videos"].size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("audio and video tasks build matching condition bundles") {
  const fs::path dir = scratch("tasks");
  synth::GenerateOptions o;
  o.count = 1;
  o.scene.frames = 9;
  o.scene.height = o.scene.width = 16;
  const auto s = synth::generate_indexed(o, 0);
  RunConfig c = nlohmann::json::parse(read_file(tiny_config(dir))).get<RunConfig>();
  c.task = Task::audio_custom;
  c.normalize();
  const codec::LatentCodec codec(c.codec);
  const auto ea = make_example(c.task, c.model, s, codec, 2);
  REQUIRE(ea.cond.audio.has_value());
  CHECK(ea.cond.audio->frames == ea.shape.frames + 1);
  CHECK_NOTHROW(model::Denoiser(c.model).check(ea.cond, ea.shape));

  c.task = Task::video_custom;
  c.normalize();
  const auto ev = make_example(c.task, c.model, s, codec, 2);
  REQUIRE(ev.cond.condition.has_value());
  CHECK(ev.cond.condition->rows() == ev.shape.video_rows());
  const auto keep = condition_mask(s, 0);
  for (std::size_t i = 0; i < keep.size(); ++i) CHECK(keep[i] == 1 - s.mask[i]);

  c.task = Task::t2v;
  c.normalize();
  const auto et = make_example(c.task, c.model, s, codec, 2);
  CHECK(et.cond.subjects.empty());
  CHECK(et.cond.identity_latents.empty());
  CHECK_THROWS_AS(make_example(Task::multi_subject, c.model, s, codec, 2), ValidationError);
  fs::remove_all(dir);
}
