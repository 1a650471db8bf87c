#pragma once

// On-disk dataset: one container per TrainSample plus a JSON manifest.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hcustom/container.hpp"
#include "hcustom/synth_data.hpp"

namespace hcustom::synth {

void put_sample(Container& c, const TrainSample& s);
TrainSample get_sample(const Container& c);
void save_sample(const std::filesystem::path& path, const TrainSample& s);
TrainSample load_sample(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string file;  // relative to the dataset directory
  std::string caption;
};

struct Manifest {
  std::uint64_t seed = 0;
  int subjects = 1;
  SceneParams scene;
  std::vector<ManifestEntry> samples;
};

void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

struct GenerateOptions {
  int count = 50;
  std::uint64_t seed = 0;
  int subjects = 1;
  SceneParams scene;
};

/// Sample i uses seed derive_seed(seed, i); identities come from a separate stream.
TrainSample generate_indexed(const GenerateOptions& options, int index);
Manifest generate_dataset(const std::filesystem::path& dir, const GenerateOptions& options);
std::vector<TrainSample> load_dataset(const std::filesystem::path& dir);

}  // namespace hcustom::synth
