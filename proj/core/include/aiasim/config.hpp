#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "aiasim/engine.hpp"
#include "aiasim/kd_sim.hpp"
#include "aiasim/memory_model.hpp"
#include "aiasim/synth.hpp"

namespace aiasim {

using Json = nlohmann::ordered_json;

/// Everything one `simulate` or `probe` run needs. Loading validates the
/// whole document before anything runs; `echo` is the normalized form with
/// defaults filled in.
struct RunConfig {
  MemoryMap map;
  Preset system;  // translation model + driver policy
  SimConfig sim;
  Pid pid = 1;
  std::uint64_t seed = 0;
  Json echo;
};

RunConfig load_config(const Json& doc);
RunConfig load_config_file(const std::filesystem::path& path);

/// Reads a file and parses it as JSON; ConfigError on I/O or syntax.
Json read_json_file(const std::filesystem::path& path);

MemoryMap parse_memory_map(const Json& regions);
Json memory_map_to_json(const MemoryMap& map);

Defense parse_defense(const Json& j);
Json defense_to_json(const Defense& d);

SynthParams parse_synth(const Json& j);
Json synth_to_json(const SynthParams& p);

/// Desk-scale synthetic map used when `probe` is given no map: KMem, HMem,
/// two users' UMem, DMem, AIRMem and an AIMem window.
MemoryMap default_probe_map();

}  // namespace aiasim
