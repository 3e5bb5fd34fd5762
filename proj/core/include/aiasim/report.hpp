#pragma once

#include <filesystem>
#include <string>

#include "aiasim/cda_probe.hpp"
#include "aiasim/config.hpp"
#include "aiasim/engine.hpp"

namespace aiasim {

Json sim_report(const Json& config_echo, std::uint64_t seed, const SimResult& r);
Json probe_report(const CdaProbe& probe, const ProbeReport& r);
Json class_to_json(const CdaClass& c);

/// Pretty JSON with a trailing newline; stable for golden files.
std::string dump(const Json& j);

/// Writes through a sibling temp file and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace aiasim
