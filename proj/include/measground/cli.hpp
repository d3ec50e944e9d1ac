#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/dataset_build.hpp"
#include "measground/isp.hpp"
#include "measground/lost_signal.hpp"

namespace measground::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "0.3.0";

struct RunConfig {
  fs::path input_root;  // empty: <output_root>/captures
  fs::path output_root = "out";
  RenderParams render;
  bool gain_given = false;
  std::vector<double> exposures = default_bracket();
  double score_floor = kDefaultScoreFloor;
  std::vector<std::string> placeholder_patterns = default_placeholder_patterns();
  BalanceCaps caps;
  std::size_t target_size = 150'000;
  double split_fraction = 0.1;
  std::uint64_t seed = 0;
  std::string annotator_url;
  std::string judge_url;
  fs::path mock_annotator;
  fs::path mock_judge;
  fs::path predictions;
  fs::path train_manifest;  // empty: <out>/train_manifest.jsonl
  fs::path bench_manifest;  // empty: <out>/bench_manifest.jsonl
  double tau = kDefaultTau;
  int bins = 32;
  fs::path probe_config;
  fs::path scene_spec;
  std::size_t synth_count = 1;
  std::size_t max_in_flight = 4;
  int max_retries = 3;
};

/// Strict: unknown keys and out-of-range values raise ConfigInvalid naming the field path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
void validate(const RunConfig& config);

/// Stable FNV-1a 64 over the canonical config JSON, hex encoded.
std::string config_hash(const RunConfig& config);

const std::vector<std::string>& subcommands();
std::string usage();

/// Runs one already-configured subcommand. 0 success, 1 validation failure, 2 IO/remote failure.
int run_subcommand(const std::string& name, const RunConfig& config);

/// Full argument handling: `args[0]` is the subcommand, the rest are flags.
int run(const std::vector<std::string>& args);

}  // namespace measground::cli
