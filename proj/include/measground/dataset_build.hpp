#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/bracketsup.hpp"

namespace measground {

struct BalanceCaps {
  std::size_t per_source = 1'000'000;
  std::size_t per_type = 1'000'000;
  std::size_t per_template = 1'000'000;
};

/// Accounting that mirrors candidate -> post-scoring -> balanced totals.
struct DatasetStats {
  std::size_t input_total = 0;
  std::size_t dropped_by_floor = 0;
  std::size_t dropped_placeholder = 0;
  std::size_t dropped_by_caps = 0;
  std::size_t dropped_duplicate = 0;
  std::size_t kept = 0;
  bool shortfall = false;
  std::map<std::string, std::size_t> by_source_prefix;
  std::map<std::string, std::size_t> by_question_type;
  std::map<std::string, std::size_t> by_template_id;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

struct DatasetManifest {
  std::vector<TrainingSample> samples;
  DatasetStats stats;
  double score_floor = 0.0;
  std::size_t target_size = 0;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr double kDefaultScoreFloor = 0.5;

/// Keeps samples with record.score >= floor, in order. InvalidArgument if floor is outside [0, 1].
std::vector<TrainingSample> score_filter(const std::vector<TrainingSample>& samples, double floor);

/// Case-insensitive substring patterns for failed annotator answers. The empty
/// pattern matches only an empty (after normalization) answer.
std::vector<std::string> default_placeholder_patterns();

struct PlaceholderResult {
  std::vector<TrainingSample> kept;
  std::size_t dropped = 0;
};

PlaceholderResult remove_placeholders(const std::vector<TrainingSample>& samples,
                                      const std::vector<std::string>& patterns = default_placeholder_patterns());

/// Greedy pass in descending score (ties ordered by a seeded shuffle of a canonical
/// ordering, so the pool's input order never matters). A sample is accepted when its
/// source prefix, question type and template counts are all below their caps and its
/// (capture_id, normalized question) pair is new. Stops at target_size; a pool that
/// cannot reach it sets stats.shortfall.
DatasetManifest balance(const std::vector<TrainingSample>& samples, const BalanceCaps& caps, std::size_t target_size,
                        std::uint64_t seed);

/// score_filter -> remove_placeholders -> balance, with the full accounting.
DatasetManifest build_dataset(const std::vector<TrainingSample>& pool, double floor,
                              const std::vector<std::string>& patterns, const BalanceCaps& caps,
                              std::size_t target_size, std::uint64_t seed);

/// Rebuild the per-key counts and kept total from the current samples.
void recount(DatasetManifest& manifest);

nlohmann::json stats_to_json(const DatasetManifest& manifest);

/// Samples as JSONL at `path`, stats at `<path minus extension>.stats.json`.
std::filesystem::path stats_path_for(const std::filesystem::path& manifest_path);
void export_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// SchemaViolation naming the offending 1-based line.
DatasetManifest load_manifest(const std::filesystem::path& path);

std::vector<TrainingSample> load_samples(const std::filesystem::path& path);
void save_samples(const std::vector<TrainingSample>& samples, const std::filesystem::path& path);

}  // namespace measground
