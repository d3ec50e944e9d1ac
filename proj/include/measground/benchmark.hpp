#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "measground/capture_model.hpp"
#include "measground/dataset_build.hpp"

namespace measground {

enum class CapabilityDimension { CAG, NG, DSG, HER, LER, STR, GVG, CVR, SRU, MSQ, EAQ, DS, AEI, BVV };

inline constexpr std::array<CapabilityDimension, 14> kAllDimensions = {
    CapabilityDimension::CAG, CapabilityDimension::NG,  CapabilityDimension::DSG, CapabilityDimension::HER,
    CapabilityDimension::LER, CapabilityDimension::STR, CapabilityDimension::GVG, CapabilityDimension::CVR,
    CapabilityDimension::SRU, CapabilityDimension::MSQ, CapabilityDimension::EAQ, CapabilityDimension::DS,
    CapabilityDimension::AEI, CapabilityDimension::BVV};

std::string_view to_string(CapabilityDimension d);
std::string_view display_name(CapabilityDimension d);
std::optional<CapabilityDimension> parse_dimension(std::string_view abbrev);

struct BenchmarkExample {
  std::string capture_id;
  std::string meas_xyz_path;
  std::string rgb_proxy_path;
  std::string raw_path;
  std::string question;
  std::string reference_answer;
  CapabilityDimension dimension = CapabilityDimension::GVG;
  CameraMetadata metadata;

  friend bool operator==(const BenchmarkExample&, const BenchmarkExample&) = default;
};

nlohmann::json to_json(const BenchmarkExample& e);
BenchmarkExample example_from_json(const nlohmann::json& j);
void save_benchmark(const std::vector<BenchmarkExample>& examples, const std::filesystem::path& path);
std::vector<BenchmarkExample> load_benchmark(const std::filesystem::path& path);

/// What the splitter needs to know about a capture.
struct CaptureRef {
  std::string capture_id;
  std::string raw_path;
  std::string device_id;
  std::optional<std::string> scene_id;
  std::optional<std::string> session_id;
};

CaptureRef ref_of(const RawCapture& capture);

struct SplitResult {
  std::vector<std::string> train_ids;  // sorted
  std::vector<std::string> bench_ids;  // sorted
  std::vector<std::string> warnings;
};

/// Capture-level holdout. Captures sharing a raw path, scene id or session id are
/// kept on one side. Captures without scene/session ids fall back to capture-level
/// grouping with a warning. DegenerateSplit when one group holds more than
/// (1 - bench_fraction) of the captures, or when either side would be empty.
SplitResult holdout_split(const std::vector<CaptureRef>& captures, double bench_fraction, std::uint64_t seed);

enum class SplitVerdict { Pass, Warn, Fail };
std::string_view to_string(SplitVerdict v);

/// Intersections between the provenance keys of two manifests. Shared capture ids,
/// raw paths, scene ids or session ids fail; a shared device id only warns.
struct DisjointnessReport {
  SplitVerdict verdict = SplitVerdict::Pass;
  std::set<std::string> capture_ids;
  std::set<std::string> raw_paths;
  std::set<std::string> scene_ids;
  std::set<std::string> session_ids;
  std::set<std::string> device_ids;
};

std::vector<CaptureRef> refs_of(const std::vector<TrainingSample>& samples);
std::vector<CaptureRef> refs_of(const std::vector<BenchmarkExample>& examples);

DisjointnessReport verify_disjointness(const std::vector<CaptureRef>& train, const std::vector<CaptureRef>& bench);
DisjointnessReport verify_disjointness(const DatasetManifest& train, const std::vector<BenchmarkExample>& bench);
nlohmann::json to_json(const DisjointnessReport& r);

/// Keyword tagger. `override_dim` wins; otherwise the first matching rule in the
/// order NG, STR, CAG, BVV, DS, SRU decides, falling back to GVG.
CapabilityDimension tag_capability(std::string_view question, std::string_view answer,
                                   std::optional<CapabilityDimension> override_dim = std::nullopt);

}  // namespace measground
