#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/capture_model.hpp"
#include "measground/isp.hpp"

namespace measground {

/// One (question, answer) proposal produced from a single exposure proxy.
struct CandidateRecord {
  std::string question;
  std::string answer;
  double score = 0.0;
  double exposure_gain = 1.0;
  std::string question_type;
  std::string template_id;
  std::string source_prefix;
  /// Exposures already folded into this candidate; empty means {exposure_gain}.
  std::vector<double> provenance;

  friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

struct InstructionRecord {
  std::string question;
  std::string answer;
  double score = 0.0;
  std::string question_type;
  std::string template_id;
  std::string source_prefix;
  std::vector<double> provenance;  // ascending, unique

  friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

/// A supervision record attached to the Meas.-XYZ observation of its capture.
/// `meas_xyz_path` is the plane stem (`<stem>.bin` + `<stem>.json`).
struct TrainingSample {
  std::string capture_id;
  std::string meas_xyz_path;
  std::string raw_path;
  InstructionRecord record;
  CameraMetadata metadata;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

/// Non-empty question/answer after trimming and score in [0, 1].
bool is_valid(const CandidateRecord& c);
void validate(const InstructionRecord& r);

nlohmann::json to_json(const InstructionRecord& r);
InstructionRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainingSample& s);
/// Strict schema; SchemaViolation on unknown or missing keys.
TrainingSample sample_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CandidateRecord& c);
CandidateRecord candidate_from_json(const nlohmann::json& j);

/// Corpus origin derived from a capture id: the text before the first '_' or '-'.
std::string source_prefix_of(const std::string& capture_id);

struct AnnotationRequest {
  std::string capture_id;
  double exposure_gain = 1.0;
  const RenderedRgb* proxy = nullptr;
};

/// Produces raw annotator responses of the form {"candidates": [...]}. Implementations
/// throw Error(AnnotatorUnavailable) for retryable failures and must be thread-safe.
class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;
  virtual nlohmann::json request(const AnnotationRequest& req) = 0;
};

/// Deterministic offline annotator backed by a JSONL transcript. Each line is
/// {"capture_id", "exposure_gain", "candidates": [...]} or {..., "error": "unavailable"};
/// lines for the same key are replayed in order and the last one repeats. Unknown keys
/// answer with an empty candidate list.
class MockAnnotator : public AnnotatorClient {
 public:
  explicit MockAnnotator(const std::vector<nlohmann::json>& transcript);
  static MockAnnotator from_file(const std::filesystem::path& path);

  nlohmann::json request(const AnnotationRequest& req) override;
  std::size_t calls() const;

 private:
  struct Script {
    std::vector<nlohmann::json> responses;
    std::size_t next = 0;
  };
  mutable std::mutex mu_;
  std::map<std::string, Script> scripts_;
  std::size_t calls_ = 0;
};

/// HTTP POST client for a remote annotator. Request body:
/// {"capture_id", "exposure_gain", "image": base64 PPM}.
class HttpAnnotator : public AnnotatorClient {
 public:
  HttpAnnotator(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  nlohmann::json request(const AnnotationRequest& req) override;

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
};

std::string annotator_key(const std::string& capture_id, double exposure_gain);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff{0};
};

struct AnnotateResult {
  std::vector<CandidateRecord> candidates;
  int retries = 0;
  std::size_t dropped = 0;  // schema-violating or empty candidates
};

/// Ask the client for candidates on one proxy and stamp each with the proxy's
/// exposure gain and the capture's source prefix. Retries AnnotatorUnavailable up
/// to policy.max_retries times before rethrowing.
AnnotateResult annotate(const RenderedRgb& proxy, AnnotatorClient& client, const std::string& source_prefix,
                        const RetryPolicy& policy = {});

/// annotate() over a whole bracket with at most `max_in_flight` concurrent requests.
/// Output order follows the proxies, independent of completion order.
AnnotateResult annotate_bracket(const std::vector<RenderedRgb>& proxies, AnnotatorClient& client,
                                const std::string& source_prefix, std::size_t max_in_flight = 4,
                                const RetryPolicy& policy = {});

/// Cross-exposure agreement bonus applied once per agreeing answer.
inline constexpr double kAgreementBoost = 0.1;

/// Bracket aggregation: one record per normalized question. Answers agreed on by
/// two or more exposures get +0.1 (capped at 1); the best candidate wins with ties
/// broken by exposure closest to 1.0 and then by answer text. Provenance is every
/// exposure in the group. Sorted by descending score. EmptyInput on an empty list.
std::vector<InstructionRecord> aggregate(const std::vector<CandidateRecord>& candidates);

/// View records as candidates again (exposure = provenance entry closest to 1.0).
std::vector<CandidateRecord> as_candidates(const std::vector<InstructionRecord>& records);

/// Attach records to the capture's Meas.-XYZ plane at `meas_xyz_stem`. MissingMeasXyz
/// when the plane header is absent or names another capture.
std::vector<TrainingSample> build_samples(const RawCapture& capture, const std::filesystem::path& meas_xyz_stem,
                                          const std::vector<InstructionRecord>& records);
std::vector<TrainingSample> build_samples(const std::string& capture_id, const std::string& raw_path,
                                          const CameraMetadata& metadata, const std::filesystem::path& meas_xyz_stem,
                                          const std::vector<InstructionRecord>& records);

}  // namespace measground
