#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/benchmark.hpp"

namespace measground {

using Tokens = std::vector<std::string>;

/// Lowercases ASCII, splits on whitespace, emits each ASCII punctuation mark and
/// each CJK code point as its own token.
Tokens tokenize(std::string_view text);

/// Sentence BLEU-4: geometric mean of clipped n-gram precisions (n = 1..4) times
/// the brevity penalty min(1, exp(1 - r/c)), r the closest reference length
/// (shorter on ties). A zero match count for n >= 2 is smoothed to 1/(total + 1).
/// An empty candidate scores 0. InvalidArgument when `references` is empty.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references);

/// LCS F-measure (beta = 1). 0 for an empty candidate or no common subsequence.
double rouge_l(const Tokens& candidate, const Tokens& reference);

struct JudgeRequest {
  std::string question;
  std::string reference;
  std::string prediction;
};

/// Implementations throw Error(JudgeUnavailable) for retryable failures and
/// Error(MalformedVerdict) for unparseable answers. Must be thread-safe.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual bool verdict(const JudgeRequest& req) = 0;
};

/// Offline judge: normalized exact match, optionally overridden per
/// (question, prediction) by a JSONL transcript of {"question", "prediction", "verdict"}.
class MockJudge : public JudgeClient {
 public:
  MockJudge() = default;
  explicit MockJudge(const std::vector<nlohmann::json>& transcript);
  static MockJudge from_file(const std::filesystem::path& path);
  bool verdict(const JudgeRequest& req) override;

 private:
  std::map<std::string, bool> overrides_;
};

/// HTTP POST {"question", "reference", "prediction"} -> {"verdict": "correct"|"incorrect"}.
class HttpJudge : public JudgeClient {
 public:
  HttpJudge(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(60));
  bool verdict(const JudgeRequest& req) override;

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
};

/// "correct" -> true, "incorrect" -> false, anything else MalformedVerdict.
bool parse_verdict(const nlohmann::json& response);

bool judge(const std::string& question, const std::string& reference, const std::string& prediction,
           JudgeClient& client, int max_retries = 3);

struct MetricTriple {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double judge_accuracy = 0.0;  // fraction
};

struct MetricReport {
  MetricTriple overall;
  std::map<CapabilityDimension, MetricTriple> per_dimension;
  std::map<CapabilityDimension, std::size_t> counts;
  std::size_t total = 0;
  std::size_t missing_predictions = 0;
};

std::string prediction_key(const std::string& capture_id, const std::string& question);

using Predictions = std::map<std::string, std::string>;  // prediction_key -> answer

/// Lines of {"capture_id", "question", "prediction"}.
Predictions load_predictions(const std::filesystem::path& path);

/// Per-example BLEU / ROUGE-L / judge verdicts averaged per dimension and overall.
/// Missing predictions score as empty strings and are counted. ManifestMismatch when
/// a prediction names no benchmark example.
MetricReport evaluate_run(const Predictions& predictions, const std::vector<BenchmarkExample>& benchmark,
                          JudgeClient& judge_client, std::size_t max_in_flight = 4);

nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
/// Aligned text table: one row per capability dimension plus an overall row.
/// Judge accuracy is rendered as a percentage.
std::string render_table(const MetricReport& report);

}  // namespace measground
