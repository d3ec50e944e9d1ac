#include "measground/bracketsup.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <set>
#include <thread>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/log.hpp"
#include "measground/text_util.hpp"

namespace measground {

using nlohmann::json;

bool is_valid(const CandidateRecord& c) {
  return !text::is_blank(c.question) && !text::is_blank(c.answer) && std::isfinite(c.score) && c.score >= 0.0 &&
         c.score <= 1.0 && std::isfinite(c.exposure_gain) && c.exposure_gain > 0.0;
}

void validate(const InstructionRecord& r) {
  if (text::is_blank(r.question) || text::is_blank(r.answer))
    fail(ErrorKind::SchemaViolation, "record question and answer must be non-empty");
  if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0)
    fail(ErrorKind::SchemaViolation, "record score must lie in [0, 1]");
  if (r.provenance.empty()) fail(ErrorKind::SchemaViolation, "record provenance must be non-empty");
}

json to_json(const InstructionRecord& r) {
  return {{"question", r.question},         {"answer", r.answer},           {"score", r.score},
          {"question_type", r.question_type}, {"template_id", r.template_id}, {"source_prefix", r.source_prefix},
          {"provenance", r.provenance}};
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const char* where) {
  if (!j.is_object()) fail(ErrorKind::SchemaViolation, std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(ErrorKind::SchemaViolation, "unknown key '" + it.key() + "' in " + where);
}

}  // namespace

InstructionRecord record_from_json(const json& j) {
  check_keys(j, {"question", "answer", "score", "question_type", "template_id", "source_prefix", "provenance"},
             "record");
  InstructionRecord r;
  try {
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.score = j.at("score").get<double>();
    r.question_type = j.at("question_type").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.source_prefix = j.at("source_prefix").get<std::string>();
    r.provenance = j.at("provenance").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, std::string("record: ") + e.what());
  }
  validate(r);
  return r;
}

json to_json(const TrainingSample& s) {
  return {{"capture_id", s.capture_id},
          {"meas_xyz_path", s.meas_xyz_path},
          {"raw_path", s.raw_path},
          {"record", to_json(s.record)},
          {"metadata", metadata_to_json(s.metadata)}};
}

TrainingSample sample_from_json(const json& j) {
  check_keys(j, {"capture_id", "meas_xyz_path", "raw_path", "record", "metadata"}, "sample");
  TrainingSample s;
  try {
    s.capture_id = j.at("capture_id").get<std::string>();
    s.meas_xyz_path = j.at("meas_xyz_path").get<std::string>();
    s.raw_path = j.at("raw_path").get<std::string>();
    s.record = record_from_json(j.at("record"));
    s.metadata = metadata_from_json(j.at("metadata"));
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, std::string("sample: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MalformedSidecar) fail(ErrorKind::SchemaViolation, e.what());
    throw;
  }
  return s;
}

json to_json(const CandidateRecord& c) {
  json j = {{"question", c.question},
            {"answer", c.answer},
            {"score", c.score},
            {"exposure_gain", c.exposure_gain},
            {"question_type", c.question_type},
            {"template_id", c.template_id},
            {"source_prefix", c.source_prefix}};
  if (!c.provenance.empty()) j["provenance"] = c.provenance;
  return j;
}

CandidateRecord candidate_from_json(const json& j) {
  CandidateRecord c;
  try {
    c.question = j.at("question").get<std::string>();
    c.answer = j.at("answer").get<std::string>();
    c.score = j.at("score").get<double>();
    c.exposure_gain = j.value("exposure_gain", 1.0);
    c.question_type = j.value("question_type", std::string());
    c.template_id = j.value("template_id", std::string());
    c.source_prefix = j.value("source_prefix", std::string());
    if (j.contains("provenance")) c.provenance = j.at("provenance").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedResponse, std::string("candidate: ") + e.what());
  }
  return c;
}

std::string source_prefix_of(const std::string& capture_id) {
  const auto cut = capture_id.find_first_of("_-");
  return cut == std::string::npos ? capture_id : capture_id.substr(0, cut);
}

std::string annotator_key(const std::string& capture_id, double exposure_gain) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", exposure_gain);
  return capture_id + "|" + buf;
}

MockAnnotator::MockAnnotator(const std::vector<json>& transcript) {
  for (const auto& line : transcript) {
    try {
      const std::string key = annotator_key(line.at("capture_id").get<std::string>(),
                                            line.at("exposure_gain").get<double>());
      scripts_[key].responses.push_back(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaViolation, std::string("annotator transcript: ") + e.what());
    }
  }
}

MockAnnotator MockAnnotator::from_file(const std::filesystem::path& path) {
  return MockAnnotator(io::read_jsonl(path));
}

json MockAnnotator::request(const AnnotationRequest& req) {
  std::lock_guard lock(mu_);
  ++calls_;
  auto it = scripts_.find(annotator_key(req.capture_id, req.exposure_gain));
  if (it == scripts_.end()) return {{"candidates", json::array()}};
  Script& script = it->second;
  const json& line = script.responses[std::min(script.next, script.responses.size() - 1)];
  ++script.next;
  if (line.contains("error")) fail(ErrorKind::AnnotatorUnavailable, "scripted failure: " + line["error"].dump());
  json response = {{"candidates", line.value("candidates", json::array())}};
  return response;
}

std::size_t MockAnnotator::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

AnnotateResult annotate(const RenderedRgb& proxy, AnnotatorClient& client, const std::string& source_prefix,
                        const RetryPolicy& policy) {
  const AnnotationRequest req{proxy.capture_id(), proxy.params().exposure_gain, &proxy};
  AnnotateResult result;
  json response;
  for (int attempt = 0;; ++attempt) {
    try {
      response = client.request(req);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::AnnotatorUnavailable || attempt >= policy.max_retries) throw;
      ++result.retries;
      log::warn("annotate.retry", {{"capture_id", req.capture_id}, {"exposure_gain", req.exposure_gain},
                                   {"attempt", attempt + 1}, {"reason", e.what()}});
      if (policy.backoff.count() > 0) std::this_thread::sleep_for(policy.backoff * (attempt + 1));
    }
  }

  if (!response.is_object() || !response.contains("candidates") || !response["candidates"].is_array())
    fail(ErrorKind::MalformedResponse, "annotator response lacks a 'candidates' array: " + response.dump());

  for (const auto& item : response["candidates"]) {
    CandidateRecord c;
    try {
      c = candidate_from_json(item);
    } catch (const Error& e) {
      log::warn("annotate.malformed_candidate", {{"capture_id", req.capture_id}, {"payload", item}});
      ++result.dropped;
      continue;
    }
    c.exposure_gain = req.exposure_gain;
    c.provenance.clear();
    c.source_prefix = source_prefix;
    if (!is_valid(c)) {
      log::debug("annotate.invalid_candidate", {{"capture_id", req.capture_id}, {"payload", item}});
      ++result.dropped;
      continue;
    }
    result.candidates.push_back(std::move(c));
  }
  return result;
}

AnnotateResult annotate_bracket(const std::vector<RenderedRgb>& proxies, AnnotatorClient& client,
                                const std::string& source_prefix, std::size_t max_in_flight,
                                const RetryPolicy& policy) {
  max_in_flight = std::max<std::size_t>(1, max_in_flight);
  std::vector<AnnotateResult> parts(proxies.size());
  for (std::size_t start = 0; start < proxies.size(); start += max_in_flight) {
    const std::size_t end = std::min(proxies.size(), start + max_in_flight);
    std::vector<std::future<AnnotateResult>> inflight;
    for (std::size_t i = start; i < end; ++i)
      inflight.push_back(std::async(std::launch::async, [&, i] { return annotate(proxies[i], client, source_prefix, policy); }));
    for (std::size_t i = start; i < end; ++i) parts[i] = inflight[i - start].get();
  }
  AnnotateResult merged;
  for (auto& part : parts) {
    merged.retries += part.retries;
    merged.dropped += part.dropped;
    for (auto& c : part.candidates) merged.candidates.push_back(std::move(c));
  }
  return merged;
}

namespace {

std::vector<double> provenance_of(const CandidateRecord& c) {
  return c.provenance.empty() ? std::vector<double>{c.exposure_gain} : c.provenance;
}

struct Scored {
  const CandidateRecord* candidate;
  double score;
  std::string answer_key;
};

// Strict total order: higher score, then exposure nearest 1.0, then answer text,
// then the remaining fields so that input order can never matter.
bool better(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  const double da = std::abs(a.candidate->exposure_gain - 1.0);
  const double db = std::abs(b.candidate->exposure_gain - 1.0);
  if (da != db) return da < db;
  const auto& x = *a.candidate;
  const auto& y = *b.candidate;
  return std::tie(x.answer, x.exposure_gain, x.question, x.question_type, x.template_id, x.source_prefix) <
         std::tie(y.answer, y.exposure_gain, y.question, y.question_type, y.template_id, y.source_prefix);
}

}  // namespace

std::vector<InstructionRecord> aggregate(const std::vector<CandidateRecord>& candidates) {
  if (candidates.empty()) fail(ErrorKind::EmptyInput, "aggregate needs at least one candidate");

  std::map<std::string, std::vector<const CandidateRecord*>> groups;
  for (const auto& c : candidates) groups[text::normalize_question(c.question)].push_back(&c);

  std::vector<std::pair<std::string, InstructionRecord>> keyed;
  for (const auto& [key, members] : groups) {
    // Distinct exposures behind each normalized answer.
    std::map<std::string, std::set<double>> answer_exposures;
    std::set<double> provenance;
    for (const auto* c : members) {
      auto& exposures = answer_exposures[text::normalize_answer(c->answer)];
      exposures.insert(c->exposure_gain);
      for (double e : provenance_of(*c)) provenance.insert(e);
    }

    std::optional<Scored> best;
    for (const auto* c : members) {
      Scored s{c, c->score, text::normalize_answer(c->answer)};
      if (answer_exposures[s.answer_key].size() >= 2) s.score = std::min(1.0, s.score + kAgreementBoost);
      if (!best || better(s, *best)) best = s;
    }

    InstructionRecord r;
    r.question = best->candidate->question;
    r.answer = best->candidate->answer;
    r.score = best->score;
    r.question_type = best->candidate->question_type;
    r.template_id = best->candidate->template_id;
    r.source_prefix = best->candidate->source_prefix;
    r.provenance.assign(provenance.begin(), provenance.end());
    keyed.emplace_back(key, std::move(r));
  }

  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.first < b.first;
  });
  std::vector<InstructionRecord> out;
  out.reserve(keyed.size());
  for (auto& [key, r] : keyed) out.push_back(std::move(r));
  return out;
}

std::vector<CandidateRecord> as_candidates(const std::vector<InstructionRecord>& records) {
  std::vector<CandidateRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.provenance.empty()) fail(ErrorKind::SchemaViolation, "record without provenance");
    double representative = r.provenance.front();
    for (double e : r.provenance)
      if (std::abs(e - 1.0) < std::abs(representative - 1.0)) representative = e;
    out.push_back({r.question, r.answer, r.score, representative, r.question_type, r.template_id, r.source_prefix,
                   r.provenance});
  }
  return out;
}

std::vector<TrainingSample> build_samples(const std::string& capture_id, const std::string& raw_path,
                                          const CameraMetadata& metadata, const std::filesystem::path& meas_xyz_stem,
                                          const std::vector<InstructionRecord>& records) {
  const auto header_path = io::with_suffix(meas_xyz_stem, ".json");
  const auto plane_path = io::with_suffix(meas_xyz_stem, ".bin");
  if (!std::filesystem::exists(header_path) || !std::filesystem::exists(plane_path))
    fail(ErrorKind::MissingMeasXyz, "no Meas.-XYZ plane at " + meas_xyz_stem.string());
  const json header = io::read_json(header_path);
  if (header.value("capture_id", std::string()) != capture_id)
    fail(ErrorKind::MissingMeasXyz, meas_xyz_stem.string() + " belongs to another capture");

  std::vector<TrainingSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    validate(r);
    out.push_back({capture_id, meas_xyz_stem.string(), raw_path, r, metadata});
  }
  return out;
}

std::vector<TrainingSample> build_samples(const RawCapture& capture, const std::filesystem::path& meas_xyz_stem,
                                          const std::vector<InstructionRecord>& records) {
  return build_samples(capture.capture_id, capture.raw_path, capture.metadata, meas_xyz_stem, records);
}

}  // namespace measground
