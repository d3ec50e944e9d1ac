#include "measground/text_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/log.hpp"
#include "measground/text_util.hpp"

namespace measground {

using nlohmann::json;

namespace {

// Decodes one UTF-8 sequence starting at s[i]; invalid bytes decode as themselves.
char32_t decode(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) { return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) & 0x3F : 0; };
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0) {
    len = 4;
    cp = ((b0 & 0x07u) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
  } else if (b0 >= 0xE0) {
    len = 3;
    cp = ((b0 & 0x0Fu) << 12) | (cont(1) << 6) | cont(2);
  } else if (b0 >= 0xC0) {
    len = 2;
    cp = ((b0 & 0x1Fu) << 6) | cont(1);
  }
  len = std::min(len, s.size() - i);
  i += len;
  return cp;
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x3000 && cp <= 0x303F) ||   // CJK symbols and punctuation
         (cp >= 0x3040 && cp <= 0x30FF) ||   // kana
         (cp >= 0x3400 && cp <= 0x4DBF) ||   // extension A
         (cp >= 0x4E00 && cp <= 0x9FFF) ||   // unified ideographs
         (cp >= 0xAC00 && cp <= 0xD7AF) ||   // hangul syllables
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // compatibility ideographs
         (cp >= 0xFF00 && cp <= 0xFFEF) ||   // half/full-width forms
         (cp >= 0x20000 && cp <= 0x2FA1F);   // supplementary ideographs
}

}  // namespace

Tokens tokenize(std::string_view s) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    const auto b = static_cast<unsigned char>(s[i]);
    if (b < 0x80) {
      ++i;
      if (std::isspace(b)) {
        flush();
      } else if (std::ispunct(b)) {
        flush();
        out.emplace_back(1, static_cast<char>(b));
      } else {
        cur.push_back(static_cast<char>(std::tolower(b)));
      }
      continue;
    }
    const char32_t cp = decode(s, i);
    if (is_cjk(cp)) {
      flush();
      out.emplace_back(s.substr(start, i - start));
    } else {
      cur.append(s.substr(start, i - start));
    }
  }
  flush();
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + i, t.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) fail(ErrorKind::InvalidArgument, "bleu needs at least one reference");
  if (candidate.empty()) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand = ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references)
      for (const auto& [gram, count] : ngrams(ref, n)) max_ref[gram] = std::max(max_ref[gram], count);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(count, it->second);
    }
    double precision = 0.0;
    if (matched > 0) {
      precision = static_cast<double>(matched) / static_cast<double>(total);
    } else if (n >= 2) {
      precision = 1.0 / static_cast<double>(total + 1);
    } else {
      return 0.0;
    }
    log_sum += std::log(precision);
  }

  const double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const double len = static_cast<double>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
  }
  const double bp = std::min(1.0, std::exp(1.0 - r / c));
  return bp * std::exp(log_sum / 4.0);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t m = candidate.size();
  const std::size_t n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j)
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(m);
  const double r = lcs / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

namespace {
std::string override_key(const std::string& question, const std::string& prediction) {
  return text::normalize_answer(question) + '\x1f' + text::normalize_answer(prediction);
}
}  // namespace

bool parse_verdict(const json& response) {
  if (!response.is_object() || !response.contains("verdict") || !response["verdict"].is_string())
    fail(ErrorKind::MalformedVerdict, "judge response lacks a string 'verdict': " + response.dump());
  const auto v = response["verdict"].get<std::string>();
  if (v == "correct") return true;
  if (v == "incorrect") return false;
  fail(ErrorKind::MalformedVerdict, "unknown verdict '" + v + "'");
}

MockJudge::MockJudge(const std::vector<json>& transcript) {
  for (const auto& line : transcript) {
    try {
      overrides_[override_key(line.at("question").get<std::string>(), line.at("prediction").get<std::string>())] =
          parse_verdict(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaViolation, std::string("judge transcript: ") + e.what());
    }
  }
}

MockJudge MockJudge::from_file(const std::filesystem::path& path) { return MockJudge(io::read_jsonl(path)); }

bool MockJudge::verdict(const JudgeRequest& req) {
  auto it = overrides_.find(override_key(req.question, req.prediction));
  if (it != overrides_.end()) return it->second;
  return text::normalize_answer(req.prediction) == text::normalize_answer(req.reference);
}

bool judge(const std::string& question, const std::string& reference, const std::string& prediction,
           JudgeClient& client, int max_retries) {
  const JudgeRequest req{question, reference, prediction};
  for (int attempt = 0;; ++attempt) {
    try {
      return client.verdict(req);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::JudgeUnavailable || attempt >= max_retries) throw;
      log::warn("judge.retry", {{"attempt", attempt + 1}, {"reason", e.what()}});
    }
  }
}

std::string prediction_key(const std::string& capture_id, const std::string& question) {
  return capture_id + '\x1f' + question;
}

Predictions load_predictions(const std::filesystem::path& path) {
  Predictions out;
  std::size_t line = 0;
  for (const auto& row : io::read_jsonl(path)) {
    ++line;
    try {
      out[prediction_key(row.at("capture_id").get<std::string>(), row.at("question").get<std::string>())] =
          row.at("prediction").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaViolation, path.string() + " record " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

MetricReport evaluate_run(const Predictions& predictions, const std::vector<BenchmarkExample>& benchmark,
                          JudgeClient& judge_client, std::size_t max_in_flight) {
  std::set<std::string> known;
  for (const auto& e : benchmark) known.insert(prediction_key(e.capture_id, e.question));
  for (const auto& [key, value] : predictions)
    if (!known.count(key))
      fail(ErrorKind::ManifestMismatch, "prediction for an example not in the benchmark: " +
                                            key.substr(0, key.find('\x1f')));

  struct Row {
    double bleu = 0.0;
    double rouge = 0.0;
    bool correct = false;
  };
  std::vector<Row> rows(benchmark.size());
  std::vector<std::string> preds(benchmark.size());
  MetricReport report;
  for (std::size_t i = 0; i < benchmark.size(); ++i) {
    const auto& e = benchmark[i];
    auto it = predictions.find(prediction_key(e.capture_id, e.question));
    if (it == predictions.end()) {
      ++report.missing_predictions;
      log::warn("eval.missing_prediction", {{"capture_id", e.capture_id}, {"question", e.question}});
    } else {
      preds[i] = it->second;
    }
    const Tokens cand = tokenize(preds[i]);
    const Tokens ref = tokenize(e.reference_answer);
    rows[i].bleu = bleu(cand, {ref});
    rows[i].rouge = rouge_l(cand, ref);
  }

  max_in_flight = std::max<std::size_t>(1, max_in_flight);
  for (std::size_t start = 0; start < benchmark.size(); start += max_in_flight) {
    const std::size_t end = std::min(benchmark.size(), start + max_in_flight);
    std::vector<std::future<bool>> inflight;
    for (std::size_t i = start; i < end; ++i) {
      inflight.push_back(std::async(std::launch::async, [&, i] {
        // An empty prediction is wrong without asking the judge.
        if (text::is_blank(preds[i])) return false;
        return judge(benchmark[i].question, benchmark[i].reference_answer, preds[i], judge_client);
      }));
    }
    for (std::size_t i = start; i < end; ++i) rows[i].correct = inflight[i - start].get();
  }

  std::map<CapabilityDimension, MetricTriple> sums;
  MetricTriple total;
  for (std::size_t i = 0; i < benchmark.size(); ++i) {
    const auto d = benchmark[i].dimension;
    auto& s = sums[d];
    s.bleu += rows[i].bleu;
    s.rouge_l += rows[i].rouge;
    s.judge_accuracy += rows[i].correct ? 1.0 : 0.0;
    ++report.counts[d];
    total.bleu += rows[i].bleu;
    total.rouge_l += rows[i].rouge;
    total.judge_accuracy += rows[i].correct ? 1.0 : 0.0;
  }
  report.total = benchmark.size();
  for (const auto& [d, s] : sums) {
    const double n = static_cast<double>(report.counts[d]);
    report.per_dimension[d] = {s.bleu / n, s.rouge_l / n, s.judge_accuracy / n};
  }
  if (report.total > 0) {
    const double n = static_cast<double>(report.total);
    report.overall = {total.bleu / n, total.rouge_l / n, total.judge_accuracy / n};
  }
  return report;
}

json to_json(const MetricReport& r) {
  auto triple = [](const MetricTriple& t) {
    return json{{"bleu", t.bleu}, {"rouge_l", t.rouge_l}, {"judge_accuracy", t.judge_accuracy}};
  };
  json dims = json::array();
  for (CapabilityDimension d : kAllDimensions) {
    auto it = r.per_dimension.find(d);
    if (it == r.per_dimension.end()) continue;
    json row = triple(it->second);
    row["dimension"] = std::string(to_string(d));
    row["count"] = r.counts.at(d);
    dims.push_back(row);
  }
  return {{"overall", triple(r.overall)},
          {"per_dimension", dims},
          {"total", r.total},
          {"missing_predictions", r.missing_predictions}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  try {
    auto triple = [](const json& t) {
      return MetricTriple{t.at("bleu").get<double>(), t.at("rouge_l").get<double>(),
                          t.at("judge_accuracy").get<double>()};
    };
    r.overall = triple(j.at("overall"));
    r.total = j.at("total").get<std::size_t>();
    r.missing_predictions = j.at("missing_predictions").get<std::size_t>();
    for (const auto& row : j.at("per_dimension")) {
      const auto d = parse_dimension(row.at("dimension").get<std::string>());
      if (!d) fail(ErrorKind::SchemaViolation, "unknown dimension in metric report");
      r.per_dimension[*d] = triple(row);
      r.counts[*d] = row.at("count").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, std::string("metric report: ") + e.what());
  }
  return r;
}

std::string render_table(const MetricReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-42s %6s %8s %8s %9s\n", "Capability Dimension", "N", "BLEU", "ROUGE-L",
                "Judge(%)");
  out += line;
  auto row = [&](const std::string& label, std::size_t n, const MetricTriple& t) {
    std::snprintf(line, sizeof line, "%-42s %6zu %8.4f %8.4f %9.2f\n", label.c_str(), n, t.bleu, t.rouge_l,
                  100.0 * t.judge_accuracy);
    out += line;
  };
  for (CapabilityDimension d : kAllDimensions) {
    auto it = r.per_dimension.find(d);
    if (it == r.per_dimension.end()) continue;
    row(std::string(display_name(d)) + " (" + std::string(to_string(d)) + ")", r.counts.at(d), it->second);
  }
  row("Overall", r.total, r.overall);
  return out;
}

}  // namespace measground
