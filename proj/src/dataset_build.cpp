#include "measground/dataset_build.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/text_util.hpp"

namespace measground {

using nlohmann::json;

std::vector<TrainingSample> score_filter(const std::vector<TrainingSample>& samples, double floor) {
  if (!(floor >= 0.0 && floor <= 1.0)) fail(ErrorKind::InvalidArgument, "score floor must lie in [0, 1]");
  std::vector<TrainingSample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [floor](const TrainingSample& s) { return s.record.score >= floor; });
  return out;
}

std::vector<std::string> default_placeholder_patterns() {
  return {"i cannot", "unable to", "as an ai", "no answer", ""};
}

PlaceholderResult remove_placeholders(const std::vector<TrainingSample>& samples,
                                      const std::vector<std::string>& patterns) {
  if (patterns.empty()) fail(ErrorKind::InvalidArgument, "placeholder pattern list must be non-empty");
  std::vector<std::string> normalized;
  for (const auto& p : patterns) normalized.push_back(text::normalize_answer(p));

  PlaceholderResult result;
  for (const auto& s : samples) {
    const std::string answer = text::normalize_answer(s.record.answer);
    const bool hit = std::any_of(normalized.begin(), normalized.end(), [&](const std::string& p) {
      return p.empty() ? answer.empty() : answer.find(p) != std::string::npos;
    });
    if (hit) {
      ++result.dropped;
    } else {
      result.kept.push_back(s);
    }
  }
  return result;
}

namespace {

std::string dedupe_key(const TrainingSample& s) {
  return s.capture_id + '\x1f' + text::normalize_question(s.record.question);
}

}  // namespace

DatasetManifest balance(const std::vector<TrainingSample>& samples, const BalanceCaps& caps, std::size_t target_size,
                        std::uint64_t seed) {
  if (caps.per_source == 0 || caps.per_type == 0 || caps.per_template == 0)
    fail(ErrorKind::InvalidArgument, "balance caps must be positive");
  if (target_size == 0) fail(ErrorKind::InvalidArgument, "target_size must be positive");

  // Canonical order first so the shuffle (and therefore tie order) ignores input order.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::string> canon(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) canon[i] = to_json(samples[i]).dump();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return canon[a] < canon[b]; });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].record.score > samples[b].record.score;
  });

  DatasetManifest manifest;
  manifest.target_size = target_size;
  manifest.stats.input_total = samples.size();
  std::map<std::string, std::size_t> per_source, per_type, per_template;
  std::set<std::string> seen;
  for (std::size_t idx : order) {
    if (manifest.samples.size() >= target_size) break;
    const TrainingSample& s = samples[idx];
    const auto& r = s.record;
    if (seen.count(dedupe_key(s))) {
      ++manifest.stats.dropped_duplicate;
      continue;
    }
    if (per_source[r.source_prefix] >= caps.per_source || per_type[r.question_type] >= caps.per_type ||
        per_template[r.template_id] >= caps.per_template) {
      ++manifest.stats.dropped_by_caps;
      continue;
    }
    seen.insert(dedupe_key(s));
    ++per_source[r.source_prefix];
    ++per_type[r.question_type];
    ++per_template[r.template_id];
    manifest.samples.push_back(s);
  }

  recount(manifest);
  return manifest;
}

void recount(DatasetManifest& manifest) {
  auto& st = manifest.stats;
  st.kept = manifest.samples.size();
  st.shortfall = manifest.samples.size() < manifest.target_size;
  st.by_source_prefix.clear();
  st.by_question_type.clear();
  st.by_template_id.clear();
  for (const auto& s : manifest.samples) {
    ++st.by_source_prefix[s.record.source_prefix];
    ++st.by_question_type[s.record.question_type];
    ++st.by_template_id[s.record.template_id];
  }
}

DatasetManifest build_dataset(const std::vector<TrainingSample>& pool, double floor,
                              const std::vector<std::string>& patterns, const BalanceCaps& caps,
                              std::size_t target_size, std::uint64_t seed) {
  const auto scored = score_filter(pool, floor);
  const auto cleaned = remove_placeholders(scored, patterns);
  DatasetManifest manifest = balance(cleaned.kept, caps, target_size, seed);
  manifest.score_floor = floor;
  manifest.stats.input_total = pool.size();
  manifest.stats.dropped_by_floor = pool.size() - scored.size();
  manifest.stats.dropped_placeholder = cleaned.dropped;
  return manifest;
}

json stats_to_json(const DatasetManifest& m) {
  const auto& s = m.stats;
  return {{"score_floor", m.score_floor},
          {"target_size", m.target_size},
          {"input_total", s.input_total},
          {"dropped_by_floor", s.dropped_by_floor},
          {"dropped_placeholder", s.dropped_placeholder},
          {"dropped_by_caps", s.dropped_by_caps},
          {"dropped_duplicate", s.dropped_duplicate},
          {"kept", s.kept},
          {"shortfall", s.shortfall},
          {"by_source_prefix", s.by_source_prefix},
          {"by_question_type", s.by_question_type},
          {"by_template_id", s.by_template_id}};
}

std::filesystem::path stats_path_for(const std::filesystem::path& manifest_path) {
  std::filesystem::path p = manifest_path;
  p.replace_extension(".stats.json");
  return p;
}

void save_samples(const std::vector<TrainingSample>& samples, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(to_json(s));
  io::write_jsonl(path, rows);
}

std::vector<TrainingSample> load_samples(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<TrainingSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaViolation, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::SchemaViolation, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void export_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  save_samples(manifest.samples, path);
  io::write_json(stats_path_for(path), stats_to_json(manifest));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m;
  m.samples = load_samples(path);
  const json stats = io::read_json(stats_path_for(path));
  try {
    m.score_floor = stats.at("score_floor").get<double>();
    m.target_size = stats.at("target_size").get<std::size_t>();
    auto& s = m.stats;
    s.input_total = stats.at("input_total").get<std::size_t>();
    s.dropped_by_floor = stats.at("dropped_by_floor").get<std::size_t>();
    s.dropped_placeholder = stats.at("dropped_placeholder").get<std::size_t>();
    s.dropped_by_caps = stats.at("dropped_by_caps").get<std::size_t>();
    s.dropped_duplicate = stats.at("dropped_duplicate").get<std::size_t>();
    s.kept = stats.at("kept").get<std::size_t>();
    s.shortfall = stats.at("shortfall").get<bool>();
    s.by_source_prefix = stats.at("by_source_prefix").get<std::map<std::string, std::size_t>>();
    s.by_question_type = stats.at("by_question_type").get<std::map<std::string, std::size_t>>();
    s.by_template_id = stats.at("by_template_id").get<std::map<std::string, std::size_t>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, stats_path_for(path).string() + ": " + e.what());
  }
  if (m.samples.size() != m.stats.kept)
    fail(ErrorKind::SchemaViolation, path.string() + ": sample count disagrees with stats");
  return m;
}

}  // namespace measground
