#include "measground/benchmark.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/text_util.hpp"

namespace measground {

using nlohmann::json;

namespace {

struct DimensionInfo {
  CapabilityDimension dim;
  std::string_view abbrev;
  std::string_view name;
};

constexpr std::array<DimensionInfo, 14> kDimensionTable = {{
    {CapabilityDimension::CAG, "CAG", "Chromatic Attribute Grounding"},
    {CapabilityDimension::NG, "NG", "Numerosity Grounding"},
    {CapabilityDimension::DSG, "DSG", "Descriptive Scene Grounding"},
    {CapabilityDimension::HER, "HER", "HDR Evidence Recovery"},
    {CapabilityDimension::LER, "LER", "Low-Illumination Evidence Recovery"},
    {CapabilityDimension::STR, "STR", "Scene Text Recognition"},
    {CapabilityDimension::GVG, "GVG", "General Visual Grounding"},
    {CapabilityDimension::CVR, "CVR", "Compositional Visual Reasoning"},
    {CapabilityDimension::SRU, "SRU", "Spatial Relation Understanding"},
    {CapabilityDimension::MSQ, "MSQ", "Manner and State Queries"},
    {CapabilityDimension::EAQ, "EAQ", "Entity and Attribute Queries"},
    {CapabilityDimension::DS, "DS", "Discriminative Selection"},
    {CapabilityDimension::AEI, "AEI", "Agent and Entity Identification"},
    {CapabilityDimension::BVV, "BVV", "Binary Visual Verification"},
}};

}  // namespace

std::string_view to_string(CapabilityDimension d) {
  for (const auto& info : kDimensionTable)
    if (info.dim == d) return info.abbrev;
  return "GVG";
}

std::string_view display_name(CapabilityDimension d) {
  for (const auto& info : kDimensionTable)
    if (info.dim == d) return info.name;
  return "General Visual Grounding";
}

std::optional<CapabilityDimension> parse_dimension(std::string_view abbrev) {
  for (const auto& info : kDimensionTable)
    if (info.abbrev == abbrev) return info.dim;
  return std::nullopt;
}

json to_json(const BenchmarkExample& e) {
  return {{"capture_id", e.capture_id},
          {"meas_xyz_path", e.meas_xyz_path},
          {"rgb_proxy_path", e.rgb_proxy_path},
          {"raw_path", e.raw_path},
          {"question", e.question},
          {"reference_answer", e.reference_answer},
          {"dimension", std::string(to_string(e.dimension))},
          {"metadata", metadata_to_json(e.metadata)}};
}

BenchmarkExample example_from_json(const json& j) {
  BenchmarkExample e;
  try {
    e.capture_id = j.at("capture_id").get<std::string>();
    e.meas_xyz_path = j.at("meas_xyz_path").get<std::string>();
    e.rgb_proxy_path = j.at("rgb_proxy_path").get<std::string>();
    e.raw_path = j.at("raw_path").get<std::string>();
    e.question = j.at("question").get<std::string>();
    e.reference_answer = j.at("reference_answer").get<std::string>();
    const auto dim = parse_dimension(j.at("dimension").get<std::string>());
    if (!dim) fail(ErrorKind::SchemaViolation, "unknown capability dimension " + j.at("dimension").dump());
    e.dimension = *dim;
    e.metadata = metadata_from_json(j.at("metadata"));
  } catch (const json::exception& ex) {
    fail(ErrorKind::SchemaViolation, std::string("benchmark example: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.kind() == ErrorKind::MalformedSidecar) fail(ErrorKind::SchemaViolation, ex.what());
    throw;
  }
  if (text::is_blank(e.question)) fail(ErrorKind::SchemaViolation, "benchmark example with empty question");
  return e;
}

void save_benchmark(const std::vector<BenchmarkExample>& examples, const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& e : examples) rows.push_back(to_json(e));
  io::write_jsonl(path, rows);
}

std::vector<BenchmarkExample> load_benchmark(const std::filesystem::path& path) {
  std::vector<BenchmarkExample> out;
  std::size_t line = 0;
  for (const auto& row : io::read_jsonl(path)) {
    ++line;
    try {
      out.push_back(example_from_json(row));
    } catch (const Error& e) {
      fail(ErrorKind::SchemaViolation, path.string() + " record " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

CaptureRef ref_of(const RawCapture& c) {
  return {c.capture_id, c.raw_path, c.metadata.device_id, c.metadata.scene_id, c.metadata.session_id};
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

SplitResult holdout_split(const std::vector<CaptureRef>& captures, double bench_fraction, std::uint64_t seed) {
  if (!(bench_fraction > 0.0 && bench_fraction < 1.0))
    fail(ErrorKind::InvalidArgument, "bench_fraction must lie in (0, 1)");
  if (captures.empty()) fail(ErrorKind::DegenerateSplit, "no captures to split");

  const std::size_t n = captures.size();
  DisjointSets sets(n);
  std::map<std::string, std::size_t> first_by_key;
  std::size_t ungrouped = 0;
  auto link = [&](const std::string& key, std::size_t i) {
    auto [it, inserted] = first_by_key.emplace(key, i);
    if (!inserted) sets.unite(it->second, i);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = captures[i];
    link("id\x1f" + c.capture_id, i);
    link("raw\x1f" + c.raw_path, i);
    if (c.scene_id) link("scene\x1f" + *c.scene_id, i);
    if (c.session_id) link("session\x1f" + *c.session_id, i);
    if (!c.scene_id && !c.session_id) ++ungrouped;
  }

  SplitResult result;
  if (ungrouped > 0)
    result.warnings.push_back(std::to_string(ungrouped) +
                              " capture(s) carry no scene or session id; they are split at capture level");

  std::map<std::size_t, std::set<std::string>> components;
  for (std::size_t i = 0; i < n; ++i) components[sets.find(i)].insert(captures[i].capture_id);
  std::vector<std::vector<std::string>> groups;
  for (auto& [root, ids] : components) groups.emplace_back(ids.begin(), ids.end());
  std::sort(groups.begin(), groups.end());

  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  const double train_share = (1.0 - bench_fraction) * static_cast<double>(total);
  for (const auto& g : groups) {
    if (static_cast<double>(g.size()) > train_share)
      fail(ErrorKind::DegenerateSplit, "group containing '" + g.front() + "' holds " + std::to_string(g.size()) +
                                           " of " + std::to_string(total) + " captures");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  const auto target = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(bench_fraction * static_cast<double>(total))));
  std::size_t bench_count = 0;
  for (const auto& g : groups) {
    auto& side = bench_count + g.size() <= target ? result.bench_ids : result.train_ids;
    if (&side == &result.bench_ids) bench_count += g.size();
    side.insert(side.end(), g.begin(), g.end());
  }
  if (result.bench_ids.empty() || result.train_ids.empty())
    fail(ErrorKind::DegenerateSplit, "no grouping of the captures fits a " + std::to_string(target) +
                                         "-capture benchmark with a non-empty training side");
  std::sort(result.train_ids.begin(), result.train_ids.end());
  std::sort(result.bench_ids.begin(), result.bench_ids.end());
  return result;
}

std::string_view to_string(SplitVerdict v) {
  switch (v) {
    case SplitVerdict::Pass: return "PASS";
    case SplitVerdict::Warn: return "WARN";
    case SplitVerdict::Fail: return "FAIL";
  }
  return "FAIL";
}

std::vector<CaptureRef> refs_of(const std::vector<TrainingSample>& samples) {
  std::vector<CaptureRef> out;
  for (const auto& s : samples)
    out.push_back({s.capture_id, s.raw_path, s.metadata.device_id, s.metadata.scene_id, s.metadata.session_id});
  return out;
}

std::vector<CaptureRef> refs_of(const std::vector<BenchmarkExample>& examples) {
  std::vector<CaptureRef> out;
  for (const auto& e : examples)
    out.push_back({e.capture_id, e.raw_path, e.metadata.device_id, e.metadata.scene_id, e.metadata.session_id});
  return out;
}

namespace {

template <typename Proj>
std::set<std::string> intersect(const std::vector<CaptureRef>& a, const std::vector<CaptureRef>& b, Proj proj) {
  std::set<std::string> left, shared;
  for (const auto& r : a)
    if (auto k = proj(r)) left.insert(*k);
  for (const auto& r : b)
    if (auto k = proj(r); k && left.count(*k)) shared.insert(*k);
  return shared;
}

}  // namespace

DisjointnessReport verify_disjointness(const std::vector<CaptureRef>& train, const std::vector<CaptureRef>& bench) {
  DisjointnessReport r;
  r.capture_ids = intersect(train, bench, [](const CaptureRef& c) { return std::optional(c.capture_id); });
  r.raw_paths = intersect(train, bench, [](const CaptureRef& c) { return std::optional(c.raw_path); });
  r.scene_ids = intersect(train, bench, [](const CaptureRef& c) { return c.scene_id; });
  r.session_ids = intersect(train, bench, [](const CaptureRef& c) { return c.session_id; });
  r.device_ids = intersect(train, bench, [](const CaptureRef& c) {
    return c.device_id.empty() ? std::nullopt : std::optional(c.device_id);
  });
  if (!r.capture_ids.empty() || !r.raw_paths.empty() || !r.scene_ids.empty() || !r.session_ids.empty()) {
    r.verdict = SplitVerdict::Fail;
  } else if (!r.device_ids.empty()) {
    r.verdict = SplitVerdict::Warn;
  }
  return r;
}

DisjointnessReport verify_disjointness(const DatasetManifest& train, const std::vector<BenchmarkExample>& bench) {
  return verify_disjointness(refs_of(train.samples), refs_of(bench));
}

json to_json(const DisjointnessReport& r) {
  return {{"verdict", std::string(to_string(r.verdict))},
          {"capture_id", r.capture_ids},
          {"raw_path", r.raw_paths},
          {"scene_id", r.scene_ids},
          {"session_id", r.session_ids},
          {"device_id", r.device_ids}};
}

namespace {

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(u < 0x80 ? std::tolower(u) : u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool has_word(const std::vector<std::string>& ws, std::initializer_list<std::string_view> vocab) {
  return std::any_of(ws.begin(), ws.end(), [&](const std::string& w) {
    return std::find(vocab.begin(), vocab.end(), w) != vocab.end();
  });
}

bool has_phrase(const std::vector<std::string>& ws, std::initializer_list<std::string_view> phrases) {
  std::string joined = " ";
  for (const auto& w : ws) joined += w + " ";
  return std::any_of(phrases.begin(), phrases.end(), [&](std::string_view p) {
    return joined.find(" " + std::string(p) + " ") != std::string::npos;
  });
}

}  // namespace

CapabilityDimension tag_capability(std::string_view question, std::string_view answer,
                                   std::optional<CapabilityDimension> override_dim) {
  if (override_dim) return *override_dim;
  const auto q = words(question);
  const auto a = words(answer);

  if (has_phrase(q, {"how many", "number of"}) || has_word(q, {"count"})) return CapabilityDimension::NG;
  if (has_word(q, {"read", "written", "writing", "word", "words", "text", "say", "says", "spell", "spelled",
                   "letter", "letters", "title", "inscription"}))
    return CapabilityDimension::STR;
  static const std::initializer_list<std::string_view> kColors = {
      "color", "colour", "colors", "colours", "colored", "coloured", "red",    "orange", "yellow", "green",
      "blue",  "purple", "pink",   "brown",   "black",   "white",    "gray",   "grey",   "violet", "cyan",
      "magenta", "beige", "gold",  "silver",  "hue"};
  if (has_word(q, kColors) || (a.size() == 1 && has_word(a, kColors))) return CapabilityDimension::CAG;
  if (!a.empty() && (a.front() == "yes" || a.front() == "no")) return CapabilityDimension::BVV;
  if (has_phrase(q, {"which of", "which one", "choose", "select"}) || has_word(q, {"or", "options"}))
    return CapabilityDimension::DS;
  if (has_phrase(q, {"left of", "right of", "to the left", "to the right", "in front of", "on top of", "next to",
                     "where is", "where are"}) ||
      has_word(q, {"above", "below", "behind", "beside", "between", "under", "underneath", "near"}))
    return CapabilityDimension::SRU;
  return CapabilityDimension::GVG;
}

}  // namespace measground
