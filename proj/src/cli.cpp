#include "measground/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "measground/benchmark.hpp"
#include "measground/bracketsup.hpp"
#include "measground/capture_model.hpp"
#include "measground/conditioning_probe.hpp"
#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/log.hpp"
#include "measground/meas_xyz.hpp"
#include "measground/text_metrics.hpp"

namespace measground::cli {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  fail(ErrorKind::ConfigInvalid, "config." + field + ": " + what);
}

template <typename T>
T get_field(const json& j, const std::string& field) {
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    config_error(field, e.what());
  }
}

std::string gain_label(double gain) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "e%g", gain);
  return buf;
}

struct Layout {
  fs::path out;
  fs::path captures;

  explicit Layout(const RunConfig& c)
      : out(c.output_root), captures(c.input_root.empty() ? c.output_root / "captures" : c.input_root) {}

  fs::path measxyz(const std::string& id) const { return out / "measxyz" / id; }
  fs::path proxies(const std::string& id) const { return out / "proxies" / id; }
  fs::path candidates(const std::string& id) const { return out / "candidates" / (id + ".jsonl"); }
  fs::path samples() const { return out / "samples.jsonl"; }
  fs::path filtered() const { return out / "filtered.jsonl"; }
  fs::path manifest() const { return out / "manifest.jsonl"; }
  fs::path run_json() const { return out / "run.json"; }
};

fs::path train_path(const RunConfig& c) {
  return c.train_manifest.empty() ? c.output_root / "train_manifest.jsonl" : c.train_manifest;
}

fs::path bench_path(const RunConfig& c) {
  return c.bench_manifest.empty() ? c.output_root / "bench_manifest.jsonl" : c.bench_manifest;
}

/// Capture bundle directories under `root`, sorted by name.
std::vector<fs::path> capture_dirs(const fs::path& root) {
  std::vector<fs::path> dirs;
  if (!fs::is_directory(root)) fail(ErrorKind::MissingFile, "capture root not found: " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "capture.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

/// Stems of files with `extension` in `dir`, sorted.
std::vector<fs::path> stems_in(const fs::path& dir, const std::string& extension) {
  std::vector<fs::path> stems;
  if (!fs::is_directory(dir)) fail(ErrorKind::MissingFile, "directory not found: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      auto stem = entry.path();
      stem.replace_extension();
      stems.push_back(stem);
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void record_stage(const RunConfig& config, const std::string& stage, json counts) {
  const fs::path path = Layout(config).run_json();
  json run = json::object();
  if (fs::exists(path)) {
    try {
      run = io::read_json(path);
    } catch (const Error&) {
      run = json::object();
    }
  }
  run["version"] = std::string(kVersion);
  run["config_hash"] = config_hash(config);
  run["config"] = config_to_json(config);
  counts["finished_at"] = timestamp();
  run["stages"][stage] = std::move(counts);
  io::write_json(path, run);
}

std::unique_ptr<AnnotatorClient> make_annotator(const RunConfig& c) {
  if (!c.mock_annotator.empty()) return std::make_unique<MockAnnotator>(io::read_jsonl(c.mock_annotator));
  if (!c.annotator_url.empty()) return std::make_unique<HttpAnnotator>(c.annotator_url);
  return nullptr;
}

std::unique_ptr<JudgeClient> make_judge(const RunConfig& c) {
  if (!c.mock_judge.empty()) return std::make_unique<MockJudge>(MockJudge::from_file(c.mock_judge));
  if (!c.judge_url.empty()) return std::make_unique<HttpJudge>(c.judge_url);
  return nullptr;
}

std::vector<RenderedRgb> load_proxies(const fs::path& dir) {
  std::vector<RenderedRgb> proxies;
  for (const auto& stem : stems_in(dir, ".ppm")) proxies.push_back(import_rendered(stem));
  std::sort(proxies.begin(), proxies.end(), [](const RenderedRgb& a, const RenderedRgb& b) {
    return a.params().exposure_gain < b.params().exposure_gain;
  });
  return proxies;
}

struct AnnotateCounts {
  std::size_t candidates = 0;
  std::size_t dropped = 0;
  int retries = 0;
};

AnnotateCounts annotate_capture(const RunConfig& c, const std::string& id, const std::vector<RenderedRgb>& proxies,
                                AnnotatorClient& client) {
  RetryPolicy policy;
  policy.max_retries = c.max_retries;
  const auto result = annotate_bracket(proxies, client, source_prefix_of(id), c.max_in_flight, policy);
  std::vector<json> rows;
  rows.reserve(result.candidates.size());
  for (const auto& cand : result.candidates) rows.push_back(to_json(cand));
  io::write_jsonl(Layout(c).candidates(id), rows);
  return {result.candidates.size(), result.dropped, result.retries};
}

// ---- stages ----

int cmd_synth(const RunConfig& c) {
  SyntheticSceneSpec base;
  if (!c.scene_spec.empty()) {
    base = scene_spec_from_json(io::read_json(c.scene_spec));
  } else {
    base.capture_id = "synth";
    base.background = 0.1;
    base.patches = {TextPatch{16, 24, 24, 8, 10.0}};
  }
  static constexpr double kIsos[] = {100, 200, 400, 800, 1600};
  static constexpr double kTimes[] = {1.0 / 250, 1.0 / 60, 1.0 / 15};
  static constexpr double kApertures[] = {2.8, 4.0, 5.6};
  const Layout layout(c);
  for (std::size_t i = 0; i < c.synth_count; ++i) {
    SyntheticSceneSpec spec = base;
    if (c.synth_count > 1) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", base.capture_id.c_str(), i);
      spec.capture_id = id;
      if (c.scene_spec.empty()) {
        spec.metadata.iso = kIsos[i % 5];
        spec.metadata.exposure_time = kTimes[i % 3];
        spec.metadata.aperture = kApertures[(i / 3) % 3];
        spec.metadata.device_id = "cam_" + std::to_string(i / 4);  // one device per session
        spec.metadata.scene_id = "scene_" + std::to_string(i / 2);
        spec.metadata.session_id = "session_" + std::to_string(i / 4);
      }
    }
    const auto synth = synth_capture(spec, c.seed + i);
    save_capture_bundle(synth.capture, layout.captures / spec.capture_id);
  }
  log::info("synth.done", {{"count", c.synth_count}, {"dir", layout.captures.string()}});
  record_stage(c, "synth", {{"captures", c.synth_count}});
  return 0;
}

int cmd_ingest(const RunConfig& c) {
  const Layout layout(c);
  json accepted = json::array();
  json rejected = json::array();
  for (const auto& dir : capture_dirs(layout.captures)) {
    try {
      const RawCapture cap = load_capture_bundle(dir);
      accepted.push_back({{"capture_id", cap.capture_id},
                          {"path", dir.string()},
                          {"raw_path", cap.raw_path},
                          {"width", cap.mosaic.width()},
                          {"height", cap.mosaic.height()},
                          {"cfa_pattern", std::string(to_string(cap.cfa_pattern))}});
    } catch (const Error& e) {
      if (e.is_io() && e.kind() != ErrorKind::MissingFile) throw;
      log::warn("ingest.rejected", {{"path", dir.string()}, {"error", e.what()}});
      rejected.push_back({{"path", dir.string()}, {"error", e.what()}});
    }
  }
  io::write_json(layout.out / "ingest.json", {{"accepted", accepted}, {"rejected", rejected}});
  record_stage(c, "ingest", {{"accepted", accepted.size()}, {"rejected", rejected.size()}});
  return rejected.empty() ? 0 : 1;
}

int cmd_measxyz(const RunConfig& c) {
  const Layout layout(c);
  std::size_t count = 0;
  std::size_t negatives = 0;
  for (const auto& dir : capture_dirs(layout.captures)) {
    const RawCapture cap = load_capture_bundle(dir);
    const MeasXyzImage z = meas_xyz_transform(cap);
    export_meas_xyz(z, layout.measxyz(cap.capture_id));
    negatives += z.negative_clamped;
    ++count;
  }
  record_stage(c, "measxyz", {{"images", count}, {"negative_clamped", negatives}});
  return 0;
}

int cmd_render(const RunConfig& c) {
  const Layout layout(c);
  std::size_t count = 0;
  for (const auto& stem : stems_in(layout.out / "measxyz", ".bin")) {
    const MeasXyzImage z = import_meas_xyz(stem);
    const RenderedRgb rgb = render_proxy(z, c.render);
    export_rendered(rgb, layout.out / "renders" / (z.capture_id + "_" + gain_label(c.render.exposure_gain)));
    ++count;
  }
  record_stage(c, "render", {{"images", count}, {"exposure_gain", c.render.exposure_gain}});
  return 0;
}

int cmd_bracket(const RunConfig& c) {
  const Layout layout(c);
  auto annotator = make_annotator(c);
  std::size_t captures = 0;
  std::size_t proxies = 0;
  AnnotateCounts total;
  for (const auto& stem : stems_in(layout.out / "measxyz", ".bin")) {
    const MeasXyzImage z = import_meas_xyz(stem);
    const auto bracket = make_bracket(z, c.exposures, c.render);
    for (const auto& rgb : bracket) {
      export_rendered(rgb, layout.proxies(z.capture_id) / gain_label(rgb.params().exposure_gain));
    }
    if (annotator) {
      const auto counts = annotate_capture(c, z.capture_id, bracket, *annotator);
      total.candidates += counts.candidates;
      total.dropped += counts.dropped;
      total.retries += counts.retries;
    }
    proxies += bracket.size();
    ++captures;
  }
  json counts = {{"captures", captures}, {"proxies", proxies}};
  if (annotator) {
    counts["candidates"] = total.candidates;
    counts["dropped"] = total.dropped;
    counts["retries"] = total.retries;
  }
  record_stage(c, "bracket", counts);
  return 0;
}

int cmd_annotate(const RunConfig& c) {
  const Layout layout(c);
  auto annotator = make_annotator(c);
  if (!annotator) fail(ErrorKind::ConfigInvalid, "annotate needs --mock-annotator or annotator_url");
  const fs::path root = layout.out / "proxies";
  if (!fs::is_directory(root)) fail(ErrorKind::MissingFile, "no proxies under " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  AnnotateCounts total;
  for (const auto& dir : dirs) {
    const auto proxies = load_proxies(dir);
    if (proxies.empty()) continue;
    const auto counts = annotate_capture(c, proxies.front().capture_id(), proxies, *annotator);
    total.candidates += counts.candidates;
    total.dropped += counts.dropped;
    total.retries += counts.retries;
  }
  record_stage(c, "annotate",
               {{"captures", dirs.size()},
                {"candidates", total.candidates},
                {"dropped", total.dropped},
                {"retries", total.retries}});
  return 0;
}

int cmd_aggregate(const RunConfig& c) {
  const Layout layout(c);
  std::vector<TrainingSample> samples;
  std::size_t candidates = 0;
  std::size_t captures = 0;
  for (const auto& stem : stems_in(layout.out / "candidates", ".jsonl")) {
    std::vector<CandidateRecord> pool;
    for (const auto& row : io::read_jsonl(io::with_suffix(stem, ".jsonl"))) pool.push_back(candidate_from_json(row));
    candidates += pool.size();
    const std::string id = stem.filename().string();
    if (pool.empty()) {
      log::warn("aggregate.empty_candidates", {{"capture_id", id}});
      continue;
    }
    const auto records = aggregate(pool);
    const RawCapture cap = load_capture_bundle(layout.captures / id);
    const auto built = build_samples(cap, layout.measxyz(id), records);
    samples.insert(samples.end(), built.begin(), built.end());
    ++captures;
  }
  save_samples(samples, layout.samples());
  record_stage(c, "aggregate", {{"captures", captures}, {"candidates", candidates}, {"samples", samples.size()}});
  return 0;
}

int cmd_filter(const RunConfig& c) {
  const Layout layout(c);
  const auto samples = load_samples(layout.samples());
  const auto floored = score_filter(samples, c.score_floor);
  const auto cleaned = remove_placeholders(floored, c.placeholder_patterns);
  save_samples(cleaned.kept, layout.filtered());
  const json stats = {{"input_total", samples.size()},
                      {"dropped_by_floor", samples.size() - floored.size()},
                      {"dropped_placeholder", cleaned.dropped},
                      {"kept", cleaned.kept.size()},
                      {"score_floor", c.score_floor}};
  io::write_json(stats_path_for(layout.filtered()), stats);
  record_stage(c, "filter", stats);
  return 0;
}

int cmd_balance(const RunConfig& c) {
  const Layout layout(c);
  const auto samples = load_samples(layout.filtered());
  DatasetManifest manifest = balance(samples, c.caps, c.target_size, c.seed);
  manifest.score_floor = c.score_floor;
  const fs::path filter_stats = stats_path_for(layout.filtered());
  if (fs::exists(filter_stats)) {
    const json fs_json = io::read_json(filter_stats);
    manifest.stats.input_total = fs_json.value("input_total", manifest.stats.input_total);
    manifest.stats.dropped_by_floor = fs_json.value("dropped_by_floor", std::size_t{0});
    manifest.stats.dropped_placeholder = fs_json.value("dropped_placeholder", std::size_t{0});
  }
  export_manifest(manifest, layout.manifest());
  if (manifest.stats.shortfall) {
    log::warn("balance.shortfall", {{"kept", manifest.stats.kept}, {"target", c.target_size}});
  }
  record_stage(c, "balance",
               {{"input", samples.size()},
                {"kept", manifest.stats.kept},
                {"dropped_by_caps", manifest.stats.dropped_by_caps},
                {"dropped_duplicate", manifest.stats.dropped_duplicate},
                {"shortfall", manifest.stats.shortfall}});
  return 0;
}

/// Evaluation view for a held-out capture: the proxy nearest unit gain if one exists, else a fresh one.
fs::path bench_view(const RunConfig& c, const std::string& id, const fs::path& meas_xyz_stem) {
  const Layout layout(c);
  const fs::path dir = layout.proxies(id);
  if (fs::is_directory(dir)) {
    const auto proxies = stems_in(dir, ".ppm");
    if (!proxies.empty()) {
      fs::path best;
      double best_distance = 0.0;
      for (const auto& stem : proxies) {
        const double d = std::abs(import_rendered(stem).params().exposure_gain - 1.0);
        if (best.empty() || d < best_distance) {
          best = stem;
          best_distance = d;
        }
      }
      return best;
    }
  }
  RenderParams params = c.render;
  params.exposure_gain = 1.0;
  const fs::path stem = layout.out / "bench_views" / (id + "_e1");
  export_rendered(render_proxy(import_meas_xyz(meas_xyz_stem), params), stem);
  return stem;
}

int cmd_split(const RunConfig& c) {
  const Layout layout(c);
  const DatasetManifest manifest = load_manifest(layout.manifest());
  const auto refs = refs_of(manifest.samples);
  const SplitResult split = holdout_split(refs, c.split_fraction, c.seed);
  for (const auto& w : split.warnings) log::warn("split.warning", {{"message", w}});
  const std::set<std::string> bench_ids(split.bench_ids.begin(), split.bench_ids.end());

  DatasetManifest train;
  train.score_floor = manifest.score_floor;
  train.target_size = manifest.target_size;
  train.stats = manifest.stats;
  std::vector<BenchmarkExample> bench;
  std::map<std::string, fs::path> views;
  for (const auto& s : manifest.samples) {
    if (!bench_ids.count(s.capture_id)) {
      train.samples.push_back(s);
      continue;
    }
    auto it = views.find(s.capture_id);
    if (it == views.end()) it = views.emplace(s.capture_id, bench_view(c, s.capture_id, s.meas_xyz_path)).first;
    BenchmarkExample e;
    e.capture_id = s.capture_id;
    e.meas_xyz_path = s.meas_xyz_path;
    e.rgb_proxy_path = it->second.string();
    e.raw_path = s.raw_path;
    e.question = s.record.question;
    e.reference_answer = s.record.answer;
    e.dimension = tag_capability(s.record.question, s.record.answer);
    e.metadata = s.metadata;
    bench.push_back(std::move(e));
  }
  recount(train);
  export_manifest(train, train_path(c));
  save_benchmark(bench, bench_path(c));
  io::write_json(layout.out / "split.json",
                 {{"train_ids", split.train_ids}, {"bench_ids", split.bench_ids}, {"warnings", split.warnings}});
  record_stage(c, "split",
               {{"train_captures", split.train_ids.size()},
                {"bench_captures", split.bench_ids.size()},
                {"train_samples", train.samples.size()},
                {"bench_examples", bench.size()}});
  return 0;
}

int cmd_verify_split(const RunConfig& c) {
  const DatasetManifest train = load_manifest(train_path(c));
  const auto bench = load_benchmark(bench_path(c));
  const DisjointnessReport report = verify_disjointness(train, bench);
  const json j = to_json(report);
  io::write_json(Layout(c).out / "disjointness.json", j);
  std::cout << j.dump(2) << "\n";
  record_stage(c, "verify-split", {{"verdict", std::string(to_string(report.verdict))}});
  return report.verdict == SplitVerdict::Fail ? 1 : 0;
}

int cmd_eval(const RunConfig& c) {
  if (c.predictions.empty()) fail(ErrorKind::ConfigInvalid, "eval needs --predictions");
  auto judge_client = make_judge(c);
  MockJudge fallback;
  JudgeClient& client = judge_client ? *judge_client : static_cast<JudgeClient&>(fallback);
  const auto bench = load_benchmark(bench_path(c));
  const auto predictions = load_predictions(c.predictions);
  const MetricReport report = evaluate_run(predictions, bench, client, c.max_in_flight);
  const Layout layout(c);
  io::write_json(layout.out / "report.json", to_json(report));
  const std::string table = render_table(report);
  io::write_text(layout.out / "report.txt", table);
  std::cout << table;
  record_stage(c, "eval", {{"examples", report.total}, {"missing_predictions", report.missing_predictions}});
  return 0;
}

int cmd_report(const RunConfig& c) {
  const Layout layout(c);
  const MetricReport report = report_from_json(io::read_json(layout.out / "report.json"));
  const std::string table = render_table(report);
  io::write_text(layout.out / "report.txt", table);
  std::cout << table;
  return 0;
}

int cmd_lost_signal(const RunConfig& c) {
  if (!c.gain_given) fail(ErrorKind::ConfigInvalid, "lost-signal needs an explicit --gain");
  const Layout layout(c);
  std::size_t count = 0;
  double clipped = 0.0;
  for (const auto& stem : stems_in(layout.out / "measxyz", ".bin")) {
    const MeasXyzImage z = import_meas_xyz(stem);
    const auto report = analyze_lost_signal(z, c.render, c.tau, c.bins);
    emit_report(report, layout.out / "lost_signal" / z.capture_id);
    clipped += report.clipped_fraction;
    ++count;
  }
  record_stage(c, "lost-signal",
               {{"images", count},
                {"exposure_gain", c.render.exposure_gain},
                {"mean_clipped_fraction", count ? clipped / static_cast<double>(count) : 0.0}});
  return 0;
}

int cmd_condition_check(const RunConfig& c) {
  ProbeOptions options;
  if (!c.probe_config.empty()) options = probe_options_from_json(io::read_json(c.probe_config));
  options.seed = c.seed;
  const ProbeStack stack = make_probe_stack(options);

  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<double> h0(options.hidden_dim);
  for (auto& v : h0) v = unit(rng);
  CameraMetadata meta{800.0, 1.0 / 30.0, 2.8, "probe", std::nullopt, std::nullopt};
  const MetaVector m = normalize_metadata(meta);

  const double err = grad_check(stack, h0, m, 1e-5);
  ProbeStack zeroed = stack;
  for (auto& p : zeroed.projections) {
    std::fill(p.weight.begin(), p.weight.end(), 0.0);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
  }
  const bool identity = forward(zeroed, h0, m, true) == forward(zeroed, h0, m, false);
  const bool pass = err < kGradCheckThreshold && identity;

  std::printf("max_relative_error=%.3e threshold=%.0e zero_projection_identity=%s %s\n", err, kGradCheckThreshold,
              identity ? "true" : "false", pass ? "PASS" : "FAIL");
  io::write_json(Layout(c).out / "condition_check.json",
                 {{"max_relative_error", err},
                  {"threshold", kGradCheckThreshold},
                  {"zero_projection_identity", identity},
                  {"pass", pass}});
  record_stage(c, "condition-check", {{"max_relative_error", err}, {"pass", pass}});
  return pass ? 0 : 1;
}

using Handler = int (*)(const RunConfig&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"ingest", cmd_ingest},       {"measxyz", cmd_measxyz},     {"render", cmd_render},
      {"bracket", cmd_bracket},     {"lost-signal", cmd_lost_signal}, {"annotate", cmd_annotate},
      {"aggregate", cmd_aggregate}, {"filter", cmd_filter},       {"balance", cmd_balance},
      {"split", cmd_split},         {"verify-split", cmd_verify_split}, {"eval", cmd_eval},
      {"condition-check", cmd_condition_check}, {"synth", cmd_synth}, {"report", cmd_report}};
  return table;
}

std::vector<double> parse_exposures(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigInvalid, "--exposures: '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) config_error("", "must be an object");
  static const std::set<std::string> known = {
      "input_root",   "output_root",   "render",        "gain",          "exposures",      "score_floor",
      "placeholder_patterns", "caps",  "target_size",   "split_fraction", "seed",         "annotator_url",
      "judge_url",    "mock_annotator", "mock_judge",   "predictions",   "train_manifest", "bench_manifest",
      "tau",          "bins",          "probe_config",  "scene_spec",    "synth_count",    "max_in_flight",
      "max_retries"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) config_error(key, "unknown key");
  }
  RunConfig c;
  auto path_field = [&](const char* key, fs::path& target) {
    if (j.contains(key)) target = get_field<std::string>(j, key);
  };
  path_field("input_root", c.input_root);
  path_field("output_root", c.output_root);
  path_field("mock_annotator", c.mock_annotator);
  path_field("mock_judge", c.mock_judge);
  path_field("predictions", c.predictions);
  path_field("train_manifest", c.train_manifest);
  path_field("bench_manifest", c.bench_manifest);
  path_field("probe_config", c.probe_config);
  path_field("scene_spec", c.scene_spec);
  if (j.contains("render")) {
    try {
      c.render = params_from_json(j.at("render"));
    } catch (const Error& e) {
      config_error("render", e.what());
    }
    c.gain_given = j.at("render").contains("exposure_gain");
  }
  if (j.contains("gain")) {
    c.render.exposure_gain = get_field<double>(j, "gain");
    c.gain_given = true;
  }
  if (j.contains("exposures")) c.exposures = get_field<std::vector<double>>(j, "exposures");
  if (j.contains("score_floor")) c.score_floor = get_field<double>(j, "score_floor");
  if (j.contains("placeholder_patterns"))
    c.placeholder_patterns = get_field<std::vector<std::string>>(j, "placeholder_patterns");
  if (j.contains("caps")) {
    const json& caps = j.at("caps");
    if (!caps.is_object()) config_error("caps", "must be an object");
    for (const auto& [key, value] : caps.items()) {
      std::size_t* target = key == "per_source"     ? &c.caps.per_source
                            : key == "per_type"     ? &c.caps.per_type
                            : key == "per_template" ? &c.caps.per_template
                                                    : nullptr;
      if (!target) config_error("caps." + key, "unknown key");
      if (!value.is_number_unsigned()) config_error("caps." + key, "must be a non-negative integer");
      *target = value.get<std::size_t>();
    }
  }
  if (j.contains("target_size")) {
    if (!j.at("target_size").is_number_unsigned()) config_error("target_size", "must be a non-negative integer");
    c.target_size = j.at("target_size").get<std::size_t>();
  }
  if (j.contains("split_fraction")) c.split_fraction = get_field<double>(j, "split_fraction");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) config_error("seed", "must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("annotator_url")) c.annotator_url = get_field<std::string>(j, "annotator_url");
  if (j.contains("judge_url")) c.judge_url = get_field<std::string>(j, "judge_url");
  if (j.contains("tau")) c.tau = get_field<double>(j, "tau");
  if (j.contains("bins")) c.bins = get_field<int>(j, "bins");
  if (j.contains("synth_count")) c.synth_count = get_field<std::size_t>(j, "synth_count");
  if (j.contains("max_in_flight")) c.max_in_flight = get_field<std::size_t>(j, "max_in_flight");
  if (j.contains("max_retries")) c.max_retries = get_field<int>(j, "max_retries");
  validate(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  return {{"input_root", c.input_root.string()},
          {"output_root", c.output_root.string()},
          {"render", params_to_json(c.render)},
          {"exposures", c.exposures},
          {"score_floor", c.score_floor},
          {"placeholder_patterns", c.placeholder_patterns},
          {"caps",
           {{"per_source", c.caps.per_source}, {"per_type", c.caps.per_type}, {"per_template", c.caps.per_template}}},
          {"target_size", c.target_size},
          {"split_fraction", c.split_fraction},
          {"seed", c.seed},
          {"annotator_url", c.annotator_url},
          {"judge_url", c.judge_url},
          {"mock_annotator", c.mock_annotator.string()},
          {"mock_judge", c.mock_judge.string()},
          {"predictions", c.predictions.string()},
          {"train_manifest", c.train_manifest.string()},
          {"bench_manifest", c.bench_manifest.string()},
          {"tau", c.tau},
          {"bins", c.bins},
          {"probe_config", c.probe_config.string()},
          {"scene_spec", c.scene_spec.string()},
          {"synth_count", c.synth_count},
          {"max_in_flight", c.max_in_flight},
          {"max_retries", c.max_retries}};
}

void validate(const RunConfig& c) {
  try {
    validate(c.render);
  } catch (const Error& e) {
    config_error("render", e.what());
  }
  if (c.exposures.empty()) config_error("exposures", "must not be empty");
  for (double e : c.exposures) {
    if (!std::isfinite(e) || e <= 0.0) config_error("exposures", "gains must be finite and > 0");
  }
  if (!(c.score_floor >= 0.0 && c.score_floor <= 1.0)) config_error("score_floor", "must be in [0, 1]");
  if (!(c.split_fraction > 0.0 && c.split_fraction < 1.0)) config_error("split_fraction", "must be in (0, 1)");
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) config_error("tau", "must be finite and > 0");
  if (c.bins < 2) config_error("bins", "must be >= 2");
  if (c.target_size < 1) config_error("target_size", "must be >= 1");
  if (c.caps.per_source < 1 || c.caps.per_type < 1 || c.caps.per_template < 1)
    config_error("caps", "every cap must be >= 1");
  if (c.synth_count < 1) config_error("synth_count", "must be >= 1");
  if (c.max_in_flight < 1) config_error("max_in_flight", "must be >= 1");
  if (c.max_retries < 0) config_error("max_retries", "must be >= 0");
}

std::string config_hash(const RunConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, handler] : handlers()) v.push_back(name);
    return v;
  }();
  return names;
}

std::string usage() {
  std::string text = "usage: measground <subcommand> [--config PATH] [--out DIR] [options]\nsubcommands:";
  for (const auto& name : subcommands()) text += " " + name;
  text += "\nrun 'measground <subcommand> --help' for options\n";
  return text;
}

int run_subcommand(const std::string& name, const RunConfig& config) {
  const auto it = handlers().find(name);
  if (it == handlers().end()) {
    std::cerr << "unknown subcommand '" << name << "'\n" << usage();
    return 1;
  }
  try {
    return it->second(config);
  } catch (const Error& e) {
    log::error("stage.failed", {{"stage", name}, {"kind", std::string(to_string(e.kind()))}, {"error", e.what()}});
    return e.is_io() ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    log::error("stage.failed", {{"stage", name}, {"kind", "IoFailure"}, {"error", e.what()}});
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  if (args.empty() || args.front() == "--help" || args.front() == "-h") {
    std::cout << usage();
    return args.empty() ? 1 : 0;
  }
  const std::string name = args.front();
  if (!handlers().count(name)) {
    std::cerr << "unknown subcommand '" << name << "'\n" << usage();
    return 1;
  }

  CLI::App app("measground " + name, "measground " + name);
  std::string config_path, out, in, exposures, mock_annotator, mock_judge, predictions, probe, spec, train, bench;
  std::string annotator_url, judge_url;
  std::uint64_t seed = 0;
  double gain = 1.0, tau = 0.0, floor = 0.0, fraction = 0.0;
  int bins = 0;
  std::size_t target = 0, count = 0;
  auto* o_config = app.add_option("--config", config_path, "JSON run configuration");
  auto* o_out = app.add_option("--out", out, "output root");
  auto* o_in = app.add_option("--in", in, "capture bundle root");
  auto* o_seed = app.add_option("--seed", seed, "RNG seed");
  auto* o_gain = app.add_option("--gain", gain, "exposure gain");
  auto* o_exposures = app.add_option("--exposures", exposures, "comma separated bracket gains");
  auto* o_mock_annotator = app.add_option("--mock-annotator", mock_annotator, "annotator transcript JSONL");
  auto* o_mock_judge = app.add_option("--mock-judge", mock_judge, "judge transcript JSONL");
  auto* o_annotator_url = app.add_option("--annotator-url", annotator_url, "annotator endpoint");
  auto* o_judge_url = app.add_option("--judge-url", judge_url, "judge endpoint");
  auto* o_tau = app.add_option("--tau", tau, "lost-signal threshold");
  auto* o_bins = app.add_option("--bins", bins, "histogram bins");
  auto* o_floor = app.add_option("--floor", floor, "score floor");
  auto* o_target = app.add_option("--target", target, "target dataset size");
  auto* o_fraction = app.add_option("--fraction", fraction, "benchmark fraction");
  auto* o_predictions = app.add_option("--predictions", predictions, "predictions JSONL");
  auto* o_probe = app.add_option("--probe", probe, "probe options JSON");
  auto* o_spec = app.add_option("--spec", spec, "synthetic scene spec JSON");
  auto* o_count = app.add_option("--count", count, "synthetic captures to generate");
  auto* o_train = app.add_option("--train", train, "train manifest path");
  auto* o_bench = app.add_option("--bench", bench, "benchmark manifest path");

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  RunConfig config;
  try {
    if (o_config->count()) config = config_from_json(io::read_json(config_path));
    if (o_out->count()) config.output_root = out;
    if (o_in->count()) config.input_root = in;
    if (o_seed->count()) config.seed = seed;
    if (o_gain->count()) {
      config.render.exposure_gain = gain;
      config.gain_given = true;
    }
    if (o_exposures->count()) config.exposures = parse_exposures(exposures);
    if (o_mock_annotator->count()) config.mock_annotator = mock_annotator;
    if (o_mock_judge->count()) config.mock_judge = mock_judge;
    if (o_annotator_url->count()) config.annotator_url = annotator_url;
    if (o_judge_url->count()) config.judge_url = judge_url;
    if (o_tau->count()) config.tau = tau;
    if (o_bins->count()) config.bins = bins;
    if (o_floor->count()) config.score_floor = floor;
    if (o_target->count()) config.target_size = target;
    if (o_fraction->count()) config.split_fraction = fraction;
    if (o_predictions->count()) config.predictions = predictions;
    if (o_probe->count()) config.probe_config = probe;
    if (o_spec->count()) config.scene_spec = spec;
    if (o_count->count()) config.synth_count = count;
    if (o_train->count()) config.train_manifest = train;
    if (o_bench->count()) config.bench_manifest = bench;
    validate(config);
  } catch (const Error& e) {
    log::error("config.invalid", {{"kind", std::string(to_string(e.kind()))}, {"error", e.what()}});
    return e.is_io() ? 2 : 1;
  }
  return run_subcommand(name, config);
}

}  // namespace measground::cli
