#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "measground/dataset_build.hpp"
#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/text_util.hpp"
#include "test_support.hpp"

using namespace measground;
using measground::testing::TempDir;

namespace {

TrainingSample sample(std::string id, std::string q, std::string a, double score, std::string src = "raise",
                      std::string type = "color", std::string tmpl = "t1") {
  TrainingSample s;
  s.capture_id = std::move(id);
  s.meas_xyz_path = "out/measxyz/" + s.capture_id;
  s.raw_path = "/raw/" + s.capture_id;
  s.record = {std::move(q), std::move(a), score, std::move(type), std::move(tmpl), std::move(src), {1.0}};
  s.metadata.device_id = "cam";
  return s;
}

std::vector<TrainingSample> random_pool(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 5);
  static const char* sources[] = {"raise", "aod", "pascalraw"};
  static const char* types[] = {"color", "count", "text", "yesno"};
  std::vector<TrainingSample> pool;
  for (std::size_t i = 0; i < n; ++i) {
    pool.push_back(sample("cap_" + std::to_string(i % 97), "Question " + std::to_string(i % 331) + "?",
                          pick(rng) == 0 ? "I cannot tell" : "answer " + std::to_string(i),
                          std::round(score(rng) * 20.0) / 20.0, sources[pick(rng) % 3], types[pick(rng) % 4],
                          "tmpl_" + std::to_string(pick(rng))));
  }
  return pool;
}

}  // namespace

TEST(ScoreFilter, Examples) {
  const std::vector<TrainingSample> pool = {sample("a", "q1", "x", 0.3), sample("b", "q2", "y", 0.5),
                                            sample("c", "q3", "z", 0.9)};
  EXPECT_EQ(score_filter(pool, 0.0), pool);
  const auto kept = score_filter(pool, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].capture_id, "b");
  EXPECT_EQ(kept[1].capture_id, "c");
  const std::vector<TrainingSample> top = {sample("a", "q", "x", 1.0), sample("b", "q", "x", 0.999)};
  EXPECT_EQ(score_filter(top, 1.0).size(), 1u);
  EXPECT_THROW(score_filter(pool, 1.0 + 1e-9), Error);
  EXPECT_THROW(score_filter(pool, -0.1), Error);
}

TEST(Placeholders, PatternHits) {
  const auto r = remove_placeholders({sample("a", "q", "I cannot see the image", 0.9), sample("b", "q", "BLACK", 0.9)});
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].record.answer, "BLACK");
  EXPECT_EQ(r.dropped, 1u);
}

TEST(Placeholders, MixedBatchOfTen) {
  std::vector<TrainingSample> batch;
  const char* answers[] = {"red",   "As an AI, I have no eyes", "two", "Unable to determine", "exit",
                           "blue",  "No answer",                "yes", "a dog",               "left"};
  for (int i = 0; i < 10; ++i) batch.push_back(sample("c" + std::to_string(i), "q", answers[i], 0.8));
  const auto r = remove_placeholders(batch);
  EXPECT_EQ(r.kept.size(), 7u);
  EXPECT_EQ(r.dropped, 3u);
}

TEST(Placeholders, EmptyPatternMatchesOnlyEmptyAnswers) {
  auto blank = sample("a", "q", "x", 0.9);
  blank.record.answer = "";
  const auto r = remove_placeholders({blank, sample("b", "q", "fine", 0.9)}, {""});
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.kept.size(), 1u);
  EXPECT_THROW(remove_placeholders({}, {}), Error);
}

TEST(Balance, TemplateCapTwoOfFive) {
  std::vector<TrainingSample> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(sample("c", "question " + std::to_string(i), "a", 0.5 + 0.1 * i));
  BalanceCaps caps;
  caps.per_template = 2;
  const DatasetManifest m = balance(pool, caps, 5, 1);
  ASSERT_EQ(m.samples.size(), 2u);
  EXPECT_TRUE(m.stats.shortfall);
  EXPECT_EQ(m.stats.dropped_by_caps, 3u);
  // Greedy in score order keeps the two best.
  EXPECT_NEAR(m.samples[0].record.score, 0.9, 1e-12);
  EXPECT_NEAR(m.samples[1].record.score, 0.8, 1e-12);
}

TEST(Balance, LooseCapsAreIdentityUpToOrder) {
  std::mt19937_64 rng(2);
  auto pool = random_pool(rng, 40);
  // Make keys unique so dedupe cannot drop anything.
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].capture_id = "u" + std::to_string(i);
  const DatasetManifest m = balance(pool, BalanceCaps{}, 1000, 3);
  ASSERT_EQ(m.samples.size(), pool.size());
  auto key = [](const TrainingSample& s) { return to_json(s).dump(); };
  std::multiset<std::string> a, b;
  for (const auto& s : pool) a.insert(key(s));
  for (const auto& s : m.samples) b.insert(key(s));
  EXPECT_EQ(a, b);
  EXPECT_TRUE(m.stats.shortfall);
}

TEST(Balance, DeterministicAndOrderFree) {
  std::mt19937_64 rng(4);
  const auto pool = random_pool(rng, 300);
  BalanceCaps caps{50, 40, 30};
  const DatasetManifest a = balance(pool, caps, 100, 77);
  const DatasetManifest b = balance(pool, caps, 100, 77);
  EXPECT_EQ(a, b);
  auto shuffled = pool;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(balance(shuffled, caps, 100, 77), a);
}

TEST(Balance, InvariantsOnRandomPools) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pool = random_pool(rng, 200 + 17 * trial);
    BalanceCaps caps{static_cast<std::size_t>(10 + trial), static_cast<std::size_t>(8 + trial), 12};
    const std::size_t target = 20 + 3 * trial;
    const DatasetManifest m = build_dataset(pool, 0.4, default_placeholder_patterns(), caps, target, trial);
    EXPECT_LE(m.samples.size(), target);
    std::map<std::string, std::size_t> src, type, tmpl;
    std::set<std::string> keys;
    for (const auto& s : m.samples) {
      EXPECT_GE(s.record.score, 0.4);
      EXPECT_EQ(text::normalize_answer(s.record.answer).find("i cannot"), std::string::npos);
      EXPECT_TRUE(keys.insert(s.capture_id + "|" + text::normalize_question(s.record.question)).second);
      EXPECT_LE(++src[s.record.source_prefix], caps.per_source);
      EXPECT_LE(++type[s.record.question_type], caps.per_type);
      EXPECT_LE(++tmpl[s.record.template_id], caps.per_template);
    }
    const auto& st = m.stats;
    EXPECT_EQ(st.input_total, pool.size());
    const std::size_t accounted =
        st.dropped_by_floor + st.dropped_placeholder + st.dropped_by_caps + st.dropped_duplicate + st.kept;
    // Balancing stops at the target; only a shortfall run sees the whole pool.
    if (st.shortfall) {
      EXPECT_EQ(accounted, st.input_total);
    } else {
      EXPECT_LE(accounted, st.input_total);
    }
    EXPECT_EQ(st.kept, m.samples.size());
    EXPECT_EQ(st.shortfall, m.samples.size() < target);
  }
}

TEST(Balance, FiltersNeverMutate) {
  std::mt19937_64 rng(6);
  const auto pool = random_pool(rng, 100);
  const auto kept = score_filter(pool, 0.5);
  for (const auto& s : kept) EXPECT_NE(std::find(pool.begin(), pool.end(), s), pool.end());
  const auto cleaned = remove_placeholders(kept);
  for (const auto& s : cleaned.kept) EXPECT_NE(std::find(kept.begin(), kept.end(), s), kept.end());
}

TEST(Balance, RejectsZeroCapsOrTarget) {
  EXPECT_THROW(balance({}, BalanceCaps{0, 1, 1}, 5, 0), Error);
  EXPECT_THROW(balance({}, BalanceCaps{}, 0, 0), Error);
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(7);
  const DatasetManifest m = build_dataset(random_pool(rng, 120), 0.5, default_placeholder_patterns(),
                                          BalanceCaps{30, 30, 30}, 40, 9);
  export_manifest(m, dir / "manifest.jsonl");
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.stats.json"));
  EXPECT_EQ(load_manifest(dir / "manifest.jsonl"), m);
}

TEST(Manifest, EmptyRoundTrip) {
  TempDir dir;
  DatasetManifest m;
  m.target_size = 10;
  m.stats.shortfall = true;
  export_manifest(m, dir / "empty.jsonl");
  EXPECT_EQ(load_manifest(dir / "empty.jsonl"), m);
}

TEST(Manifest, CorruptLineNamesLineNumber) {
  TempDir dir;
  DatasetManifest m;
  m.target_size = 3;
  m.samples = {sample("a", "q1", "x", 0.9), sample("b", "q2", "y", 0.8), sample("c", "q3", "z", 0.7)};
  recount(m);
  export_manifest(m, dir / "m.jsonl");
  std::string text = io::read_text(dir / "m.jsonl");
  const auto second = text.find('\n') + 1;
  text.replace(second, 1, "#");
  io::write_text(dir / "m.jsonl", text);
  try {
    load_manifest(dir / "m.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}
