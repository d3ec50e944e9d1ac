#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "measground/benchmark.hpp"
#include "measground/error.hpp"
#include "test_support.hpp"

using namespace measground;
using measground::testing::TempDir;

namespace {

CaptureRef ref(std::string id, std::optional<std::string> scene = std::nullopt,
               std::optional<std::string> session = std::nullopt, std::string device = "cam") {
  return {id, "/raw/" + id + ".dng", std::move(device), std::move(scene), std::move(session)};
}

std::vector<std::string> all_ids(const SplitResult& r) {
  std::vector<std::string> ids = r.train_ids;
  ids.insert(ids.end(), r.bench_ids.begin(), r.bench_ids.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

TEST(HoldoutSplit, TenCapturesFifthHeldOut) {
  std::vector<CaptureRef> caps;
  for (int i = 0; i < 10; ++i) caps.push_back(ref("c" + std::to_string(i), "scene" + std::to_string(i)));
  const SplitResult r = holdout_split(caps, 0.2, 42);
  EXPECT_EQ(r.bench_ids.size(), 2u);
  EXPECT_EQ(r.train_ids.size(), 8u);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_TRUE(std::is_sorted(r.bench_ids.begin(), r.bench_ids.end()));
  EXPECT_EQ(all_ids(r).size(), 10u);
}

TEST(HoldoutSplit, SceneGroupsStayTogether) {
  std::vector<CaptureRef> caps;
  for (int i = 0; i < 10; ++i) caps.push_back(ref("c" + std::to_string(i), i < 5 ? "A" : "B"));
  const SplitResult r = holdout_split(caps, 0.5, 3);
  ASSERT_EQ(r.bench_ids.size(), 5u);
  const bool bench_is_a = r.bench_ids.front() < "c5";
  for (const auto& id : r.bench_ids) EXPECT_EQ(id < "c5", bench_is_a);
  for (const auto& id : r.train_ids) EXPECT_NE(id < "c5", bench_is_a);
}

TEST(HoldoutSplit, DeterministicForSeed) {
  std::vector<CaptureRef> caps;
  for (int i = 0; i < 40; ++i) caps.push_back(ref("c" + std::to_string(i), "s" + std::to_string(i / 3)));
  const auto a = holdout_split(caps, 0.25, 9);
  const auto b = holdout_split(caps, 0.25, 9);
  EXPECT_EQ(a.bench_ids, b.bench_ids);
  std::reverse(caps.begin(), caps.end());
  EXPECT_EQ(holdout_split(caps, 0.25, 9).bench_ids, a.bench_ids);
}

TEST(HoldoutSplit, SharedRawPathLinksCaptures) {
  std::vector<CaptureRef> caps;
  for (int i = 0; i < 6; ++i) caps.push_back(ref("c" + std::to_string(i), "s" + std::to_string(i)));
  caps[4].raw_path = caps[1].raw_path;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = holdout_split(caps, 0.4, seed);
    const bool one = std::count(r.bench_ids.begin(), r.bench_ids.end(), "c1") > 0;
    const bool four = std::count(r.bench_ids.begin(), r.bench_ids.end(), "c4") > 0;
    EXPECT_EQ(one, four);
  }
}

TEST(HoldoutSplit, MissingGroupKeysWarn) {
  std::vector<CaptureRef> caps = {ref("a"), ref("b"), ref("c", "s")};
  EXPECT_EQ(holdout_split(caps, 0.34, 1).warnings.size(), 1u);
}

TEST(HoldoutSplit, DegenerateCases) {
  std::vector<CaptureRef> one_scene;
  for (int i = 0; i < 5; ++i) one_scene.push_back(ref("c" + std::to_string(i), "only"));
  try {
    holdout_split(one_scene, 0.2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateSplit);
  }
  EXPECT_THROW(holdout_split({}, 0.2, 0), Error);
  EXPECT_THROW(holdout_split({ref("a"), ref("b")}, 0.0, 0), Error);
  EXPECT_THROW(holdout_split({ref("a"), ref("b")}, 1.0, 0), Error);
}

TEST(Disjointness, PassOnSplitOutput) {
  std::vector<CaptureRef> caps;
  for (int i = 0; i < 30; ++i)
    caps.push_back(ref("c" + std::to_string(i), "s" + std::to_string(i / 2), "sess" + std::to_string(i / 4),
                       "dev" + std::to_string(i)));
  const auto r = holdout_split(caps, 0.2, 5);
  std::vector<CaptureRef> train, bench;
  for (const auto& c : caps)
    (std::binary_search(r.bench_ids.begin(), r.bench_ids.end(), c.capture_id) ? bench : train).push_back(c);
  const auto report = verify_disjointness(train, bench);
  EXPECT_EQ(report.verdict, SplitVerdict::Pass);
  EXPECT_TRUE(report.capture_ids.empty());
}

TEST(Disjointness, SharedRawPathFails) {
  std::vector<CaptureRef> train = {ref("a", "s1")};
  std::vector<CaptureRef> bench = {ref("b", "s2")};
  bench[0].raw_path = train[0].raw_path;
  const auto report = verify_disjointness(train, bench);
  EXPECT_EQ(report.verdict, SplitVerdict::Fail);
  EXPECT_EQ(report.raw_paths, std::set<std::string>{"/raw/a.dng"});
  EXPECT_TRUE(report.capture_ids.empty());
  const auto j = to_json(report);
  EXPECT_EQ(j.at("verdict"), "FAIL");
}

TEST(Disjointness, EachKeyFails) {
  EXPECT_EQ(verify_disjointness({ref("a")}, {ref("a")}).capture_ids, std::set<std::string>{"a"});
  EXPECT_EQ(verify_disjointness({ref("a", "s")}, {ref("b", "s")}).scene_ids, std::set<std::string>{"s"});
  const auto r = verify_disjointness({ref("a", "x", "k")}, {ref("b", "y", "k")});
  EXPECT_EQ(r.verdict, SplitVerdict::Fail);
  EXPECT_EQ(r.session_ids, std::set<std::string>{"k"});
}

TEST(Disjointness, DeviceOnlyWarns) {
  const auto r = verify_disjointness({ref("a", "s1", std::nullopt, "nikon")}, {ref("b", "s2", std::nullopt, "nikon")});
  EXPECT_EQ(r.verdict, SplitVerdict::Warn);
  EXPECT_EQ(r.device_ids, std::set<std::string>{"nikon"});
}

TEST(Tagger, RuleExamples) {
  EXPECT_EQ(tag_capability("How many cars are visible?", "3"), CapabilityDimension::NG);
  EXPECT_EQ(tag_capability("What is the word on the first line of the yellow sign?", "EXIT"),
            CapabilityDimension::STR);
  EXPECT_EQ(tag_capability("What color is the umbrella?", "red"), CapabilityDimension::CAG);
  EXPECT_EQ(tag_capability("Is the door open?", "Yes, it is"), CapabilityDimension::BVV);
  EXPECT_EQ(tag_capability("Which one is taller, the tree or the pole?", "the tree"), CapabilityDimension::DS);
  EXPECT_EQ(tag_capability("What is to the left of the bench?", "a bicycle"), CapabilityDimension::SRU);
  EXPECT_EQ(tag_capability("Describe the scene.", "A street at night"), CapabilityDimension::GVG);
  EXPECT_EQ(tag_capability("How many cars are visible?", "3", CapabilityDimension::LER), CapabilityDimension::LER);
}

TEST(Dimensions, NamesRoundTrip) {
  for (CapabilityDimension d : kAllDimensions) {
    EXPECT_EQ(parse_dimension(to_string(d)), d);
    EXPECT_FALSE(display_name(d).empty());
  }
  EXPECT_EQ(to_string(CapabilityDimension::LER), "LER");
  EXPECT_FALSE(parse_dimension("XYZ").has_value());
}

TEST(BenchmarkIo, RoundTrip) {
  TempDir dir;
  BenchmarkExample e;
  e.capture_id = "c1";
  e.meas_xyz_path = "out/measxyz/c1";
  e.rgb_proxy_path = "out/proxies/c1/e1.ppm";
  e.raw_path = "/raw/c1.dng";
  e.question = "What does the sign say?";
  e.reference_answer = "STOP";
  e.dimension = CapabilityDimension::STR;
  e.metadata = {400.0, 1.0 / 125.0, 2.8, "cam", std::string("s"), std::string("k")};
  save_benchmark({e, e}, dir / "bench.jsonl");
  const auto back = load_benchmark(dir / "bench.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], e);
  auto bad = to_json(e);
  bad["dimension"] = "ZZZ";
  EXPECT_THROW(example_from_json(bad), Error);
}
