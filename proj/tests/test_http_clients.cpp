#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "measground/bracketsup.hpp"
#include "measground/error.hpp"
#include "measground/text_metrics.hpp"
#include "test_support.hpp"

using namespace measground;
using nlohmann::json;

namespace {

std::string base64_decode(const std::string& in) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  unsigned buf = 0;
  int bits = 0;
  for (char ch : in) {
    if (ch == '=') break;
    const auto pos = alphabet.find(ch);
    if (pos == std::string::npos) continue;
    buf = (buf << 6) | static_cast<unsigned>(pos);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

/// Local server on an ephemeral port, stopped on destruction.
class FakeServer {
 public:
  explicit FakeServer(httplib::Server::Handler handler) {
    server_.Post("/v1/endpoint", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/endpoint"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RenderedRgb proxy(const std::string& id) {
  MeasXyzImage z = measground::testing::neutral_meas_xyz(2, 3, [](auto, auto) { return 0.1; });
  z.capture_id = id;
  RenderParams p;
  p.exposure_gain = 2.0;
  return render_proxy(z, p);
}

}  // namespace

TEST(HttpAnnotator, SendsBase64PpmAndParsesCandidates) {
  json seen;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"candidates":[{"question":"What is it?","answer":"a wall","score":0.6}]})",
                    "application/json");
  });
  HttpAnnotator client(server.url());
  const auto r = annotate(proxy("cap_7"), client, "cap");
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.candidates[0].answer, "a wall");
  EXPECT_EQ(r.candidates[0].exposure_gain, 2.0);
  EXPECT_EQ(seen.at("capture_id"), "cap_7");
  EXPECT_EQ(seen.at("exposure_gain"), 2.0);
  const std::string ppm = base64_decode(seen.at("image").get<std::string>());
  EXPECT_EQ(ppm.rfind("P6\n3 2\n255\n", 0), 0u) << ppm.substr(0, 16);
  EXPECT_EQ(ppm.size(), std::string("P6\n3 2\n255\n").size() + 3 * 2 * 3);
}

TEST(HttpAnnotator, ServerErrorIsRetryableThenPropagates) {
  std::atomic<int> hits{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  HttpAnnotator client(server.url());
  RetryPolicy policy;
  policy.max_retries = 1;
  policy.backoff = std::chrono::milliseconds(1);
  try {
    annotate(proxy("c"), client, "c", policy);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AnnotatorUnavailable);
  }
  EXPECT_EQ(hits, 2);
}

TEST(HttpAnnotator, ClientErrorIsMalformed) {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  HttpAnnotator client(server.url());
  try {
    client.request({"c", 1.0, nullptr});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
  const auto p = proxy("c");
  try {
    client.request({"c", 2.0, &p});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedResponse);
  }
}

TEST(HttpJudge, WireContract) {
  json seen;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    const bool ok = seen.at("prediction") == seen.at("reference");
    res.set_content(json{{"verdict", ok ? "correct" : "incorrect"}}.dump(), "application/json");
  });
  HttpJudge client(server.url());
  EXPECT_TRUE(judge("Q?", "red", "red", client));
  EXPECT_EQ(seen, (json{{"question", "Q?"}, {"reference", "red"}, {"prediction", "red"}}));
  EXPECT_FALSE(judge("Q?", "red", "blue", client));
}

TEST(HttpJudge, GarbageBodyIsMalformedVerdict) {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  HttpJudge client(server.url());
  try {
    judge("Q", "a", "b", client, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedVerdict);
  }
}

TEST(HttpJudge, UnreachableIsUnavailable) {
  HttpJudge client("http://127.0.0.1:1/judge", std::chrono::milliseconds(200));
  try {
    judge("Q", "a", "b", client, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::JudgeUnavailable);
    EXPECT_TRUE(e.is_io());
  }
  EXPECT_THROW(HttpJudge("no-scheme"), Error);
}
