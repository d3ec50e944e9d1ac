#include <httplib.h>

#include "measground/bracketsup.hpp"
#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/text_metrics.hpp"

namespace measground {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorKind::ConfigInvalid, "endpoint must be an absolute URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

/// POST a JSON body; connection failures and 5xx map to `unavailable`,
/// other non-2xx statuses and unparseable bodies to `malformed`.
json post_json(const std::string& url, const json& body, std::chrono::milliseconds timeout, ErrorKind unavailable,
               ErrorKind malformed) {
  const Endpoint ep = split_url(url);
  httplib::Client client(ep.origin);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) fail(unavailable, url + ": " + httplib::to_string(res.error()));
  if (res->status >= 500 || res->status == 429)
    fail(unavailable, url + ": HTTP " + std::to_string(res->status));
  if (res->status < 200 || res->status >= 300) fail(malformed, url + ": HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    fail(malformed, url + ": " + e.what());
  }
}

}  // namespace

HttpAnnotator::HttpAnnotator(std::string url, std::chrono::milliseconds timeout)
    : url_(std::move(url)), timeout_(timeout) {
  split_url(url_);
}

json HttpAnnotator::request(const AnnotationRequest& req) {
  if (req.proxy == nullptr || !req.proxy->params().quantize)
    fail(ErrorKind::InvalidArgument, "remote annotation needs a quantized proxy image");
  io::Pnm ppm;
  ppm.width = req.proxy->width();
  ppm.height = req.proxy->height();
  ppm.channels = 3;
  ppm.maxval = req.proxy->params().max_code();
  ppm.samples = req.proxy->codes();
  const json body = {{"capture_id", req.capture_id},
                     {"exposure_gain", req.exposure_gain},
                     {"image", httplib::detail::base64_encode(io::encode_pnm(ppm))}};
  return post_json(url_, body, timeout_, ErrorKind::AnnotatorUnavailable, ErrorKind::MalformedResponse);
}

HttpJudge::HttpJudge(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {
  split_url(url_);
}

bool HttpJudge::verdict(const JudgeRequest& req) {
  const json body = {{"question", req.question}, {"reference", req.reference}, {"prediction", req.prediction}};
  return parse_verdict(post_json(url_, body, timeout_, ErrorKind::JudgeUnavailable, ErrorKind::MalformedVerdict));
}

}  // namespace measground
