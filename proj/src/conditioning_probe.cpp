#include "measground/conditioning_probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "measground/error.hpp"

namespace measground {

MetaVector normalize_metadata(const CameraMetadata& m, const MetaNormalization& norm) {
  validate(m);
  MetaVector v;
  v.values = {std::log2(m.iso / norm.iso_ref), std::log2(m.exposure_time / norm.exposure_ref),
              std::log2(m.aperture / norm.aperture_ref)};
  v.source = m;
  return v;
}

std::string serialize_metadata_question(std::string_view question, const CameraMetadata& m, bool enabled) {
  if (!enabled) return std::string(question);
  char buf[160];
  std::snprintf(buf, sizeof buf, " [CAMERA iso=%lld exposure=%#.6gs aperture=f/%.2f]", std::llround(m.iso),
                m.exposure_time, m.aperture);
  return std::string(question) + buf;
}

std::set<std::size_t> default_inject_layers(std::size_t depth) {
  const std::size_t count = std::max<std::size_t>(1, (depth + 3) / 4);
  std::set<std::size_t> layers;
  for (std::size_t l = depth - std::min(count, depth); l < depth; ++l) layers.insert(l);
  return layers;
}

ProbeOptions probe_options_from_json(const nlohmann::json& j) {
  ProbeOptions o;
  try {
    o.depth = j.at("depth").get<std::size_t>();
    o.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    o.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("inject_layers")) o.inject_layers = j.at("inject_layers").get<std::set<std::size_t>>();
    o.layer_shared = j.value("layer_shared", true);
    const std::string act = j.value("activation", std::string("tanh"));
    if (act == "tanh") {
      o.activation = Activation::Tanh;
    } else if (act == "identity") {
      o.activation = Activation::Identity;
    } else {
      fail(ErrorKind::ConfigInvalid, "probe activation must be 'tanh' or 'identity'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("probe config: ") + e.what());
  }
  return o;
}

void validate(const ProbeStack& s) {
  const std::size_t d = s.hidden_dim;
  if (s.depth == 0 || d == 0) fail(ErrorKind::InvalidArgument, "probe depth and hidden_dim must be >= 1");
  if (s.blocks.size() != s.depth) fail(ErrorKind::InvalidArgument, "one block per layer required");
  for (const auto& b : s.blocks)
    if (b.weight.size() != d * d || b.bias.size() != d) fail(ErrorKind::InvalidArgument, "block shape mismatch");
  const std::size_t expected = s.layer_shared ? 1 : s.depth;
  if (s.projections.size() != expected) fail(ErrorKind::InvalidArgument, "wrong number of projections");
  for (const auto& p : s.projections)
    if (p.weight.size() != d * 3 || p.bias.size() != d) fail(ErrorKind::InvalidArgument, "projection shape mismatch");
  for (std::size_t l : s.inject_layers)
    if (l >= s.depth) fail(ErrorKind::InvalidArgument, "injection layer " + std::to_string(l) + " out of range");
}

ProbeStack make_probe_stack(const ProbeOptions& o) {
  ProbeStack s;
  s.depth = o.depth;
  s.hidden_dim = o.hidden_dim;
  s.activation = o.activation;
  s.layer_shared = o.layer_shared;
  s.inject_layers = o.inject_layers ? *o.inject_layers : default_inject_layers(o.depth);
  if (s.depth == 0 || s.hidden_dim == 0) fail(ErrorKind::InvalidArgument, "probe depth and hidden_dim must be >= 1");

  std::mt19937_64 rng(o.seed);
  const double block_scale = 1.0 / std::sqrt(static_cast<double>(s.hidden_dim));
  std::uniform_real_distribution<double> block_init(-block_scale, block_scale);
  std::uniform_real_distribution<double> proj_init(-0.5, 0.5);
  const std::size_t d = s.hidden_dim;
  for (std::size_t l = 0; l < s.depth; ++l) {
    DenseBlock b{std::vector<double>(d * d), std::vector<double>(d)};
    for (double& w : b.weight) w = block_init(rng);
    for (double& w : b.bias) w = block_init(rng);
    s.blocks.push_back(std::move(b));
  }
  for (std::size_t k = 0; k < (s.layer_shared ? 1 : s.depth); ++k) {
    Projection p{std::vector<double>(d * 3), std::vector<double>(d)};
    for (double& w : p.weight) w = proj_init(rng);
    for (double& w : p.bias) w = proj_init(rng);
    s.projections.push_back(std::move(p));
  }
  validate(s);
  return s;
}

namespace {

std::vector<double> project(const Projection& p, const MetaVector& meta, std::size_t d) {
  std::vector<double> g(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = p.bias[i];
    for (std::size_t k = 0; k < 3; ++k) acc += p.weight[i * 3 + k] * meta.values[k];
    g[i] = acc;
  }
  return g;
}

struct Trace {
  std::vector<std::vector<double>> inputs;  // h entering each block
  std::vector<std::vector<double>> pre;     // W h + b
  std::vector<double> output;
};

Trace run(const ProbeStack& s, const std::vector<double>& h0, const MetaVector& meta, bool inject) {
  validate(s);
  const std::size_t d = s.hidden_dim;
  if (h0.size() != d)
    fail(ErrorKind::DimensionMismatch, "h0 has " + std::to_string(h0.size()) + " entries, expected " +
                                           std::to_string(d));
  Trace t;
  std::vector<double> h = h0;
  for (std::size_t l = 0; l < s.depth; ++l) {
    const DenseBlock& b = s.blocks[l];
    std::vector<double> a(d);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = b.bias[i];
      for (std::size_t j = 0; j < d; ++j) acc += b.weight[i * d + j] * h[j];
      a[i] = acc;
    }
    t.inputs.push_back(h);
    for (std::size_t i = 0; i < d; ++i) h[i] = s.activation == Activation::Tanh ? std::tanh(a[i]) : a[i];
    t.pre.push_back(std::move(a));
    if (inject && s.inject_layers.count(l)) {
      const std::vector<double> g = project(s.projection_for(l), meta, d);
      for (std::size_t i = 0; i < d; ++i) h[i] += g[i];
    }
  }
  t.output = std::move(h);
  return t;
}

Projection zero_projection(std::size_t d) { return {std::vector<double>(d * 3, 0.0), std::vector<double>(d, 0.0)}; }

}  // namespace

std::vector<double> forward(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta,
                            bool inject) {
  return run(stack, h0, meta, inject).output;
}

double probe_loss(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta, bool inject) {
  double loss = 0.0;
  for (double v : forward(stack, h0, meta, inject)) loss += v * v;
  return loss;
}

ProbeGradients backward(const ProbeStack& s, const std::vector<double>& h0, const MetaVector& meta, bool inject) {
  const Trace t = run(s, h0, meta, inject);
  const std::size_t d = s.hidden_dim;

  ProbeGradients grads;
  for (std::size_t l = 0; l < s.depth; ++l) {
    grads.blocks.push_back({std::vector<double>(d * d, 0.0), std::vector<double>(d, 0.0)});
    grads.projection_by_layer.push_back(zero_projection(d));
  }
  for (std::size_t k = 0; k < s.projections.size(); ++k) grads.projections.push_back(zero_projection(d));

  std::vector<double> delta(d);  // dL/dh after the current layer
  for (std::size_t i = 0; i < d; ++i) delta[i] = 2.0 * t.output[i];

  for (std::size_t l = s.depth; l-- > 0;) {
    if (inject && s.inject_layers.count(l)) {
      Projection& contrib = grads.projection_by_layer[l];
      for (std::size_t i = 0; i < d; ++i) {
        contrib.bias[i] = delta[i];
        for (std::size_t k = 0; k < 3; ++k) contrib.weight[i * 3 + k] = delta[i] * meta.values[k];
      }
      Projection& total = grads.projections[s.layer_shared ? 0 : l];
      for (std::size_t i = 0; i < d * 3; ++i) total.weight[i] += contrib.weight[i];
      for (std::size_t i = 0; i < d; ++i) total.bias[i] += contrib.bias[i];
    }

    std::vector<double> da(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double act_grad =
          s.activation == Activation::Tanh ? 1.0 - std::tanh(t.pre[l][i]) * std::tanh(t.pre[l][i]) : 1.0;
      da[i] = delta[i] * act_grad;
    }
    const auto& x = t.inputs[l];
    DenseBlock& gb = grads.blocks[l];
    std::vector<double> next(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      gb.bias[i] = da[i];
      for (std::size_t j = 0; j < d; ++j) {
        gb.weight[i * d + j] = da[i] * x[j];
        next[j] += s.blocks[l].weight[i * d + j] * da[i];
      }
    }
    delta = std::move(next);
  }
  return grads;
}

namespace {

std::vector<double*> parameters(ProbeStack& s) {
  std::vector<double*> out;
  for (auto& b : s.blocks) {
    for (double& w : b.weight) out.push_back(&w);
    for (double& w : b.bias) out.push_back(&w);
  }
  for (auto& p : s.projections) {
    for (double& w : p.weight) out.push_back(&w);
    for (double& w : p.bias) out.push_back(&w);
  }
  return out;
}

std::vector<double> flatten(const ProbeGradients& g) {
  std::vector<double> out;
  for (const auto& b : g.blocks) {
    out.insert(out.end(), b.weight.begin(), b.weight.end());
    out.insert(out.end(), b.bias.begin(), b.bias.end());
  }
  for (const auto& p : g.projections) {
    out.insert(out.end(), p.weight.begin(), p.weight.end());
    out.insert(out.end(), p.bias.begin(), p.bias.end());
  }
  return out;
}

}  // namespace

double grad_check(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) fail(ErrorKind::InvalidArgument, "eps must lie in [1e-7, 1e-3]");
  const std::vector<double> analytic = flatten(backward(stack, h0, meta, true));

  ProbeStack probe = stack;
  const std::vector<double*> params = parameters(probe);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + eps;
    const double up = probe_loss(probe, h0, meta, true);
    *params[i] = saved - eps;
    const double down = probe_loss(probe, h0, meta, true);
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i]))
      fail(ErrorKind::NonFiniteGradient, "parameter " + std::to_string(i) + " has a non-finite gradient");
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace measground
