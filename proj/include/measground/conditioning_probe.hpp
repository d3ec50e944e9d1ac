#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "measground/capture_model.hpp"

namespace measground {

/// Reference exposure triangle for metadata normalization.
struct MetaNormalization {
  double iso_ref = 100.0;
  double exposure_ref = 1.0 / 60.0;
  double aperture_ref = 4.0;
};

/// (log2(iso/iso_ref), log2(exposure/exposure_ref), log2(aperture/aperture_ref)).
struct MetaVector {
  std::array<double, 3> values{};
  CameraMetadata source;
};

MetaVector normalize_metadata(const CameraMetadata& m, const MetaNormalization& norm = {});

/// Appends " [CAMERA iso=<int> exposure=<6 significant digits>s aperture=f/<2 decimals>]"
/// to the question, or returns it unchanged when `enabled` is false.
std::string serialize_metadata_question(std::string_view question, const CameraMetadata& m, bool enabled = true);

enum class Activation { Tanh, Identity };

/// y = act(W x + b), W row-major d x d.
struct DenseBlock {
  std::vector<double> weight;
  std::vector<double> bias;
};

/// g(m) = P m + c, P row-major d x 3.
struct Projection {
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Tiny dense stack with residual metadata injection after selected blocks:
/// h <- Block_l(h); if l is an injection layer, h <- h + g(m).
struct ProbeStack {
  std::size_t depth = 1;
  std::size_t hidden_dim = 1;
  Activation activation = Activation::Tanh;
  std::vector<DenseBlock> blocks;
  /// One projection shared by every injection layer, or one per layer (index = layer).
  bool layer_shared = true;
  std::vector<Projection> projections;
  std::set<std::size_t> inject_layers;

  const Projection& projection_for(std::size_t layer) const {
    return layer_shared ? projections.front() : projections[layer];
  }
};

/// The last quarter of the layers (at least one).
std::set<std::size_t> default_inject_layers(std::size_t depth);

struct ProbeOptions {
  std::size_t depth = 4;
  std::size_t hidden_dim = 8;
  std::optional<std::set<std::size_t>> inject_layers;
  std::uint64_t seed = 0;
  bool layer_shared = true;
  Activation activation = Activation::Tanh;
};

ProbeOptions probe_options_from_json(const nlohmann::json& j);

/// Random weights, uniform in +-1/sqrt(d) for blocks and +-0.5 for the projection.
ProbeStack make_probe_stack(const ProbeOptions& options);
/// Throws InvalidArgument on inconsistent shapes or out-of-range injection layers.
void validate(const ProbeStack& stack);

/// DimensionMismatch when h0 does not have hidden_dim entries.
std::vector<double> forward(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta,
                            bool inject = true);

/// Sum of squared outputs.
double probe_loss(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta, bool inject = true);

struct ProbeGradients {
  std::vector<DenseBlock> blocks;
  std::vector<Projection> projections;
  /// Contribution of each layer's injection to the projection gradient (zero for
  /// layers outside inject_layers). Sums to `projections` in the shared case.
  std::vector<Projection> projection_by_layer;
};

/// Analytic gradients of probe_loss.
ProbeGradients backward(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta,
                        bool inject = true);

/// Max over all parameters of |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-12) against central
/// differences with step eps in [1e-7, 1e-3]. NonFiniteGradient on NaN/inf.
double grad_check(const ProbeStack& stack, const std::vector<double>& h0, const MetaVector& meta, double eps);

inline constexpr double kGradCheckThreshold = 1e-4;

}  // namespace measground
