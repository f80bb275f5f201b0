#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "cade/anchors.hpp"
#include "cade/detector.hpp"

namespace cade {

struct LossConfig {
  double gamma = 2.0;
  double alpha = 0.25;
  double smooth_l1_beta = 1.0;
  bool normalize_by_positives = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& prefix = "loss");

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before the log.
inline constexpr double kProbEps = 1e-12;

/// -alpha_t (1 - p_t)^gamma log(p_t) for a probability p and label y.
double focal_loss(double p, int y, const LossConfig& config);

/// Same loss evaluated from a logit with log-sigmoid; optionally writes
/// d(loss)/d(logit).
double focal_loss_logit(double logit, int y, const LossConfig& config, double* dlogit = nullptr);

/// Per-coordinate Huber-style term; optionally writes its derivative.
double smooth_l1(double x, double beta, double* dx = nullptr);

/// Sum of the per-coordinate terms over the six offsets.
double smooth_l1(const BoxOffsets& pred, const BoxOffsets& target, double beta);

struct LossBreakdown {
  double focal = 0;
  double regression = 0;
  double total = 0;
  std::size_t num_positive = 0;
};

/// Focal loss over every anchor plus smooth-L1 over positives, both divided
/// by max(1, positives in the batch). `assignments[n]` covers all anchors
/// of sample n in P2..P6 order. When `grad` is given it receives
/// d(total)/d(outputs) with the output's shapes.
template <typename T>
LossBreakdown total_loss(const DetectorOutput<T>& output,
                         const std::vector<std::vector<AnchorAssignment>>& assignments,
                         const LossConfig& config, DetectorOutput<T>* grad = nullptr);

}  // namespace cade
