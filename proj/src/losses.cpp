#include "cade/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cade/json_reader.hpp"

namespace cade {

void LossConfig::validate() const {
  if (!(gamma >= 0)) throw ConfigError("loss.gamma", "must be >= 0");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("loss.alpha", "must be in (0,1)");
  if (!(smooth_l1_beta > 0)) throw ConfigError("loss.smooth_l1_beta", "must be > 0");
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"gamma", c.gamma},
       {"alpha", c.alpha},
       {"smooth_l1_beta", c.smooth_l1_beta},
       {"normalize_by_positives", c.normalize_by_positives}};
}

LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  LossConfig c;
  StrictObject obj(j, prefix);
  obj.read("gamma", c.gamma);
  obj.read("alpha", c.alpha);
  obj.read("smooth_l1_beta", c.smooth_l1_beta);
  obj.read("normalize_by_positives", c.normalize_by_positives);
  obj.finish();
  c.validate();
  return c;
}

double focal_loss(double p, int y, const LossConfig& c) {
  p = std::clamp(p, kProbEps, 1.0 - kProbEps);
  const double pt = y == 1 ? p : 1.0 - p;
  const double at = y == 1 ? c.alpha : 1.0 - c.alpha;
  return -at * std::pow(1.0 - pt, c.gamma) * std::log(pt);
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double focal_loss_logit(double x, int y, const LossConfig& c, double* dlogit) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  if (y == 1) {
    const double log_p = -softplus(-x);
    const double mod = std::pow(1.0 - p, c.gamma);
    if (dlogit) *dlogit = c.alpha * mod * (c.gamma * p * log_p - (1.0 - p));
    return -c.alpha * mod * log_p;
  }
  const double log_q = -softplus(x);
  const double mod = std::pow(p, c.gamma);
  if (dlogit) *dlogit = -(1.0 - c.alpha) * mod * (c.gamma * (1.0 - p) * log_q - p);
  return -(1.0 - c.alpha) * mod * log_q;
}

double smooth_l1(double x, double beta, double* dx) {
  const double ax = std::abs(x);
  if (ax < beta) {
    if (dx) *dx = x / beta;
    return 0.5 * x * x / beta;
  }
  if (dx) *dx = x > 0 ? 1.0 : -1.0;
  return ax - 0.5 * beta;
}

double smooth_l1(const BoxOffsets& pred, const BoxOffsets& target, double beta) {
  double s = 0;
  for (int j = 0; j < 6; ++j) s += smooth_l1(pred[j] - target[j], beta);
  return s;
}

template <typename T>
LossBreakdown total_loss(const DetectorOutput<T>& out,
                         const std::vector<std::vector<AnchorAssignment>>& assignments,
                         const LossConfig& config, DetectorOutput<T>* grad) {
  const int batch = out.class_logits[0].dim(0);
  require(assignments.size() == std::size_t(batch), "total_loss: one assignment list per sample");
  const int a_per = out.class_logits[0].dim(1);
  const std::size_t per_sample = out.anchors_per_sample();

  LossBreakdown r;
  for (const auto& as : assignments) {
    require(as.size() == per_sample, "total_loss: assignment count does not match anchors");
    r.num_positive += std::size_t(std::count_if(as.begin(), as.end(), [](const auto& a) { return a.positive; }));
  }
  const double norm =
      config.normalize_by_positives ? double(std::max<std::size_t>(1, r.num_positive)) : 1.0;

  if (grad) {
    for (int l = 0; l < kNumLevels; ++l) {
      grad->class_logits[l] = Tensor<T>(out.class_logits[l].shape());
      grad->box_deltas[l] = Tensor<T>(out.box_deltas[l].shape());
    }
  }

  double focal = 0;
  double regression = 0;
  for (int n = 0; n < batch; ++n) {
    const auto& as = assignments[n];
    std::size_t base = 0;
    for (int l = 0; l < kNumLevels; ++l) {
      const auto& logits = out.class_logits[l];
      const std::size_t vox = logits.stride0() / std::size_t(a_per);
      const T* lg = logits.data() + std::size_t(n) * a_per * vox;
      const T* dl = out.box_deltas[l].data() + std::size_t(n) * 6 * a_per * vox;
      T* glg = grad ? grad->class_logits[l].data() + std::size_t(n) * a_per * vox : nullptr;
      T* gdl = grad ? grad->box_deltas[l].data() + std::size_t(n) * 6 * a_per * vox : nullptr;
      for (std::size_t v = 0; v < vox; ++v) {
        for (int a = 0; a < a_per; ++a) {
          const auto& asg = as[base + v * a_per + a];
          const std::size_t ci = std::size_t(a) * vox + v;
          double g = 0;
          focal += focal_loss_logit(double(lg[ci]), asg.positive ? 1 : 0, config, grad ? &g : nullptr);
          if (glg) glg[ci] = T(g / norm);
          if (!asg.positive) continue;
          for (int j = 0; j < 6; ++j) {
            const std::size_t di = (std::size_t(a) * 6 + j) * vox + v;
            double gj = 0;
            regression += smooth_l1(double(dl[di]) - asg.target[j], config.smooth_l1_beta, gdl ? &gj : nullptr);
            if (gdl) gdl[di] = T(gj / norm);
          }
        }
      }
      base += vox * a_per;
    }
  }
  r.focal = focal / norm;
  r.regression = regression / norm;
  r.total = r.focal + r.regression;
  return r;
}

template LossBreakdown total_loss(const DetectorOutput<float>&, const std::vector<std::vector<AnchorAssignment>>&,
                                  const LossConfig&, DetectorOutput<float>*);
template LossBreakdown total_loss(const DetectorOutput<double>&, const std::vector<std::vector<AnchorAssignment>>&,
                                  const LossConfig&, DetectorOutput<double>*);

}  // namespace cade
