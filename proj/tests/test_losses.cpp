#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "cade/error.hpp"
#include "cade/losses.hpp"
#include "oracles.hpp"

using namespace cade;
using namespace cade::test;

namespace {

LossConfig make_config(double gamma, double alpha) {
  LossConfig c;
  c.gamma = gamma;
  c.alpha = alpha;
  return c;
}

double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_CASE("focal loss analytic values") {
  CHECK(std::abs(focal_loss(0.5, 1, make_config(0, 0.5)) - 0.5 * std::log(2.0)) <= 1e-9);
  CHECK(std::abs(focal_loss(0.9, 1, make_config(2, 0.25)) - 0.25 * 0.01 * -std::log(0.9)) <= 1e-9);
  CHECK(std::abs(focal_loss(0.9, 0, make_config(2, 0.25)) - 0.75 * 0.81 * -std::log(0.1)) <= 1e-9);
  CHECK(focal_loss(0.9, 1, make_config(2, 0.25)) == doctest::Approx(2.634e-4).epsilon(1e-3));
  CHECK(focal_loss(0.9, 0, make_config(2, 0.25)) == doctest::Approx(1.3988).epsilon(1e-4));
  CHECK(std::isfinite(focal_loss(0.0, 1, LossConfig{})));
  CHECK(std::isfinite(focal_loss(1.0, 0, LossConfig{})));
}

TEST_CASE("modulating factor down-weights easy examples by (1-p_t)^gamma") {
  const auto c = make_config(2, 0.5);
  const auto ce = make_config(0, 0.5);
  CHECK(focal_loss(0.9, 1, c) / focal_loss(0.9, 1, ce) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("logit form equals probability form") {
  for (double x : {-8.0, -2.0, -0.3, 0.0, 0.7, 3.0, 9.0}) {
    for (int y : {0, 1}) {
      const double p = 1 / (1 + std::exp(-x));
      CHECK(focal_loss_logit(x, y, LossConfig{}) == doctest::Approx(focal_loss(p, y, LossConfig{})).epsilon(1e-10));
    }
  }
  CHECK(std::isfinite(focal_loss_logit(-800, 1, LossConfig{})));
  CHECK(std::isfinite(focal_loss_logit(800, 0, LossConfig{})));
}

TEST_CASE("focal and smooth-L1 derivatives match central differences") {
  for (double gamma : {0.0, 1.0, 2.0}) {
    const auto c = make_config(gamma, 0.25);
    for (double x : {-4.0, -1.1, -0.2, 0.3, 1.7, 5.0}) {
      for (int y : {0, 1}) {
        double g = 0;
        focal_loss_logit(x, y, c, &g);
        const double fd = central_diff([&](double v) { return focal_loss_logit(v, y, c); }, x);
        CHECK(rel_err(g, fd) <= 1e-6);
      }
    }
  }
  for (double x : {-3.0, -0.6, 0.25, 0.9, 2.5}) {
    double g = 0;
    smooth_l1(x, 1.0, &g);
    CHECK(rel_err(g, central_diff([](double v) { return smooth_l1(v, 1.0); }, x)) <= 1e-6);
  }
}

TEST_CASE("smooth-L1 is continuous in value and slope at |x| = beta") {
  for (double beta : {0.5, 1.0, 2.0}) {
    for (double sign : {-1.0, 1.0}) {
      const double e = 1e-12;
      double d_in = 0, d_out = 0;
      const double v_in = smooth_l1(sign * (beta - e), beta, &d_in);
      const double v_out = smooth_l1(sign * (beta + e), beta, &d_out);
      CHECK(std::abs(v_in - v_out) <= 1e-9);
      CHECK(std::abs(d_in - d_out) <= 1e-9);
      CHECK(v_out == doctest::Approx(0.5 * beta));
    }
  }
}

TEST_CASE("total_loss equals a scalar-loop oracle on random 50-anchor instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int batch = 1 + trial % 2;
    const auto out = small_output(batch, rng);
    REQUIRE(out.anchors_per_sample() == 50u);
    const auto as = random_assignments(batch, 50, trial == 0 ? 0.0 : 0.15, rng);
    const auto r = total_loss(out, as, LossConfig{});
    CHECK(std::abs(r.total - oracle_total(out, as, LossConfig{})) <= 1e-6);
    CHECK(r.total == doctest::Approx(r.focal + r.regression));
  }
}

TEST_CASE("total_loss gradient matches finite differences") {
  std::mt19937_64 rng(41);
  auto out = small_output(2, rng);
  const auto as = random_assignments(2, 50, 0.2, rng);
  DetectorOutput<double> grad;
  total_loss(out, as, LossConfig{}, &grad);
  for (int l = 0; l < kNumLevels; ++l) {
    for (auto* pair : {&out.class_logits[l], &out.box_deltas[l]}) {
      const auto& g = pair == &out.class_logits[l] ? grad.class_logits[l] : grad.box_deltas[l];
      for (std::size_t i = 0; i < pair->size(); i += 3) {
        const double keep = (*pair)[i];
        const double h = 1e-6;
        (*pair)[i] = keep + h;
        const double up = total_loss(out, as, LossConfig{}).total;
        (*pair)[i] = keep - h;
        const double dn = total_loss(out, as, LossConfig{}).total;
        (*pair)[i] = keep;
        const double fd = (up - dn) / (2 * h);
        CHECK(std::abs(g[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("loss config validation") {
  nlohmann::json j = LossConfig{};
  CHECK(loss_config_from_json(j).gamma == 2.0);
  j["alpha"] = 1.5;
  CHECK_THROWS_AS(loss_config_from_json(j), ConfigError);
}
