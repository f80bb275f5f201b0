#pragma once

// Modified 3D RetinaNet: residual backbone without its final stage
// (outputs C1..C4 at cumulative strides 2, 4, 8, 16), a feature pyramid
// P2..P6 where P4..P2 come from lateral 1x1x1 projections merged top-down
// by trilinear resampling and P5/P6 are stride-2 3x3x3 convolutions on C4
// and ReLU(P5), and two weight-shared subnets (class and box) applied to
// every level.

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cade/anchors.hpp"
#include "cade/geometry.hpp"
#include "cade/nn/layers.hpp"

namespace cade {

using nn::Stride3;

struct NetworkConfig {
  int depth = 14;  // 14 (basic blocks 2-2-2) or 41 (bottlenecks 3-4-6)
  int in_channels = 13;
  int stem_channels = 64;
  /// Block widths of the three residual stages are w, 2w, 4w.
  int stage_width = 64;
  int pyramid_channels = 256;
  int subnet_channels = 64;
  int subnet_depth = 4;
  /// Per-axis (z, y, x) stride of the stem, pool, stage 2 and stage 3.
  std::array<Stride3, 4> stage_strides{{{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 2, 2}}};
  /// Per-axis stride of the P5 and P6 convolutions.
  std::array<Stride3, 2> extra_strides{{{2, 2, 2}, {2, 2, 2}}};
  double prior_probability = 0.01;
  double bn_momentum = 0.1;
  AnchorConfig anchors;

  /// Cumulative per-axis stride of P2..P6.
  std::array<std::array<double, 3>, kNumLevels> level_strides() const;
  /// Validates and copies the derived level strides into `anchors`.
  void finalize();
  int anchors_per_position() const { return anchors.anchors_per_position(); }
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j, const std::string& prefix = "network");

template <typename T>
class ResidualBlock {
 public:
  virtual ~ResidualBlock() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect(nn::ParamRefs<T>& refs) = 0;
};

template <typename T>
struct BackboneOutput {
  Tensor<T> c1, c2, c3, c4;
};

template <typename T>
class Backbone3d {
 public:
  Backbone3d(const NetworkConfig& config, std::mt19937_64& rng);

  BackboneOutput<T> forward(const Tensor<T>& x, bool train);
  /// Gradients for C1..C4 (C1 may be empty). Input gradient is not formed.
  void backward(const Tensor<T>& dc1, Tensor<T> dc2, Tensor<T> dc3, Tensor<T> dc4);
  void collect(nn::ParamRefs<T>& refs);

  std::array<int, 4> stage_channels() const { return channels_; }
  std::array<Shape3, 4> stage_shapes(const Shape3& input) const;

 private:
  NetworkConfig config_;
  std::array<int, 4> channels_{};
  nn::Conv3d<T> stem_conv_;
  nn::BatchNorm3d<T> stem_bn_;
  nn::Relu<T> stem_relu_;
  nn::MaxPool3d<T> pool_;
  std::array<std::vector<std::unique_ptr<ResidualBlock<T>>>, 3> stages_;
};

template <typename T>
class FeaturePyramid {
 public:
  FeaturePyramid(const NetworkConfig& config, const std::array<int, 4>& stage_channels,
                 std::mt19937_64& rng);

  std::array<Tensor<T>, kNumLevels> forward(const Tensor<T>& c2, const Tensor<T>& c3,
                                            const Tensor<T>& c4, bool train);
  /// Returns gradients for (C2, C3, C4).
  std::array<Tensor<T>, 3> backward(std::array<Tensor<T>, kNumLevels> dp);
  void collect(nn::ParamRefs<T>& refs);

 private:
  nn::Conv3d<T> lateral2_, lateral3_, lateral4_;
  nn::Conv3d<T> p5_conv_, p6_conv_;
  nn::Relu<T> p5_relu_;
  std::vector<Shape3> saved_shapes_;  // (p2, p3, p4) per call
};

template <typename T>
class Subnet {
 public:
  Subnet(std::string name, int in_channels, int hidden, int depth, int outputs,
         double final_bias, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, bool train);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(nn::ParamRefs<T>& refs);

 private:
  std::vector<nn::Conv3d<T>> convs_;
  std::vector<nn::Relu<T>> relus_;
  nn::Conv3d<T> head_;
};

/// Per-level raw outputs. class_logits[l] is (N, A, d, h, w) and
/// box_deltas[l] is (N, 6A, d, h, w) with channel a*6 + j.
template <typename T>
struct DetectorOutput {
  std::array<Tensor<T>, kNumLevels> class_logits;
  std::array<Tensor<T>, kNumLevels> box_deltas;

  std::array<Shape3, kNumLevels> level_shapes() const;
  std::size_t anchors_per_sample() const;
};

template <typename T>
class RetinaNet3d {
 public:
  RetinaNet3d(NetworkConfig config, std::uint64_t seed);
  // Parameter views point into members, so the network stays in place.
  RetinaNet3d(const RetinaNet3d&) = delete;
  RetinaNet3d& operator=(const RetinaNet3d&) = delete;

  DetectorOutput<T> forward(const Tensor<T>& input, bool train);
  void backward(const DetectorOutput<T>& grad);

  /// Forward through backbone and pyramid only (inference mode).
  std::array<Tensor<T>, kNumLevels> pyramid_features(const Tensor<T>& input);
  BackboneOutput<T> backbone_features(const Tensor<T>& input);

  std::array<Shape3, kNumLevels> level_shapes(const Shape3& input) const;
  const NetworkConfig& config() const { return config_; }
  nn::ParamRefs<T>& refs() { return refs_; }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  NetworkConfig config_;
  std::mt19937_64 rng_;
  Backbone3d<T> backbone_;
  FeaturePyramid<T> pyramid_;
  Subnet<T> class_net_;
  Subnet<T> box_net_;
  nn::ParamRefs<T> refs_;
};

/// Position of a breast tensor inside its original volume plus identity.
struct BreastPlacement {
  std::string breast_id;
  Point3 crop_origin;  // original = tensor + crop_origin
};

struct PredictConfig {
  double score_threshold = 0.05;  // kept iff score > threshold
  double nms_threshold = 0.5;
  int max_detections = 100;
  int pre_nms_top_k = 1000;  // per level
};

void to_json(nlohmann::json& j, const PredictConfig& c);
PredictConfig predict_config_from_json(const nlohmann::json& j, const std::string& prefix);

/// Detections of sample `n` in tensor coordinates (before origin shift).
template <typename T>
std::vector<Detection> decode_detections(const DetectorOutput<T>& out, int n,
                                         const AnchorConfig& anchors, const PredictConfig& cfg,
                                         const std::string& breast_id);

/// Inference on a batch; detections returned in original-volume coordinates.
template <typename T>
std::vector<std::vector<Detection>> predict(RetinaNet3d<T>& net, const Tensor<T>& batch,
                                            const std::vector<BreastPlacement>& placements,
                                            const PredictConfig& cfg);

}  // namespace cade
