#pragma once

// Layers with explicit forward/backward passes. A layer called several
// times per step (shared subnets) keeps one saved context per call on a
// stack; backward must run in reverse call order.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "cade/anchors.hpp"
#include "cade/tensor.hpp"

namespace cade::nn {

using Stride3 = std::array<int, 3>;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Non-owning views over a model's parameters and buffers.
template <typename T>
struct ParamRefs {
  std::vector<Param<T>*> params;
  std::vector<Param<T>*> buffers;  // running statistics; grad unused
};

Shape3 spatial_shape(const std::vector<int>& nc_dhw);

/// False while a NoGradGuard is alive on this thread. Training-mode forwards
/// then keep batch statistics but save no backward context.
bool grad_recording();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// 3D convolution with cubic kernel (1 or 3), per-axis stride and padding
/// kernel/2, giving ceil(n / stride) outputs per axis.
template <typename T>
class Conv3d {
 public:
  Conv3d(std::string name, int in_channels, int out_channels, int kernel, Stride3 stride,
         bool with_bias);

  Tensor<T> forward(const Tensor<T>& x, bool train);
  /// Accumulates parameter gradients; returns dx unless need_dx is false.
  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true);

  Shape3 output_shape(const Shape3& in) const;
  void collect(ParamRefs<T>& refs);
  void init_normal(std::mt19937_64& rng, double stddev, double bias_value = 0.0);
  void init_kaiming(std::mt19937_64& rng);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  std::size_t saved_contexts() const { return saved_.size(); }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_;
  int out_;
  int k_;
  Stride3 stride_;
  bool with_bias_;
  std::vector<Tensor<T>> saved_;
};

/// Batch normalization over (N, D, H, W) per channel. Training uses batch
/// statistics and updates the running estimates; inference uses the
/// running estimates.
template <typename T>
class BatchNorm3d {
 public:
  BatchNorm3d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, bool train);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(ParamRefs<T>& refs);

  Param<T> gamma;
  Param<T> beta;
  Param<T> running_mean;
  Param<T> running_var;

 private:
  struct Saved {
    Tensor<T> x_hat;
    std::vector<T> inv_std;
  };
  int channels_;
  double momentum_;
  double eps_;
  std::vector<Saved> saved_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(Tensor<T> x, bool train);
  Tensor<T> backward(Tensor<T> dy);

 private:
  std::vector<Tensor<T>> saved_;
};

/// 3x3x3 max pooling with padding 1 and per-axis stride.
template <typename T>
class MaxPool3d {
 public:
  explicit MaxPool3d(Stride3 stride) : stride_(stride) {}
  Tensor<T> forward(const Tensor<T>& x, bool train);
  Tensor<T> backward(const Tensor<T>& dy);
  Shape3 output_shape(const Shape3& in) const;

 private:
  struct Saved {
    std::vector<int> in_shape;
    std::vector<std::uint32_t> argmax;
  };
  Stride3 stride_;
  std::vector<Saved> saved_;
};

/// Trilinear resampling to an explicit target shape (half-pixel centers,
/// edge clamped). With target = 2 x input this is the usual x2 upsample.
template <typename T>
Tensor<T> resize_trilinear(const Tensor<T>& x, const Shape3& target);

/// Adjoint of resize_trilinear.
template <typename T>
Tensor<T> resize_trilinear_backward(const Tensor<T>& dy, const Shape3& source);

template <typename T>
void add_inplace(Tensor<T>& y, const Tensor<T>& x);

}  // namespace cade::nn
