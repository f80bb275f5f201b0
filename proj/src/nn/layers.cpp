#include "cade/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cade/simd/kernels.hpp"

namespace cade {

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

}  // namespace cade

namespace cade::nn {
namespace {

// Upper bound on the im2col scratch (elements) before chunking output rows.
constexpr std::size_t kColBudget = std::size_t(1) << 22;

int conv_out(int n, int k, int s) {
  const int p = k / 2;
  return (n + 2 * p - k) / s + 1;
}

void check_5d(const std::vector<int>& shape, int channels, const char* who) {
  if (shape.size() != 5 || shape[1] != channels) {
    fail(ErrorKind::Architecture, std::string(who) + ": expected (N," + std::to_string(channels) +
                                      ",D,H,W), got " + shape_string(shape));
  }
}

struct ConvGeometry {
  int channels;
  int k;
  Stride3 stride;
  Shape3 in;
  Shape3 out;

  std::size_t rows() const { return std::size_t(out[0]) * out[1]; }
  std::size_t ksize() const { return std::size_t(channels) * k * k * k; }
};

// Unfolds output rows [row0, row0 + nrows) of one sample into a
// (channels*k^3) x (nrows*out_w) matrix.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, std::size_t row0, std::size_t nrows, T* col) {
  const int p = g.k / 2;
  const int ow = g.out[2];
  const std::size_t vc = nrows * std::size_t(ow);
  const std::size_t plane = std::size_t(g.in[1]) * g.in[2];
  std::size_t r = 0;
  for (int ci = 0; ci < g.channels; ++ci) {
    const T* xc = x + std::size_t(ci) * g.in[0] * plane;
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++r) {
          T* dst = col + r * vc;
          for (std::size_t rr = 0; rr < nrows; ++rr) {
            const std::size_t row = row0 + rr;
            const int oz = int(row / std::size_t(g.out[1]));
            const int oy = int(row % std::size_t(g.out[1]));
            const int iz = oz * g.stride[0] - p + kz;
            const int iy = oy * g.stride[1] - p + ky;
            T* d = dst + rr * ow;
            if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) {
              std::fill(d, d + ow, T(0));
              continue;
            }
            const T* src = xc + std::size_t(iz) * plane + std::size_t(iy) * g.in[2];
            const int sx = g.stride[2];
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * sx - p + kx;
              d[ox] = (ix >= 0 && ix < g.in[2]) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t row0, std::size_t nrows, T* x) {
  const int p = g.k / 2;
  const int ow = g.out[2];
  const std::size_t vc = nrows * std::size_t(ow);
  const std::size_t plane = std::size_t(g.in[1]) * g.in[2];
  std::size_t r = 0;
  for (int ci = 0; ci < g.channels; ++ci) {
    T* xc = x + std::size_t(ci) * g.in[0] * plane;
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++r) {
          const T* src = col + r * vc;
          for (std::size_t rr = 0; rr < nrows; ++rr) {
            const std::size_t row = row0 + rr;
            const int oz = int(row / std::size_t(g.out[1]));
            const int oy = int(row % std::size_t(g.out[1]));
            const int iz = oz * g.stride[0] - p + kz;
            const int iy = oy * g.stride[1] - p + ky;
            if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) continue;
            T* dst = xc + std::size_t(iz) * plane + std::size_t(iy) * g.in[2];
            const T* s = src + rr * ow;
            const int sx = g.stride[2];
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * sx - p + kx;
              if (ix >= 0 && ix < g.in[2]) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
Param<T> make_param(std::string name, std::vector<int> shape, T fill = T(0)) {
  Param<T> p{std::move(name), Tensor<T>(shape, fill), Tensor<T>(shape)};
  return p;
}

}  // namespace

namespace {
thread_local bool g_recording = true;
}  // namespace

bool grad_recording() { return g_recording; }
NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

Shape3 spatial_shape(const std::vector<int>& s) {
  require(s.size() == 5, "spatial_shape: expected a 5D tensor");
  return {s[2], s[3], s[4]};
}

// ---------------------------------------------------------------- Conv3d

template <typename T>
Conv3d<T>::Conv3d(std::string name, int in_channels, int out_channels, int kernel, Stride3 stride,
                  bool with_bias)
    : weight(make_param<T>(name + ".weight",
                           {out_channels, in_channels, kernel, kernel, kernel})),
      bias(make_param<T>(name + ".bias", {with_bias ? out_channels : 0})),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      with_bias_(with_bias) {
  require(kernel == 1 || kernel == 3, "Conv3d: kernel must be 1 or 3");
  for (int s : stride) require(s >= 1, "Conv3d: stride must be positive");
}

template <typename T>
Shape3 Conv3d<T>::output_shape(const Shape3& in) const {
  return {conv_out(in[0], k_, stride_[0]), conv_out(in[1], k_, stride_[1]),
          conv_out(in[2], k_, stride_[2])};
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x, bool train) {
  check_5d(x.shape(), in_, weight.name.c_str());
  const ConvGeometry g{in_, k_, stride_, spatial_shape(x.shape()), output_shape(spatial_shape(x.shape()))};
  const int n = x.dim(0);
  Tensor<T> y({n, out_, g.out[0], g.out[1], g.out[2]});
  const std::size_t v_out = std::size_t(g.out[0]) * g.out[1] * g.out[2];
  const std::size_t v_in = std::size_t(g.in[0]) * g.in[1] * g.in[2];
  const auto& kt = simd::kernels<T>();
  const bool pointwise = k_ == 1 && stride_ == Stride3{1, 1, 1};

  std::vector<T> col;
  const std::size_t rows_per_chunk =
      std::max<std::size_t>(1, kColBudget / (g.ksize() * std::size_t(g.out[2])));
  for (int b = 0; b < n; ++b) {
    const T* xb = x.data() + std::size_t(b) * in_ * v_in;
    T* yb = y.data() + std::size_t(b) * out_ * v_out;
    if (pointwise) {
      kt.gemm(false, false, out_, v_out, in_, T(1), weight.value.data(), in_, xb, v_in, T(0), yb,
              v_out);
    } else {
      for (std::size_t r0 = 0; r0 < g.rows(); r0 += rows_per_chunk) {
        const std::size_t nr = std::min(rows_per_chunk, g.rows() - r0);
        const std::size_t vc = nr * g.out[2];
        col.resize(g.ksize() * vc);
        im2col(g, xb, r0, nr, col.data());
        kt.gemm(false, false, out_, vc, g.ksize(), T(1), weight.value.data(), g.ksize(),
                col.data(), vc, T(0), yb + r0 * g.out[2], v_out);
      }
    }
    if (with_bias_) {
      for (int c = 0; c < out_; ++c) {
        T* yc = yb + std::size_t(c) * v_out;
        const T bv = bias.value[c];
        for (std::size_t i = 0; i < v_out; ++i) yc[i] += bv;
      }
    }
  }
  if (train && g_recording) saved_.push_back(x);
  return y;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& dy, bool need_dx) {
  require(!saved_.empty(), weight.name + ": backward without saved forward");
  Tensor<T> x = std::move(saved_.back());
  saved_.pop_back();
  const ConvGeometry g{in_, k_, stride_, spatial_shape(x.shape()), output_shape(spatial_shape(x.shape()))};
  const int n = x.dim(0);
  require(dy.shape() == std::vector<int>({n, out_, g.out[0], g.out[1], g.out[2]}),
          weight.name + ": gradient shape mismatch");
  const std::size_t v_out = std::size_t(g.out[0]) * g.out[1] * g.out[2];
  const std::size_t v_in = std::size_t(g.in[0]) * g.in[1] * g.in[2];
  const auto& kt = simd::kernels<T>();
  const bool pointwise = k_ == 1 && stride_ == Stride3{1, 1, 1};

  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(x.shape());
  std::vector<T> col;
  std::vector<T> dcol;
  const std::size_t rows_per_chunk =
      std::max<std::size_t>(1, kColBudget / (2 * g.ksize() * std::size_t(g.out[2])));

  for (int b = 0; b < n; ++b) {
    const T* xb = x.data() + std::size_t(b) * in_ * v_in;
    const T* dyb = dy.data() + std::size_t(b) * out_ * v_out;
    if (with_bias_) {
      for (int c = 0; c < out_; ++c) {
        const T* d = dyb + std::size_t(c) * v_out;
        double s = 0;
        for (std::size_t i = 0; i < v_out; ++i) s += d[i];
        bias.grad[c] += T(s);
      }
    }
    if (pointwise) {
      kt.gemm(false, true, out_, in_, v_out, T(1), dyb, v_out, xb, v_in, T(1), weight.grad.data(),
              in_);
      if (need_dx) {
        kt.gemm(true, false, in_, v_out, out_, T(1), weight.value.data(), in_, dyb, v_out, T(0),
                dx.data() + std::size_t(b) * in_ * v_in, v_in);
      }
      continue;
    }
    for (std::size_t r0 = 0; r0 < g.rows(); r0 += rows_per_chunk) {
      const std::size_t nr = std::min(rows_per_chunk, g.rows() - r0);
      const std::size_t vc = nr * g.out[2];
      col.resize(g.ksize() * vc);
      im2col(g, xb, r0, nr, col.data());
      kt.gemm(false, true, out_, g.ksize(), vc, T(1), dyb + r0 * g.out[2], v_out, col.data(), vc,
              T(1), weight.grad.data(), g.ksize());
      if (need_dx) {
        dcol.resize(g.ksize() * vc);
        kt.gemm(true, false, g.ksize(), vc, out_, T(1), weight.value.data(), g.ksize(),
                dyb + r0 * g.out[2], v_out, T(0), dcol.data(), vc);
        col2im(g, dcol.data(), r0, nr, dx.data() + std::size_t(b) * in_ * v_in);
      }
    }
  }
  return dx;
}

template <typename T>
void Conv3d<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&weight);
  if (with_bias_) refs.params.push_back(&bias);
}

template <typename T>
void Conv3d<T>::init_normal(std::mt19937_64& rng, double stddev, double bias_value) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& w : weight.value.storage()) w = T(dist(rng));
  bias.value.fill(T(bias_value));
}

template <typename T>
void Conv3d<T>::init_kaiming(std::mt19937_64& rng) {
  // fan-out mode with ReLU gain
  const double fan_out = double(out_) * k_ * k_ * k_;
  init_normal(rng, std::sqrt(2.0 / fan_out));
}

// ------------------------------------------------------------ BatchNorm3d

template <typename T>
BatchNorm3d<T>::BatchNorm3d(std::string name, int channels, double momentum, double eps)
    : gamma(make_param<T>(name + ".gamma", {channels}, T(1))),
      beta(make_param<T>(name + ".beta", {channels})),
      running_mean(make_param<T>(name + ".running_mean", {channels})),
      running_var(make_param<T>(name + ".running_var", {channels}, T(1))),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward(const Tensor<T>& x, bool train) {
  check_5d(x.shape(), channels_, gamma.name.c_str());
  const int n = x.dim(0);
  const std::size_t s = x.stride0() / std::size_t(channels_);
  const std::size_t m = std::size_t(n) * s;
  Tensor<T> y(x.shape());

  if (!train) {
    for (int c = 0; c < channels_; ++c) {
      const T inv = T(1.0 / std::sqrt(double(running_var.value[c]) + eps_));
      const T scale = gamma.value[c] * inv;
      const T shift = beta.value[c] - running_mean.value[c] * scale;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (std::size_t(b) * channels_ + c) * s;
        for (std::size_t i = 0; i < s; ++i) y[off + i] = x[off + i] * scale + shift;
      }
    }
    return y;
  }

  Saved saved{Tensor<T>(x.shape()), std::vector<T>(channels_)};
  for (int c = 0; c < channels_; ++c) {
    double sum = 0;
    double sq = 0;
    for (int b = 0; b < n; ++b) {
      const T* xc = x.data() + (std::size_t(b) * channels_ + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        sum += xc[i];
        sq += double(xc[i]) * xc[i];
      }
    }
    const double mean = sum / double(m);
    const double var = std::max(0.0, sq / double(m) - mean * mean);
    const double inv = 1.0 / std::sqrt(var + eps_);
    saved.inv_std[c] = T(inv);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (std::size_t(b) * channels_ + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        const T xh = T((x[off + i] - mean) * inv);
        saved.x_hat[off + i] = xh;
        y[off + i] = gamma.value[c] * xh + beta.value[c];
      }
    }
    const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
    running_mean.value[c] = T((1 - momentum_) * running_mean.value[c] + momentum_ * mean);
    running_var.value[c] = T((1 - momentum_) * running_var.value[c] + momentum_ * unbiased);
  }
  if (g_recording) saved_.push_back(std::move(saved));
  return y;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>& dy) {
  require(!saved_.empty(), gamma.name + ": backward without saved forward");
  Saved saved = std::move(saved_.back());
  saved_.pop_back();
  const auto& xh = saved.x_hat;
  require(dy.shape() == xh.shape(), gamma.name + ": gradient shape mismatch");
  const int n = dy.dim(0);
  const std::size_t s = dy.stride0() / std::size_t(channels_);
  const double m = double(n) * double(s);
  Tensor<T> dx(dy.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0;
    double sum_dy_xh = 0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (std::size_t(b) * channels_ + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xh += double(dy[off + i]) * xh[off + i];
      }
    }
    gamma.grad[c] += T(sum_dy_xh);
    beta.grad[c] += T(sum_dy);
    const double k = double(gamma.value[c]) * saved.inv_std[c] / m;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (std::size_t(b) * channels_ + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        dx[off + i] = T(k * (m * dy[off + i] - sum_dy - xh[off + i] * sum_dy_xh));
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm3d<T>::collect(ParamRefs<T>& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
  refs.buffers.push_back(&running_mean);
  refs.buffers.push_back(&running_var);
}

// ------------------------------------------------------------------- Relu

template <typename T>
Tensor<T> Relu<T>::forward(Tensor<T> x, bool train) {
  simd::kernels<T>().relu(x.size(), x.data(), x.data());
  if (train && g_recording) saved_.push_back(x);
  return x;
}

template <typename T>
Tensor<T> Relu<T>::backward(Tensor<T> dy) {
  require(!saved_.empty(), "relu: backward without saved forward");
  Tensor<T> y = std::move(saved_.back());
  saved_.pop_back();
  require(y.shape() == dy.shape(), "relu: gradient shape mismatch");
  simd::kernels<T>().relu_backward(dy.size(), y.data(), dy.data(), dy.data());
  return dy;
}

// -------------------------------------------------------------- MaxPool3d

template <typename T>
Shape3 MaxPool3d<T>::output_shape(const Shape3& in) const {
  return {conv_out(in[0], 3, stride_[0]), conv_out(in[1], 3, stride_[1]),
          conv_out(in[2], 3, stride_[2])};
}

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& x, bool train) {
  require(x.rank() == 5, "maxpool: expected 5D input");
  const Shape3 in = spatial_shape(x.shape());
  const Shape3 out = output_shape(in);
  const int planes = x.dim(0) * x.dim(1);
  Tensor<T> y({x.dim(0), x.dim(1), out[0], out[1], out[2]});
  Saved saved{x.shape(), std::vector<std::uint32_t>(y.size())};
  const std::size_t v_in = std::size_t(in[0]) * in[1] * in[2];
  const std::size_t v_out = std::size_t(out[0]) * out[1] * out[2];
  for (int pl = 0; pl < planes; ++pl) {
    const T* xp = x.data() + std::size_t(pl) * v_in;
    std::size_t o = std::size_t(pl) * v_out;
    for (int oz = 0; oz < out[0]; ++oz) {
      for (int oy = 0; oy < out[1]; ++oy) {
        for (int ox = 0; ox < out[2]; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t arg = 0;
          for (int dz = -1; dz <= 1; ++dz) {
            const int iz = oz * stride_[0] + dz;
            if (iz < 0 || iz >= in[0]) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              const int iy = oy * stride_[1] + dy;
              if (iy < 0 || iy >= in[1]) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                const int ix = ox * stride_[2] + dx;
                if (ix < 0 || ix >= in[2]) continue;
                const std::uint32_t idx = std::uint32_t((std::size_t(iz) * in[1] + iy) * in[2] + ix);
                if (xp[idx] > best) {
                  best = xp[idx];
                  arg = idx;
                }
              }
            }
          }
          y[o] = best;
          saved.argmax[o] = arg;
        }
      }
    }
  }
  if (train && g_recording) saved_.push_back(std::move(saved));
  return y;
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& dy) {
  require(!saved_.empty(), "maxpool: backward without saved forward");
  Saved saved = std::move(saved_.back());
  saved_.pop_back();
  Tensor<T> dx(saved.in_shape);
  const std::size_t planes = std::size_t(dy.dim(0)) * dy.dim(1);
  const std::size_t v_out = dy.size() / planes;
  const std::size_t v_in = dx.size() / planes;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t o = 0; o < v_out; ++o) {
      dx[pl * v_in + saved.argmax[pl * v_out + o]] += dy[pl * v_out + o];
    }
  }
  return dx;
}

// ------------------------------------------------------------- resize

namespace {

struct AxisWeights {
  std::vector<int> i0;
  std::vector<int> i1;
  std::vector<double> w1;
};

AxisWeights axis_weights(int in, int out) {
  AxisWeights a{std::vector<int>(out), std::vector<int>(out), std::vector<double>(out)};
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = int(std::floor(src));
    if (lo >= in - 1) {
      a.i0[o] = a.i1[o] = in - 1;
      a.w1[o] = 0;
    } else {
      a.i0[o] = lo;
      a.i1[o] = lo + 1;
      a.w1[o] = src - lo;
    }
  }
  return a;
}

}  // namespace

template <typename T>
Tensor<T> resize_trilinear(const Tensor<T>& x, const Shape3& target) {
  require(x.rank() == 5, "resize_trilinear: expected 5D input");
  const Shape3 in = spatial_shape(x.shape());
  const auto wz = axis_weights(in[0], target[0]);
  const auto wy = axis_weights(in[1], target[1]);
  const auto wx = axis_weights(in[2], target[2]);
  Tensor<T> y({x.dim(0), x.dim(1), target[0], target[1], target[2]});
  const std::size_t planes = std::size_t(x.dim(0)) * x.dim(1);
  const std::size_t v_in = std::size_t(in[0]) * in[1] * in[2];
  const std::size_t v_out = std::size_t(target[0]) * target[1] * target[2];
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* xp = x.data() + pl * v_in;
    T* yp = y.data() + pl * v_out;
    auto at = [&](int z, int yy, int xx) { return double(xp[(std::size_t(z) * in[1] + yy) * in[2] + xx]); };
    std::size_t o = 0;
    for (int z = 0; z < target[0]; ++z) {
      const double fz = wz.w1[z];
      for (int yy = 0; yy < target[1]; ++yy) {
        const double fy = wy.w1[yy];
        for (int xx = 0; xx < target[2]; ++xx, ++o) {
          const double fx = wx.w1[xx];
          const int z0 = wz.i0[z], z1 = wz.i1[z], y0 = wy.i0[yy], y1 = wy.i1[yy];
          const int x0 = wx.i0[xx], x1 = wx.i1[xx];
          const double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x1) * fx;
          const double c01 = at(z0, y1, x0) * (1 - fx) + at(z0, y1, x1) * fx;
          const double c10 = at(z1, y0, x0) * (1 - fx) + at(z1, y0, x1) * fx;
          const double c11 = at(z1, y1, x0) * (1 - fx) + at(z1, y1, x1) * fx;
          const double c0 = c00 * (1 - fy) + c01 * fy;
          const double c1 = c10 * (1 - fy) + c11 * fy;
          yp[o] = T(c0 * (1 - fz) + c1 * fz);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> resize_trilinear_backward(const Tensor<T>& dy, const Shape3& source) {
  require(dy.rank() == 5, "resize_trilinear_backward: expected 5D input");
  const Shape3 out = spatial_shape(dy.shape());
  const auto wz = axis_weights(source[0], out[0]);
  const auto wy = axis_weights(source[1], out[1]);
  const auto wx = axis_weights(source[2], out[2]);
  Tensor<T> dx({dy.dim(0), dy.dim(1), source[0], source[1], source[2]});
  const std::size_t planes = std::size_t(dy.dim(0)) * dy.dim(1);
  const std::size_t v_in = std::size_t(source[0]) * source[1] * source[2];
  const std::size_t v_out = std::size_t(out[0]) * out[1] * out[2];
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* gp = dy.data() + pl * v_out;
    T* xp = dx.data() + pl * v_in;
    auto acc = [&](int z, int yy, int xx, double v) {
      xp[(std::size_t(z) * source[1] + yy) * source[2] + xx] += T(v);
    };
    std::size_t o = 0;
    for (int z = 0; z < out[0]; ++z) {
      const double fz = wz.w1[z];
      for (int yy = 0; yy < out[1]; ++yy) {
        const double fy = wy.w1[yy];
        for (int xx = 0; xx < out[2]; ++xx, ++o) {
          const double fx = wx.w1[xx];
          const double g = gp[o];
          const int z0 = wz.i0[z], z1 = wz.i1[z], y0 = wy.i0[yy], y1 = wy.i1[yy];
          const int x0 = wx.i0[xx], x1 = wx.i1[xx];
          acc(z0, y0, x0, g * (1 - fz) * (1 - fy) * (1 - fx));
          acc(z0, y0, x1, g * (1 - fz) * (1 - fy) * fx);
          acc(z0, y1, x0, g * (1 - fz) * fy * (1 - fx));
          acc(z0, y1, x1, g * (1 - fz) * fy * fx);
          acc(z1, y0, x0, g * fz * (1 - fy) * (1 - fx));
          acc(z1, y0, x1, g * fz * (1 - fy) * fx);
          acc(z1, y1, x0, g * fz * fy * (1 - fx));
          acc(z1, y1, x1, g * fz * fy * fx);
        }
      }
    }
  }
  return dx;
}

template <typename T>
void add_inplace(Tensor<T>& y, const Tensor<T>& x) {
  require(y.shape() == x.shape(), "add: shape mismatch " + shape_string(y.shape()) + " vs " +
                                      shape_string(x.shape()));
  simd::kernels<T>().axpy(y.size(), T(1), x.data(), y.data());
}

template class Conv3d<float>;
template class Conv3d<double>;
template class BatchNorm3d<float>;
template class BatchNorm3d<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool3d<float>;
template class MaxPool3d<double>;
template Tensor<float> resize_trilinear(const Tensor<float>&, const Shape3&);
template Tensor<double> resize_trilinear(const Tensor<double>&, const Shape3&);
template Tensor<float> resize_trilinear_backward(const Tensor<float>&, const Shape3&);
template Tensor<double> resize_trilinear_backward(const Tensor<double>&, const Shape3&);
template void add_inplace(Tensor<float>&, const Tensor<float>&);
template void add_inplace(Tensor<double>&, const Tensor<double>&);

}  // namespace cade::nn
