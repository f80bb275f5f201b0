#include "cade/detector.hpp"

#include <algorithm>
#include <cmath>

#include "cade/json_reader.hpp"

namespace cade {

// ---------------------------------------------------------- configuration

std::array<std::array<double, 3>, kNumLevels> NetworkConfig::level_strides() const {
  std::array<std::array<double, 3>, kNumLevels> out{};
  for (int a = 0; a < 3; ++a) {
    double s = 1;
    for (const auto& st : stage_strides) s *= st[a];
    // P2 sits after stem and pool; P3 and P4 after stages 2 and 3.
    out[0][a] = double(stage_strides[0][a]) * stage_strides[1][a];
    out[1][a] = out[0][a] * stage_strides[2][a];
    out[2][a] = s;
    out[3][a] = s * extra_strides[0][a];
    out[4][a] = out[3][a] * extra_strides[1][a];
  }
  return out;
}

void NetworkConfig::finalize() {
  if (depth != 14 && depth != 41) {
    throw ConfigError("network.depth", "unsupported depth " + std::to_string(depth) + " (14 or 41)");
  }
  if (in_channels < 1) throw ConfigError("network.in_channels", "must be positive");
  if (stem_channels < 1) throw ConfigError("network.stem_channels", "must be positive");
  if (stage_width < 1) throw ConfigError("network.stage_width", "must be positive");
  if (pyramid_channels < 1) throw ConfigError("network.pyramid_channels", "must be positive");
  if (subnet_channels < 1) throw ConfigError("network.subnet_channels", "must be positive");
  if (subnet_depth < 0) throw ConfigError("network.subnet_depth", "must be nonnegative");
  if (!(prior_probability > 0 && prior_probability < 1)) {
    throw ConfigError("network.prior_probability", "must be in (0,1)");
  }
  for (const auto& s : stage_strides) {
    for (int v : s) {
      if (v < 1) throw ConfigError("network.stage_strides", "must be positive");
    }
  }
  for (const auto& s : extra_strides) {
    for (int v : s) {
      if (v < 1) throw ConfigError("network.extra_strides", "must be positive");
    }
  }
  anchors.strides = level_strides();
  anchors.validate();
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"depth", c.depth},
       {"in_channels", c.in_channels},
       {"stem_channels", c.stem_channels},
       {"stage_width", c.stage_width},
       {"pyramid_channels", c.pyramid_channels},
       {"subnet_channels", c.subnet_channels},
       {"subnet_depth", c.subnet_depth},
       {"stage_strides", c.stage_strides},
       {"extra_strides", c.extra_strides},
       {"prior_probability", c.prior_probability},
       {"bn_momentum", c.bn_momentum},
       {"anchors", c.anchors}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  NetworkConfig c;
  StrictObject obj(j, prefix);
  obj.read("depth", c.depth);
  obj.read("in_channels", c.in_channels);
  obj.read("stem_channels", c.stem_channels);
  obj.read("stage_width", c.stage_width);
  obj.read("pyramid_channels", c.pyramid_channels);
  obj.read("subnet_channels", c.subnet_channels);
  obj.read("subnet_depth", c.subnet_depth);
  obj.read("stage_strides", c.stage_strides);
  obj.read("extra_strides", c.extra_strides);
  obj.read("prior_probability", c.prior_probability);
  obj.read("bn_momentum", c.bn_momentum);
  if (const auto* a = obj.find("anchors")) {
    const auto derived = c.anchors.strides;
    c.anchors = anchor_config_from_json(*a, obj.path("anchors"));
    if (!a->contains("strides")) c.anchors.strides = derived;
  }
  obj.finish();
  const bool explicit_strides = j.contains("anchors") && j["anchors"].contains("strides");
  const auto given = c.anchors.strides;
  c.finalize();
  if (explicit_strides && given != c.anchors.strides) {
    throw ConfigError(prefix + ".anchors.strides", "inconsistent with the network strides");
  }
  return c;
}

void to_json(nlohmann::json& j, const PredictConfig& c) {
  j = {{"score_threshold", c.score_threshold},
       {"nms_threshold", c.nms_threshold},
       {"max_detections", c.max_detections},
       {"pre_nms_top_k", c.pre_nms_top_k}};
}

PredictConfig predict_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  PredictConfig c;
  StrictObject obj(j, prefix);
  obj.read("score_threshold", c.score_threshold);
  obj.read("nms_threshold", c.nms_threshold);
  obj.read("max_detections", c.max_detections);
  obj.read("pre_nms_top_k", c.pre_nms_top_k);
  obj.finish();
  if (c.max_detections < 1) throw ConfigError(obj.path("max_detections"), "must be positive");
  if (c.pre_nms_top_k < 1) throw ConfigError(obj.path("pre_nms_top_k"), "must be positive");
  return c;
}

// --------------------------------------------------------- residual blocks

namespace {

template <typename T>
class BasicBlock final : public ResidualBlock<T> {
 public:
  BasicBlock(const std::string& name, int in, int out, Stride3 stride, double momentum,
             std::mt19937_64& rng)
      : conv1_(name + ".conv1", in, out, 3, stride, false),
        bn1_(name + ".bn1", out, momentum),
        conv2_(name + ".conv2", out, out, 3, {1, 1, 1}, false),
        bn2_(name + ".bn2", out, momentum) {
    conv1_.init_kaiming(rng);
    conv2_.init_kaiming(rng);
    if (in != out || stride != Stride3{1, 1, 1}) {
      down_conv_ = std::make_unique<nn::Conv3d<T>>(name + ".down", in, out, 1, stride, false);
      down_bn_ = std::make_unique<nn::BatchNorm3d<T>>(name + ".down_bn", out, momentum);
      down_conv_->init_kaiming(rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    h = bn2_.forward(conv2_.forward(h, train), train);
    if (down_conv_) {
      nn::add_inplace(h, down_bn_->forward(down_conv_->forward(x, train), train));
    } else {
      nn::add_inplace(h, x);
    }
    return relu2_.forward(std::move(h), train);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> d = relu2_.backward(dy);
    Tensor<T> dh = conv2_.backward(bn2_.backward(d));
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(std::move(dh))));
    if (down_conv_) {
      nn::add_inplace(dx, down_conv_->backward(down_bn_->backward(d)));
    } else {
      nn::add_inplace(dx, d);
    }
    return dx;
  }

  void collect(nn::ParamRefs<T>& refs) override {
    conv1_.collect(refs);
    bn1_.collect(refs);
    conv2_.collect(refs);
    bn2_.collect(refs);
    if (down_conv_) {
      down_conv_->collect(refs);
      down_bn_->collect(refs);
    }
  }

 private:
  nn::Conv3d<T> conv1_;
  nn::BatchNorm3d<T> bn1_;
  nn::Relu<T> relu1_;
  nn::Conv3d<T> conv2_;
  nn::BatchNorm3d<T> bn2_;
  nn::Relu<T> relu2_;
  std::unique_ptr<nn::Conv3d<T>> down_conv_;
  std::unique_ptr<nn::BatchNorm3d<T>> down_bn_;
};

template <typename T>
class Bottleneck final : public ResidualBlock<T> {
 public:
  static constexpr int kExpansion = 4;

  Bottleneck(const std::string& name, int in, int mid, Stride3 stride, double momentum,
             std::mt19937_64& rng)
      : conv1_(name + ".conv1", in, mid, 1, {1, 1, 1}, false),
        bn1_(name + ".bn1", mid, momentum),
        conv2_(name + ".conv2", mid, mid, 3, stride, false),
        bn2_(name + ".bn2", mid, momentum),
        conv3_(name + ".conv3", mid, mid * kExpansion, 1, {1, 1, 1}, false),
        bn3_(name + ".bn3", mid * kExpansion, momentum) {
    conv1_.init_kaiming(rng);
    conv2_.init_kaiming(rng);
    conv3_.init_kaiming(rng);
    const int out = mid * kExpansion;
    if (in != out || stride != Stride3{1, 1, 1}) {
      down_conv_ = std::make_unique<nn::Conv3d<T>>(name + ".down", in, out, 1, stride, false);
      down_bn_ = std::make_unique<nn::BatchNorm3d<T>>(name + ".down_bn", out, momentum);
      down_conv_->init_kaiming(rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    h = relu2_.forward(bn2_.forward(conv2_.forward(h, train), train), train);
    h = bn3_.forward(conv3_.forward(h, train), train);
    if (down_conv_) {
      nn::add_inplace(h, down_bn_->forward(down_conv_->forward(x, train), train));
    } else {
      nn::add_inplace(h, x);
    }
    return relu3_.forward(std::move(h), train);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> d = relu3_.backward(dy);
    Tensor<T> dh = conv3_.backward(bn3_.backward(d));
    dh = conv2_.backward(bn2_.backward(relu2_.backward(std::move(dh))));
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(std::move(dh))));
    if (down_conv_) {
      nn::add_inplace(dx, down_conv_->backward(down_bn_->backward(d)));
    } else {
      nn::add_inplace(dx, d);
    }
    return dx;
  }

  void collect(nn::ParamRefs<T>& refs) override {
    conv1_.collect(refs);
    bn1_.collect(refs);
    conv2_.collect(refs);
    bn2_.collect(refs);
    conv3_.collect(refs);
    bn3_.collect(refs);
    if (down_conv_) {
      down_conv_->collect(refs);
      down_bn_->collect(refs);
    }
  }

 private:
  nn::Conv3d<T> conv1_;
  nn::BatchNorm3d<T> bn1_;
  nn::Relu<T> relu1_;
  nn::Conv3d<T> conv2_;
  nn::BatchNorm3d<T> bn2_;
  nn::Relu<T> relu2_;
  nn::Conv3d<T> conv3_;
  nn::BatchNorm3d<T> bn3_;
  nn::Relu<T> relu3_;
  std::unique_ptr<nn::Conv3d<T>> down_conv_;
  std::unique_ptr<nn::BatchNorm3d<T>> down_bn_;
};

Shape3 ceil_div(const Shape3& s, const Stride3& st) {
  return {(s[0] + st[0] - 1) / st[0], (s[1] + st[1] - 1) / st[1], (s[2] + st[2] - 1) / st[2]};
}

}  // namespace

// ---------------------------------------------------------------- backbone

template <typename T>
Backbone3d<T>::Backbone3d(const NetworkConfig& config, std::mt19937_64& rng)
    : config_(config),
      stem_conv_("backbone.stem.conv", config.in_channels, config.stem_channels, 3,
                 config.stage_strides[0], false),
      stem_bn_("backbone.stem.bn", config.stem_channels, config.bn_momentum),
      pool_(config.stage_strides[1]) {
  stem_conv_.init_kaiming(rng);
  const bool bottleneck = config.depth == 41;
  const std::array<int, 3> blocks = bottleneck ? std::array<int, 3>{3, 4, 6} : std::array<int, 3>{2, 2, 2};
  const std::array<int, 3> widths{config.stage_width, 2 * config.stage_width, 4 * config.stage_width};
  const std::array<Stride3, 3> strides{Stride3{1, 1, 1}, config.stage_strides[2], config.stage_strides[3]};

  channels_[0] = config.stem_channels;
  int in = config.stem_channels;
  for (int s = 0; s < 3; ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      const std::string name = "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const Stride3 stride = b == 0 ? strides[s] : Stride3{1, 1, 1};
      if (bottleneck) {
        stages_[s].push_back(std::make_unique<Bottleneck<T>>(name, in, widths[s], stride, config.bn_momentum, rng));
        in = widths[s] * Bottleneck<T>::kExpansion;
      } else {
        stages_[s].push_back(std::make_unique<BasicBlock<T>>(name, in, widths[s], stride, config.bn_momentum, rng));
        in = widths[s];
      }
    }
    channels_[s + 1] = in;
  }
}

template <typename T>
std::array<Shape3, 4> Backbone3d<T>::stage_shapes(const Shape3& input) const {
  std::array<Shape3, 4> out{};
  Shape3 s = input;
  for (int i = 0; i < 4; ++i) {
    s = ceil_div(s, config_.stage_strides[i]);
    out[i] = s;
  }
  return out;
}

template <typename T>
BackboneOutput<T> Backbone3d<T>::forward(const Tensor<T>& x, bool train) {
  BackboneOutput<T> out;
  out.c1 = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x, train), train), train);
  Tensor<T> h = pool_.forward(out.c1, train);
  std::array<Tensor<T>*, 3> dst{&out.c2, &out.c3, &out.c4};
  for (int s = 0; s < 3; ++s) {
    for (auto& block : stages_[s]) h = block->forward(h, train);
    *dst[s] = h;
  }
  return out;
}

template <typename T>
void Backbone3d<T>::backward(const Tensor<T>& dc1, Tensor<T> dc2, Tensor<T> dc3, Tensor<T> dc4) {
  Tensor<T> d = std::move(dc4);
  std::array<Tensor<T>*, 2> skip{&dc3, &dc2};
  for (int s = 2; s >= 0; --s) {
    for (auto it = stages_[s].rbegin(); it != stages_[s].rend(); ++it) d = (*it)->backward(d);
    if (s > 0) nn::add_inplace(d, *skip[2 - s]);
  }
  d = pool_.backward(d);
  if (!dc1.empty()) nn::add_inplace(d, dc1);
  stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(std::move(d))), false);
}

template <typename T>
void Backbone3d<T>::collect(nn::ParamRefs<T>& refs) {
  stem_conv_.collect(refs);
  stem_bn_.collect(refs);
  for (auto& stage : stages_) {
    for (auto& block : stage) block->collect(refs);
  }
}

// ----------------------------------------------------------------- pyramid

template <typename T>
FeaturePyramid<T>::FeaturePyramid(const NetworkConfig& config, const std::array<int, 4>& ch,
                                  std::mt19937_64& rng)
    : lateral2_("pyramid.lateral2", ch[1], config.pyramid_channels, 1, {1, 1, 1}, true),
      lateral3_("pyramid.lateral3", ch[2], config.pyramid_channels, 1, {1, 1, 1}, true),
      lateral4_("pyramid.lateral4", ch[3], config.pyramid_channels, 1, {1, 1, 1}, true),
      p5_conv_("pyramid.p5", ch[3], config.pyramid_channels, 3, config.extra_strides[0], true),
      p6_conv_("pyramid.p6", config.pyramid_channels, config.pyramid_channels, 3,
               config.extra_strides[1], true) {
  for (auto* c : {&lateral2_, &lateral3_, &lateral4_, &p5_conv_, &p6_conv_}) c->init_kaiming(rng);
}

template <typename T>
std::array<Tensor<T>, kNumLevels> FeaturePyramid<T>::forward(const Tensor<T>& c2, const Tensor<T>& c3,
                                                             const Tensor<T>& c4, bool train) {
  std::array<Tensor<T>, kNumLevels> p;
  p[2] = lateral4_.forward(c4, train);
  p[1] = lateral3_.forward(c3, train);
  nn::add_inplace(p[1], nn::resize_trilinear(p[2], nn::spatial_shape(p[1].shape())));
  p[0] = lateral2_.forward(c2, train);
  nn::add_inplace(p[0], nn::resize_trilinear(p[1], nn::spatial_shape(p[0].shape())));
  p[3] = p5_conv_.forward(c4, train);
  p[4] = p6_conv_.forward(p5_relu_.forward(p[3], train), train);
  if (train && nn::grad_recording()) {
    saved_shapes_.push_back(nn::spatial_shape(p[1].shape()));
    saved_shapes_.push_back(nn::spatial_shape(p[2].shape()));
  }
  return p;
}

template <typename T>
std::array<Tensor<T>, 3> FeaturePyramid<T>::backward(std::array<Tensor<T>, kNumLevels> dp) {
  require(saved_shapes_.size() >= 2, "pyramid: backward without saved forward");
  const Shape3 p4_shape = saved_shapes_.back();
  saved_shapes_.pop_back();
  const Shape3 p3_shape = saved_shapes_.back();
  saved_shapes_.pop_back();

  Tensor<T> dp5 = std::move(dp[3]);
  nn::add_inplace(dp5, p5_relu_.backward(p6_conv_.backward(dp[4])));
  Tensor<T> dc4 = p5_conv_.backward(dp5);

  Tensor<T> dc2 = lateral2_.backward(dp[0]);
  Tensor<T> dp3 = std::move(dp[1]);
  nn::add_inplace(dp3, nn::resize_trilinear_backward(dp[0], p3_shape));
  Tensor<T> dc3 = lateral3_.backward(dp3);
  Tensor<T> dp4 = std::move(dp[2]);
  nn::add_inplace(dp4, nn::resize_trilinear_backward(dp3, p4_shape));
  nn::add_inplace(dc4, lateral4_.backward(dp4));
  return {std::move(dc2), std::move(dc3), std::move(dc4)};
}

template <typename T>
void FeaturePyramid<T>::collect(nn::ParamRefs<T>& refs) {
  for (auto* c : {&lateral2_, &lateral3_, &lateral4_, &p5_conv_, &p6_conv_}) c->collect(refs);
}

// ------------------------------------------------------------------ subnet

template <typename T>
Subnet<T>::Subnet(std::string name, int in_channels, int hidden, int depth, int outputs,
                  double final_bias, std::mt19937_64& rng)
    : head_(name + ".head", depth > 0 ? hidden : in_channels, outputs, 3, {1, 1, 1}, true) {
  convs_.reserve(depth);
  relus_.resize(depth);
  for (int i = 0; i < depth; ++i) {
    convs_.emplace_back(name + ".conv" + std::to_string(i), i == 0 ? in_channels : hidden, hidden, 3,
                        Stride3{1, 1, 1}, true);
    convs_.back().init_normal(rng, 0.01);
  }
  head_.init_normal(rng, 0.01, final_bias);
}

template <typename T>
Tensor<T> Subnet<T>::forward(const Tensor<T>& x, bool train) {
  if (convs_.empty()) return head_.forward(x, train);
  Tensor<T> h = relus_[0].forward(convs_[0].forward(x, train), train);
  for (std::size_t i = 1; i < convs_.size(); ++i) h = relus_[i].forward(convs_[i].forward(h, train), train);
  return head_.forward(h, train);
}

template <typename T>
Tensor<T> Subnet<T>::backward(const Tensor<T>& dy) {
  Tensor<T> d = head_.backward(dy);
  for (std::size_t i = convs_.size(); i-- > 0;) d = convs_[i].backward(relus_[i].backward(std::move(d)));
  return d;
}

template <typename T>
void Subnet<T>::collect(nn::ParamRefs<T>& refs) {
  for (auto& c : convs_) c.collect(refs);
  head_.collect(refs);
}

// ---------------------------------------------------------------- detector

template <typename T>
std::array<Shape3, kNumLevels> DetectorOutput<T>::level_shapes() const {
  std::array<Shape3, kNumLevels> s{};
  for (int l = 0; l < kNumLevels; ++l) s[l] = nn::spatial_shape(class_logits[l].shape());
  return s;
}

template <typename T>
std::size_t DetectorOutput<T>::anchors_per_sample() const {
  std::size_t n = 0;
  for (const auto& t : class_logits) n += t.stride0();
  return n;
}

namespace {

NetworkConfig finalized(NetworkConfig c) {
  c.finalize();
  return c;
}

double prior_bias(double pi) { return -std::log((1.0 - pi) / pi); }

}  // namespace

template <typename T>
RetinaNet3d<T>::RetinaNet3d(NetworkConfig config, std::uint64_t seed)
    : config_(finalized(std::move(config))),
      rng_(seed),
      backbone_(config_, rng_),
      pyramid_(config_, backbone_.stage_channels(), rng_),
      class_net_("class_subnet", config_.pyramid_channels, config_.subnet_channels, config_.subnet_depth,
                 config_.anchors_per_position(), prior_bias(config_.prior_probability), rng_),
      box_net_("box_subnet", config_.pyramid_channels, config_.subnet_channels, config_.subnet_depth,
               6 * config_.anchors_per_position(), 0.0, rng_) {
  backbone_.collect(refs_);
  pyramid_.collect(refs_);
  class_net_.collect(refs_);
  box_net_.collect(refs_);
}

template <typename T>
std::array<Shape3, kNumLevels> RetinaNet3d<T>::level_shapes(const Shape3& input) const {
  const auto c = backbone_.stage_shapes(input);
  const Shape3 p5 = ceil_div(c[3], config_.extra_strides[0]);
  const Shape3 p6 = ceil_div(p5, config_.extra_strides[1]);
  return {c[1], c[2], c[3], p5, p6};
}

template <typename T>
DetectorOutput<T> RetinaNet3d<T>::forward(const Tensor<T>& input, bool train) {
  if (input.rank() != 5 || input.dim(1) != config_.in_channels) {
    fail(ErrorKind::InvalidInput, "detector input must be (N," + std::to_string(config_.in_channels) +
                                      ",D,H,W), got " + shape_string(input.shape()));
  }
  auto c = backbone_.forward(input, train);
  auto p = pyramid_.forward(c.c2, c.c3, c.c4, train);
  DetectorOutput<T> out;
  for (int l = 0; l < kNumLevels; ++l) {
    out.class_logits[l] = class_net_.forward(p[l], train);
    out.box_deltas[l] = box_net_.forward(p[l], train);
  }
  return out;
}

template <typename T>
void RetinaNet3d<T>::backward(const DetectorOutput<T>& grad) {
  std::array<Tensor<T>, kNumLevels> dp;
  for (int l = kNumLevels - 1; l >= 0; --l) {
    dp[l] = class_net_.backward(grad.class_logits[l]);
    nn::add_inplace(dp[l], box_net_.backward(grad.box_deltas[l]));
  }
  auto dc = pyramid_.backward(std::move(dp));
  backbone_.backward(Tensor<T>{}, std::move(dc[0]), std::move(dc[1]), std::move(dc[2]));
}

template <typename T>
std::array<Tensor<T>, kNumLevels> RetinaNet3d<T>::pyramid_features(const Tensor<T>& input) {
  auto c = backbone_.forward(input, false);
  return pyramid_.forward(c.c2, c.c3, c.c4, false);
}

template <typename T>
BackboneOutput<T> RetinaNet3d<T>::backbone_features(const Tensor<T>& input) {
  return backbone_.forward(input, false);
}

template <typename T>
std::size_t RetinaNet3d<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : refs_.params) n += p->value.size();
  return n;
}

template <typename T>
void RetinaNet3d<T>::zero_grad() {
  for (auto* p : refs_.params) p->grad.fill(T(0));
}

// --------------------------------------------------------------- inference

template <typename T>
std::vector<Detection> decode_detections(const DetectorOutput<T>& out, int n, const AnchorConfig& anchors,
                                         const PredictConfig& cfg, const std::string& breast_id) {
  const int a_per = anchors.anchors_per_position();
  std::vector<Detection> candidates;
  for (int l = 0; l < kNumLevels; ++l) {
    const auto& logits = out.class_logits[l];
    const auto& deltas = out.box_deltas[l];
    const Shape3 shape = nn::spatial_shape(logits.shape());
    const std::size_t vox = std::size_t(shape[0]) * shape[1] * shape[2];
    const T* lg = logits.data() + std::size_t(n) * a_per * vox;
    const T* dl = deltas.data() + std::size_t(n) * 6 * a_per * vox;

    std::vector<std::pair<double, std::size_t>> scored;  // (score, v * A + a)
    for (std::size_t v = 0; v < vox; ++v) {
      for (int a = 0; a < a_per; ++a) {
        const double s = 1.0 / (1.0 + std::exp(-double(lg[std::size_t(a) * vox + v])));
        if (s > cfg.score_threshold) scored.emplace_back(s, v * a_per + a);
      }
    }
    const std::size_t keep = std::min<std::size_t>(scored.size(), std::size_t(cfg.pre_nms_top_k));
    std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(),
                      [](const auto& x, const auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
    scored.resize(keep);
    if (scored.empty()) continue;
    const auto level_anchors = generate_anchors(l, shape, anchors);
    for (const auto& [score, idx] : scored) {
      const std::size_t v = idx / a_per;
      const int a = int(idx % a_per);
      BoxOffsets off{};
      for (int j = 0; j < 6; ++j) off[j] = double(dl[(std::size_t(a) * 6 + j) * vox + v]);
      candidates.push_back({decode_box(level_anchors[idx], off), score, breast_id});
    }
  }
  auto kept = nms(std::move(candidates), cfg.nms_threshold);
  if (kept.size() > std::size_t(cfg.max_detections)) kept.erase(kept.begin() + cfg.max_detections, kept.end());
  return kept;
}

template <typename T>
std::vector<std::vector<Detection>> predict(RetinaNet3d<T>& net, const Tensor<T>& batch,
                                            const std::vector<BreastPlacement>& placements,
                                            const PredictConfig& cfg) {
  require(batch.rank() == 5 && std::size_t(batch.dim(0)) == placements.size(),
          "predict: one placement per batch sample required");
  const auto out = net.forward(batch, false);
  std::vector<std::vector<Detection>> result;
  for (int n = 0; n < batch.dim(0); ++n) {
    auto dets = decode_detections(out, n, net.config().anchors, cfg, placements[n].breast_id);
    for (auto& d : dets) d.box = d.box.shifted(placements[n].crop_origin);
    result.push_back(std::move(dets));
  }
  return result;
}

template class Backbone3d<float>;
template class Backbone3d<double>;
template class FeaturePyramid<float>;
template class FeaturePyramid<double>;
template class Subnet<float>;
template class Subnet<double>;
template struct DetectorOutput<float>;
template struct DetectorOutput<double>;
template class RetinaNet3d<float>;
template class RetinaNet3d<double>;
template std::vector<Detection> decode_detections(const DetectorOutput<float>&, int, const AnchorConfig&,
                                                  const PredictConfig&, const std::string&);
template std::vector<Detection> decode_detections(const DetectorOutput<double>&, int, const AnchorConfig&,
                                                  const PredictConfig&, const std::string&);
template std::vector<std::vector<Detection>> predict(RetinaNet3d<float>&, const Tensor<float>&,
                                                     const std::vector<BreastPlacement>&, const PredictConfig&);
template std::vector<std::vector<Detection>> predict(RetinaNet3d<double>&, const Tensor<double>&,
                                                     const std::vector<BreastPlacement>&, const PredictConfig&);

}  // namespace cade
