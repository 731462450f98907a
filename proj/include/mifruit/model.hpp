#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mifruit/blocks.hpp"

namespace mifruit {

enum class BackboneKind { mobilenet_lite, vgg_lite };
enum class Arch { multi, single };

inline std::string_view to_string(BackboneKind k) {
  return k == BackboneKind::mobilenet_lite ? "mobilenet_lite" : "vgg_lite";
}
inline std::string_view to_string(Arch a) { return a == Arch::multi ? "multi" : "single"; }

inline BackboneKind parse_backbone(std::string_view s) {
  if (s == "mobilenet_lite") return BackboneKind::mobilenet_lite;
  if (s == "vgg_lite") return BackboneKind::vgg_lite;
  fail(ErrorKind::invalid_argument, "unknown backbone '" + std::string(s) + "'");
}

inline Arch parse_arch(std::string_view s) {
  if (s == "multi") return Arch::multi;
  if (s == "single") return Arch::single;
  fail(ErrorKind::invalid_argument, "unknown architecture '" + std::string(s) + "'");
}

inline constexpr std::size_t kFeatureDim = 128;
inline constexpr std::size_t kMinInputSize = 32;
inline constexpr std::size_t kNumClasses = 2;

/// (t, c, n, s) rows of the scaled-down inverted-residual backbone.
inline constexpr std::array<InvertedResidualSpec, 4> kMobilenetLiteStages{{
    {1, 16, 1, 1},
    {6, 24, 2, 2},
    {6, 32, 2, 2},
    {6, 64, 2, 2},
}};
inline constexpr std::size_t kMobilenetStemChannels = 16;
inline constexpr std::array<std::size_t, 3> kVggLiteChannels{32, 64, 128};

/// Feature extractor producing an N x 128 vector per image.
template <typename T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(BackboneKind kind, std::size_t in_ch, std::size_t input_hw, ParameterSet<T>& ps, const std::string& prefix,
           Prng& prng)
      : kind_(kind), in_ch_(in_ch) {
    require(input_hw >= kMinInputSize, "backbone input must be at least " + std::to_string(kMinInputSize) +
                                           "x" + std::to_string(kMinInputSize) + ", got " +
                                           std::to_string(input_hw));
    require(in_ch >= 1, "backbone needs at least one input channel");
    if (kind == BackboneKind::mobilenet_lite) {
      stem_ = ConvBnAct<T>(ps, prefix + "stem", in_ch, kMobilenetStemChannels, 3, 2, false, Activation::relu6, prng);
      std::size_t ch = kMobilenetStemChannels;
      for (std::size_t s = 0; s < kMobilenetLiteStages.size(); ++s) {
        const auto& spec = kMobilenetLiteStages[s];
        for (std::size_t r = 0; r < spec.repeats; ++r) {
          InvertedResidualSpec row = spec;
          row.first_stride = r == 0 ? spec.first_stride : 1;
          blocks_.push_back(build_inverted_residual(
              ps, prefix + "stage" + std::to_string(s + 1) + ".block" + std::to_string(r), ch, row, prng));
          ch = spec.out_channels;
        }
      }
      head_ = ConvBnAct<T>(ps, prefix + "head", ch, kFeatureDim, 1, 1, false, Activation::relu6, prng);
    } else {
      std::size_t ch = in_ch;
      for (std::size_t s = 0; s < kVggLiteChannels.size(); ++s)
        for (std::size_t j = 0; j < 2; ++j) {
          const std::string name = prefix + "stage" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1);
          convs_.emplace_back(ps, name, ch, kVggLiteChannels[s], 3, 1, 1, true, false, prng);
          ch = kVggLiteChannels[s];
        }
      fc_ = DenseLayer<T>(ps, prefix + "fc", ch, kFeatureDim, prng);
    }
  }

  BackboneKind kind() const { return kind_; }
  std::size_t input_channels() const { return in_ch_; }
  std::size_t feature_dim() const { return kFeatureDim; }
  const std::vector<InvertedResidual<T>>& blocks() const { return blocks_; }
  std::size_t conv_layer_count() const {
    return kind_ == BackboneKind::vgg_lite ? convs_.size() : 2 + 3 * blocks_.size();
  }

  /// Final feature map before global pooling (mobilenet) or after the last
  /// max-pool (vgg).
  Tensor<T> feature_map(const Tensor<T>& x, NormMode mode) {
    require(x.ndim() == 4 && x.dim(1) == in_ch_,
            "backbone expects " + std::to_string(in_ch_) + "-channel NCHW input, got " + shape_str(x.shape()));
    if (kind_ == BackboneKind::mobilenet_lite) {
      auto h = stem_(x, mode);
      for (auto& b : blocks_) h = b(h, mode);
      return head_(h, mode);
    }
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = activation(convs_[i](h), Activation::relu);
      if (i % 2 == 1) h = maxpool2d(h, 2, 2);
    }
    return h;
  }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    auto pooled = global_avg_pool(feature_map(x, mode));
    if (kind_ == BackboneKind::mobilenet_lite) return pooled;
    return activation(fc_(pooled), Activation::relu);
  }

 private:
  BackboneKind kind_ = BackboneKind::mobilenet_lite;
  std::size_t in_ch_ = 0;
  ConvBnAct<T> stem_, head_;
  std::vector<InvertedResidual<T>> blocks_;
  std::vector<ConvLayer<T>> convs_;
  DenseLayer<T> fc_;
};

template <typename T>
Backbone<T> build_mobilenet_lite(std::size_t input_ch, std::size_t input_hw, ParameterSet<T>& ps,
                                 const std::string& prefix, Prng& prng) {
  return Backbone<T>(BackboneKind::mobilenet_lite, input_ch, input_hw, ps, prefix, prng);
}

template <typename T>
Backbone<T> build_vgg_lite(std::size_t input_ch, std::size_t input_hw, ParameterSet<T>& ps, const std::string& prefix,
                           Prng& prng) {
  return Backbone<T>(BackboneKind::vgg_lite, input_ch, input_hw, ps, prefix, prng);
}

struct ModelSpec {
  BackboneKind backbone = BackboneKind::mobilenet_lite;
  Arch arch = Arch::multi;
  std::size_t image_size = 64;
  std::size_t hidden = 128;
};

/// RGB branch (+ silhouette branch for the multi-input variant), feature
/// concatenation, and a one-hidden-layer MLP producing two logits. The
/// branches are independent (no weight sharing); the rgb branch is always
/// initialised first so both variants draw identical rgb weights per seed.
template <typename T>
class FruitNet {
 public:
  explicit FruitNet(const ModelSpec& spec, Prng& prng) : spec_(spec) {
    require(spec.hidden >= 1, "hidden width must be positive");
    rgb_ = Backbone<T>(spec.backbone, 3, spec.image_size, params_, "rgb.", prng);
    std::size_t fused = kFeatureDim;
    if (spec.arch == Arch::multi) {
      sil_.emplace(spec.backbone, 1, spec.image_size, params_, "sil.", prng);
      fused += kFeatureDim;
    }
    fc1_ = DenseLayer<T>(params_, "head.fc1", fused, spec.hidden, prng);
    fc2_ = DenseLayer<T>(params_, "head.fc2", spec.hidden, kNumClasses, prng);
  }

  FruitNet(const FruitNet&) = delete;
  FruitNet& operator=(const FruitNet&) = delete;
  FruitNet(FruitNet&&) = default;
  FruitNet& operator=(FruitNet&&) = default;

  const ModelSpec& spec() const { return spec_; }
  bool is_multi_input() const { return spec_.arch == Arch::multi; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  std::size_t param_count() const { return params_.scalar_count(); }
  Backbone<T>& rgb_branch() { return rgb_; }
  Backbone<T>* sil_branch() { return sil_ ? &*sil_ : nullptr; }
  DenseLayer<T>& fc1() { return fc1_; }
  DenseLayer<T>& fc2() { return fc2_; }

  /// Logits N x 2. The silhouette batch is required exactly when the model is
  /// multi-input and must share the rgb batch's size and spatial shape.
  Tensor<T> forward(const Tensor<T>& rgb, const Tensor<T>* sil, NormMode mode) {
    require(rgb.defined() && rgb.ndim() == 4 && rgb.dim(1) == 3,
            "model_forward: rgb batch must be N x 3 x H x W");
    Tensor<T> features = rgb_(rgb, mode);
    if (sil_) {
      require(sil && sil->defined(), "model_forward: multi-input model needs a silhouette batch");
      require(sil->ndim() == 4 && sil->dim(0) == rgb.dim(0) && sil->dim(1) == 1 && sil->dim(2) == rgb.dim(2) &&
                  sil->dim(3) == rgb.dim(3),
              "model_forward: silhouette batch " + shape_str(sil->shape()) + " does not pair with rgb batch " +
                  shape_str(rgb.shape()));
      features = concat_features(features, (*sil_)(*sil, mode));
    } else {
      require(sil == nullptr || !sil->defined(), "model_forward: single-input model takes no silhouette batch");
    }
    return fc2_(activation(fc1_(features), Activation::relu));
  }

  Tensor<T> forward(const Tensor<T>& rgb, const Tensor<T>& sil, NormMode mode) { return forward(rgb, &sil, mode); }

 private:
  ModelSpec spec_;
  ParameterSet<T> params_;
  Backbone<T> rgb_;
  std::optional<Backbone<T>> sil_;
  DenseLayer<T> fc1_, fc2_;
};

template <typename T>
FruitNet<T> build_multi_input(BackboneKind kind, const Shape& rgb_shape, const Shape& sil_shape, std::size_t hidden,
                              Prng& prng) {
  require(rgb_shape.size() == 3 && rgb_shape[0] == 3, "rgb shape must be 3 x H x W");
  require(sil_shape.size() == 3 && sil_shape[0] == 1, "silhouette shape must be 1 x H x W");
  require(rgb_shape[1] == sil_shape[1] && rgb_shape[2] == sil_shape[2],
          "rgb " + shape_str(rgb_shape) + " and silhouette " + shape_str(sil_shape) + " spatial shapes differ");
  require(rgb_shape[1] == rgb_shape[2], "only square inputs are supported");
  return FruitNet<T>(ModelSpec{kind, Arch::multi, rgb_shape[1], hidden}, prng);
}

template <typename T>
FruitNet<T> build_single_input(BackboneKind kind, const Shape& rgb_shape, std::size_t hidden, Prng& prng) {
  require(rgb_shape.size() == 3 && rgb_shape[0] == 3, "rgb shape must be 3 x H x W");
  require(rgb_shape[1] == rgb_shape[2], "only square inputs are supported");
  return FruitNet<T>(ModelSpec{kind, Arch::single, rgb_shape[1], hidden}, prng);
}

template <typename T>
std::size_t param_count(const FruitNet<T>& model) {
  return model.param_count();
}

}  // namespace mifruit
