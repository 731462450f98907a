#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mifruit/init.hpp"
#include "mifruit/ops.hpp"

namespace mifruit {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Flat registry of a network's trainable parameters and non-trainable
/// buffers (batch-norm running statistics). Entries alias the layer tensors.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> param(const std::string& name, Tensor<T> t) {
    check_unique(name);
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  void buffer(const std::string& name, Tensor<T> t) {
    check_unique(name);
    buffers_.push_back({name, std::move(t)});
  }

  const std::vector<NamedTensor<T>>& params() const { return params_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }

  /// Parameters followed by buffers, in registration order.
  std::vector<NamedTensor<T>> all() const {
    auto out = params_;
    out.insert(out.end(), buffers_.begin(), buffers_.end());
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  void check_unique(const std::string& name) {
    for (const auto& p : params_) require(p.name != name, "duplicate parameter name " + name);
    for (const auto& p : buffers_) require(p.name != name, "duplicate parameter name " + name);
  }

  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

template <typename T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when followed by batch norm
  std::size_t stride = 1, pad = 0;
  bool depthwise = false;

  ConvLayer() = default;
  ConvLayer(ParameterSet<T>& ps, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t k,
            std::size_t stride_, std::size_t pad_, bool with_bias, bool depthwise_, Prng& prng)
      : stride(stride_), pad(pad_), depthwise(depthwise_) {
    if (depthwise) {
      require(in_ch == out_ch, "depthwise convolution needs equal in/out channels");
      weight = ps.param(name + ".weight", he_uniform_init<T>({out_ch, 1, k, k}, k * k, prng));
    } else {
      weight = ps.param(name + ".weight", he_uniform_init<T>({out_ch, in_ch, k, k}, in_ch * k * k, prng));
    }
    if (with_bias) bias = ps.param(name + ".bias", Tensor<T>(Shape{out_ch}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return depthwise ? depthwise_conv2d(x, weight, bias, stride, pad) : conv2d(x, weight, bias, stride, pad);
  }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta;
  RunningStats<T> stats;

  BatchNormLayer() = default;
  BatchNormLayer(ParameterSet<T>& ps, const std::string& name, std::size_t channels) : stats(channels) {
    gamma = ps.param(name + ".gamma", Tensor<T>(Shape{channels}, T(1)));
    beta = ps.param(name + ".beta", Tensor<T>(Shape{channels}));
    ps.buffer(name + ".running_mean", stats.mean);
    ps.buffer(name + ".running_var", stats.var);
  }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    return batchnorm(x, gamma, beta, stats, mode, T(kBatchNormMomentum), T(kBatchNormEps));
  }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight, bias;

  DenseLayer() = default;
  DenseLayer(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, Prng& prng) {
    weight = ps.param(name + ".weight", he_uniform_init<T>({in, out}, in, prng));
    bias = ps.param(name + ".bias", Tensor<T>(Shape{out}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return dense(x, weight, bias); }
};

/// Bias-free convolution, batch norm, activation.
template <typename T>
struct ConvBnAct {
  ConvLayer<T> conv;
  BatchNormLayer<T> bn;
  Activation act = Activation::linear;

  ConvBnAct() = default;
  ConvBnAct(ParameterSet<T>& ps, const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t k,
            std::size_t stride, bool depthwise, Activation act_, Prng& prng)
      : conv(ps, name + ".conv", in_ch, out_ch, k, stride, k / 2, false, depthwise, prng),
        bn(ps, name + ".bn", out_ch),
        act(act_) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) { return activation(bn(conv(x), mode), act); }
};

struct InvertedResidualSpec {
  std::size_t expansion = 1;  // t
  std::size_t out_channels = 16;
  std::size_t repeats = 1;
  std::size_t first_stride = 1;
};

/// expand 1x1 -> depthwise 3x3 -> linear project 1x1, with an identity skip
/// when stride == 1 and in_channels == out_channels.
template <typename T>
struct InvertedResidual {
  ConvBnAct<T> expand, depthwise, project;
  std::size_t in_channels = 0, out_channels = 0, stride = 1;

  InvertedResidual() = default;
  InvertedResidual(ParameterSet<T>& ps, const std::string& name, std::size_t in_ch, std::size_t expansion,
                   std::size_t out_ch, std::size_t stride_, Prng& prng)
      : in_channels(in_ch), out_channels(out_ch), stride(stride_) {
    require(in_ch >= 1 && expansion >= 1 && out_ch >= 1, "inverted residual: channel counts must be positive");
    require(stride == 1 || stride == 2, "inverted residual: stride must be 1 or 2");
    const std::size_t hidden = expansion * in_ch;
    expand = ConvBnAct<T>(ps, name + ".expand", in_ch, hidden, 1, 1, false, Activation::relu6, prng);
    depthwise = ConvBnAct<T>(ps, name + ".dw", hidden, hidden, 3, stride, true, Activation::relu6, prng);
    project = ConvBnAct<T>(ps, name + ".project", hidden, out_ch, 1, 1, false, Activation::linear, prng);
  }

  bool has_skip() const { return stride == 1 && in_channels == out_channels; }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    auto y = project(depthwise(expand(x, mode), mode), mode);
    return has_skip() ? add(x, y) : y;
  }
};

template <typename T>
InvertedResidual<T> build_inverted_residual(ParameterSet<T>& ps, const std::string& name, std::size_t in_ch,
                                            const InvertedResidualSpec& spec, Prng& prng) {
  return InvertedResidual<T>(ps, name, in_ch, spec.expansion, spec.out_channels, spec.first_stride, prng);
}

}  // namespace mifruit
