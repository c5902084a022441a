#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "gdm/image.hpp"
#include "gdm/tensor.hpp"

namespace gdm {

/// Architecture of the compact U-Net: three encoder stages separated by 2x2
/// max pooling, two bilinear-upsampling decoder stages with skip
/// concatenation, and a final 1x1 projection.
struct UNetSpec {
  std::vector<int> encoder_channels{32, 64, 128};
  int kernel = 3;
  int padding = 1;
  int in_channels = 1;
  int out_channels = 1;

  // Throws InvalidInput when the spec cannot describe this network.
  void validate() const;

  friend bool operator==(const UNetSpec&, const UNetSpec&) = default;
};

void to_json(nlohmann::json& j, const UNetSpec& spec);
void from_json(const nlohmann::json& j, UNetSpec& spec);

// Closed-form count: sum over conv layers of k*k*c_in*c_out + c_out.
std::size_t expected_parameter_count(const UNetSpec& spec);

// Input spatial sizes must be divisible by this (two 2x poolings).
inline constexpr int kSizeMultiple = 4;

template <typename T>
struct ParamTensor {
  std::string name;  // layer path, e.g. "enc1.conv2.weight"
  std::vector<int> shape;
  std::vector<T> values;
};

template <typename T>
using Gradients = std::vector<std::vector<T>>;  // aligned with UNet::parameters()

template <typename T>
class UNet;

/// Activations recorded by a training forward pass, consumed by backward().
template <typename T>
struct ForwardCache {
  struct Sample {
    int height = 0;
    int width = 0;
    std::vector<T> input;
    std::vector<T> enc1a, enc1;
    std::vector<T> pool1;
    std::vector<int> pool1_arg;
    std::vector<T> enc2a, enc2;
    std::vector<T> pool2;
    std::vector<int> pool2_arg;
    std::vector<T> enc3a, enc3;
    std::vector<T> cat1;  // [upsample(enc3), enc2]
    std::vector<T> dec1a, dec1;
    std::vector<T> cat2;  // [upsample(dec1), enc1]
    std::vector<T> dec2a, dec2;
    std::vector<T> output;
  };
  std::vector<Sample> samples;
};

template <typename T>
class UNet {
 public:
  UNet() = default;

  /// Allocates every layer and draws weights and biases uniformly from
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static UNet build(const UNetSpec& spec, Rng& rng);

  /// Allocates zero-initialized parameters (used when loading checkpoints).
  static UNet zeros(const UNetSpec& spec);

  const UNetSpec& spec() const { return spec_; }
  std::size_t parameter_count() const;

  std::vector<ParamTensor<T>>& parameters() { return params_; }
  const std::vector<ParamTensor<T>>& parameters() const { return params_; }

  Gradients<T> zero_gradients() const;

  /// Inference pass. Input is N x in_channels x H x W with H, W divisible by 4.
  Tensor<T> forward(const Tensor<T>& input) const;

  /// Training pass; records activations for backward().
  Tensor<T> forward(const Tensor<T>& input, ForwardCache<T>& cache) const;

  /// Accumulates d(loss)/d(parameter) into `grads` given d(loss)/d(output).
  void backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output,
                Gradients<T>& grads) const;

  /// Same architecture and values in another scalar type.
  template <typename U>
  UNet<U> cast() const {
    UNet<U> out = UNet<U>::zeros(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = out.parameters()[i].values;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<U>(params_[i].values[j]);
    }
    return out;
  }

 private:
  struct Conv {
    int weight = 0;  // index into params_
    int bias = 0;
    int in = 0;
    int out = 0;
    int kernel = 0;
  };

  void add_conv(const std::string& path, int in, int out, int kernel);
  void check_input(const Tensor<T>& input) const;
  void run_sample(const T* input, int height, int width,
                  typename ForwardCache<T>::Sample& s) const;

  UNetSpec spec_;
  std::vector<ParamTensor<T>> params_;
  std::vector<Conv> convs_;  // enc1.conv1, enc1.conv2, ..., dec2.conv2, final
};

extern template class UNet<float>;
extern template class UNet<double>;

using Model = UNet<float>;

/// Builds the default (or given) architecture with seeded initialization.
Model build_unet(const UNetSpec& spec, Rng& rng);

}  // namespace gdm
