#include "gdm/unet.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "layers.hpp"

namespace gdm {

void UNetSpec::validate() const {
  if (encoder_channels.size() != 3) {
    throw InvalidInput("U-Net needs exactly three encoder stages, got " +
                       std::to_string(encoder_channels.size()));
  }
  for (int c : encoder_channels) {
    if (c < 1) throw InvalidInput("encoder channel widths must be positive");
  }
  if (kernel != 3 || padding != 1) {
    throw InvalidInput("only 3x3 convolutions with padding 1 are supported");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw InvalidInput("in/out channel counts must be positive");
  }
}

void to_json(nlohmann::json& j, const UNetSpec& spec) {
  j = nlohmann::json{{"encoder_channels", spec.encoder_channels},
                     {"kernel", spec.kernel},
                     {"padding", spec.padding},
                     {"pool", "max2x2"},
                     {"upsample", "bilinear2x"},
                     {"in_channels", spec.in_channels},
                     {"out_channels", spec.out_channels}};
}

void from_json(const nlohmann::json& j, UNetSpec& spec) {
  j.at("encoder_channels").get_to(spec.encoder_channels);
  j.at("kernel").get_to(spec.kernel);
  j.at("padding").get_to(spec.padding);
  j.at("in_channels").get_to(spec.in_channels);
  j.at("out_channels").get_to(spec.out_channels);
}

std::size_t expected_parameter_count(const UNetSpec& spec) {
  spec.validate();
  const auto& ch = spec.encoder_channels;
  const std::size_t k2 = static_cast<std::size_t>(spec.kernel) * spec.kernel;
  auto conv = [k2](std::size_t in, std::size_t out) { return k2 * in * out + out; };
  std::size_t total = 0;
  total += conv(spec.in_channels, ch[0]) + conv(ch[0], ch[0]);
  total += conv(ch[0], ch[1]) + conv(ch[1], ch[1]);
  total += conv(ch[1], ch[2]) + conv(ch[2], ch[2]);
  total += conv(ch[2] + ch[1], ch[1]) + conv(ch[1], ch[1]);
  total += conv(ch[1] + ch[0], ch[0]) + conv(ch[0], ch[0]);
  total += static_cast<std::size_t>(ch[0]) * spec.out_channels + spec.out_channels;
  return total;
}

template <typename T>
void UNet<T>::add_conv(const std::string& path, int in, int out, int kernel) {
  Conv conv;
  conv.in = in;
  conv.out = out;
  conv.kernel = kernel;
  conv.weight = static_cast<int>(params_.size());
  params_.push_back({path + ".weight", {out, in, kernel, kernel},
                     std::vector<T>(static_cast<std::size_t>(out) * in * kernel * kernel)});
  conv.bias = static_cast<int>(params_.size());
  params_.push_back({path + ".bias", {out}, std::vector<T>(out)});
  convs_.push_back(conv);
}

template <typename T>
UNet<T> UNet<T>::zeros(const UNetSpec& spec) {
  spec.validate();
  UNet net;
  net.spec_ = spec;
  const auto& ch = spec.encoder_channels;
  const int k = spec.kernel;
  net.add_conv("enc1.conv1", spec.in_channels, ch[0], k);
  net.add_conv("enc1.conv2", ch[0], ch[0], k);
  net.add_conv("enc2.conv1", ch[0], ch[1], k);
  net.add_conv("enc2.conv2", ch[1], ch[1], k);
  net.add_conv("enc3.conv1", ch[1], ch[2], k);
  net.add_conv("enc3.conv2", ch[2], ch[2], k);
  net.add_conv("dec1.conv1", ch[2] + ch[1], ch[1], k);
  net.add_conv("dec1.conv2", ch[1], ch[1], k);
  net.add_conv("dec2.conv1", ch[1] + ch[0], ch[0], k);
  net.add_conv("dec2.conv2", ch[0], ch[0], k);
  net.add_conv("final", ch[0], spec.out_channels, 1);
  return net;
}

template <typename T>
UNet<T> UNet<T>::build(const UNetSpec& spec, Rng& rng) {
  UNet net = zeros(spec);
  for (const Conv& conv : net.convs_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(conv.in) * conv.kernel * conv.kernel);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : net.params_[conv.weight].values) v = static_cast<T>(dist(rng));
    for (auto& v : net.params_[conv.bias].values) v = static_cast<T>(dist(rng));
  }
  return net;
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const ParamTensor<T>& p) { return acc + p.values.size(); });
}

template <typename T>
Gradients<T> UNet<T>::zero_gradients() const {
  Gradients<T> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.emplace_back(p.values.size(), T{});
  return grads;
}

template <typename T>
void UNet<T>::check_input(const Tensor<T>& input) const {
  if (params_.empty()) throw InvalidInput("model has no parameters");
  if (input.c != spec_.in_channels) {
    throw InvalidInput("expected " + std::to_string(spec_.in_channels) + " input channel(s), got " +
                       std::to_string(input.c));
  }
  if (input.n < 1 || input.h < 1 || input.w < 1) throw InvalidInput("empty input tensor");
  if (input.h % kSizeMultiple != 0 || input.w % kSizeMultiple != 0) {
    throw InvalidInput("input size " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                       " is not divisible by 4; pad it with pad_to_multiple first");
  }
}

template <typename T>
void UNet<T>::run_sample(const T* input, int height, int width,
                         typename ForwardCache<T>::Sample& s) const {
  using namespace layers;
  const auto& ch = spec_.encoder_channels;
  const int h1 = height, w1 = width;
  const int h2 = h1 / 2, w2 = w1 / 2;
  const int h3 = h2 / 2, w3 = w2 / 2;
  const std::size_t a1 = static_cast<std::size_t>(h1) * w1;
  const std::size_t a2 = static_cast<std::size_t>(h2) * w2;
  const std::size_t a3 = static_cast<std::size_t>(h3) * w3;
  std::vector<T> scratch;

  auto conv_relu = [&](int idx, const std::vector<T>& in, int h, int w, std::vector<T>& out) {
    const Conv& c = convs_[idx];
    out.resize(static_cast<std::size_t>(c.out) * h * w);
    conv2d_forward(in.data(), c.in, h, w, params_[c.weight].values.data(),
                   params_[c.bias].values.data(), c.out, c.kernel, out.data(), scratch);
    relu_inplace(out);
  };

  s.height = height;
  s.width = width;
  s.input.assign(input, input + static_cast<std::size_t>(spec_.in_channels) * a1);

  conv_relu(0, s.input, h1, w1, s.enc1a);
  conv_relu(1, s.enc1a, h1, w1, s.enc1);

  s.pool1.resize(ch[0] * a2);
  s.pool1_arg.resize(ch[0] * a2);
  maxpool2_forward(s.enc1.data(), ch[0], h1, w1, s.pool1.data(), s.pool1_arg.data());
  conv_relu(2, s.pool1, h2, w2, s.enc2a);
  conv_relu(3, s.enc2a, h2, w2, s.enc2);

  s.pool2.resize(ch[1] * a3);
  s.pool2_arg.resize(ch[1] * a3);
  maxpool2_forward(s.enc2.data(), ch[1], h2, w2, s.pool2.data(), s.pool2_arg.data());
  conv_relu(4, s.pool2, h3, w3, s.enc3a);
  conv_relu(5, s.enc3a, h3, w3, s.enc3);

  s.cat1.resize((ch[2] + ch[1]) * a2);
  upsample2_forward(s.enc3.data(), ch[2], h3, w3, s.cat1.data());
  std::copy(s.enc2.begin(), s.enc2.end(), s.cat1.begin() + ch[2] * a2);
  conv_relu(6, s.cat1, h2, w2, s.dec1a);
  conv_relu(7, s.dec1a, h2, w2, s.dec1);

  s.cat2.resize((ch[1] + ch[0]) * a1);
  upsample2_forward(s.dec1.data(), ch[1], h2, w2, s.cat2.data());
  std::copy(s.enc1.begin(), s.enc1.end(), s.cat2.begin() + ch[1] * a1);
  conv_relu(8, s.cat2, h1, w1, s.dec2a);
  conv_relu(9, s.dec2a, h1, w1, s.dec2);

  const Conv& fin = convs_[10];
  s.output.resize(static_cast<std::size_t>(fin.out) * a1);
  conv2d_forward(s.dec2.data(), fin.in, h1, w1, params_[fin.weight].values.data(),
                 params_[fin.bias].values.data(), fin.out, fin.kernel, s.output.data(), scratch);
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input) const {
  check_input(input);
  Tensor<T> out(input.n, spec_.out_channels, input.h, input.w);
  for (int i = 0; i < input.n; ++i) {
    typename ForwardCache<T>::Sample s;
    run_sample(input.sample(i).data(), input.h, input.w, s);
    std::copy(s.output.begin(), s.output.end(), out.sample(i).begin());
  }
  return out;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& input, ForwardCache<T>& cache) const {
  check_input(input);
  Tensor<T> out(input.n, spec_.out_channels, input.h, input.w);
  cache.samples.assign(input.n, {});
  for (int i = 0; i < input.n; ++i) {
    auto& s = cache.samples[i];
    run_sample(input.sample(i).data(), input.h, input.w, s);
    std::copy(s.output.begin(), s.output.end(), out.sample(i).begin());
  }
  return out;
}

template <typename T>
void UNet<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& grad_output,
                       Gradients<T>& grads) const {
  using namespace layers;
  if (static_cast<int>(cache.samples.size()) != grad_output.n) {
    throw InvalidInput("gradient batch does not match the cached forward pass");
  }
  if (grads.size() != params_.size()) throw InvalidInput("gradient buffer has wrong layout");
  const auto& ch = spec_.encoder_channels;
  std::vector<T> scratch;

  // Backprop through conv(+ReLU on its output): grad is d/d(activation).
  auto conv_back = [&](int idx, const std::vector<T>& in, const std::vector<T>& act, int h, int w,
                       std::vector<T>& grad, std::vector<T>* grad_in) {
    const Conv& c = convs_[idx];
    relu_backward_inplace(act, grad);
    if (grad_in) grad_in->resize(static_cast<std::size_t>(c.in) * h * w);
    conv2d_backward(in.data(), c.in, h, w, params_[c.weight].values.data(), c.out, c.kernel,
                    grad.data(), grads[c.weight].data(), grads[c.bias].data(),
                    grad_in ? grad_in->data() : nullptr, scratch);
  };

  for (int i = 0; i < grad_output.n; ++i) {
    const auto& s = cache.samples[i];
    const int h1 = s.height, w1 = s.width;
    const int h2 = h1 / 2, w2 = w1 / 2;
    const int h3 = h2 / 2, w3 = w2 / 2;
    const std::size_t a1 = static_cast<std::size_t>(h1) * w1;
    const std::size_t a2 = static_cast<std::size_t>(h2) * w2;

    // final 1x1 projection (no activation)
    std::vector<T> g_dec2;
    {
      const Conv& fin = convs_[10];
      const auto go = grad_output.sample(i);
      g_dec2.resize(static_cast<std::size_t>(fin.in) * a1);
      conv2d_backward(s.dec2.data(), fin.in, h1, w1, params_[fin.weight].values.data(), fin.out,
                      fin.kernel, go.data(), grads[fin.weight].data(), grads[fin.bias].data(),
                      g_dec2.data(), scratch);
    }

    std::vector<T> g_dec2a, g_cat2;
    conv_back(9, s.dec2a, s.dec2, h1, w1, g_dec2, &g_dec2a);
    conv_back(8, s.cat2, s.dec2a, h1, w1, g_dec2a, &g_cat2);

    std::vector<T> g_enc1(g_cat2.begin() + ch[1] * a1, g_cat2.end());
    std::vector<T> g_dec1(ch[1] * a2, T{});
    upsample2_backward_add(g_cat2.data(), ch[1], h2, w2, g_dec1.data());

    std::vector<T> g_dec1a, g_cat1;
    conv_back(7, s.dec1a, s.dec1, h2, w2, g_dec1, &g_dec1a);
    conv_back(6, s.cat1, s.dec1a, h2, w2, g_dec1a, &g_cat1);

    std::vector<T> g_enc2(g_cat1.begin() + ch[2] * a2, g_cat1.end());
    std::vector<T> g_enc3(static_cast<std::size_t>(ch[2]) * h3 * w3, T{});
    upsample2_backward_add(g_cat1.data(), ch[2], h3, w3, g_enc3.data());

    std::vector<T> g_enc3a, g_pool2;
    conv_back(5, s.enc3a, s.enc3, h3, w3, g_enc3, &g_enc3a);
    conv_back(4, s.pool2, s.enc3a, h3, w3, g_enc3a, &g_pool2);
    maxpool2_backward_add(g_pool2.data(), s.pool2_arg.data(), g_pool2.size(), g_enc2.data());

    std::vector<T> g_enc2a, g_pool1;
    conv_back(3, s.enc2a, s.enc2, h2, w2, g_enc2, &g_enc2a);
    conv_back(2, s.pool1, s.enc2a, h2, w2, g_enc2a, &g_pool1);
    maxpool2_backward_add(g_pool1.data(), s.pool1_arg.data(), g_pool1.size(), g_enc1.data());

    std::vector<T> g_enc1a;
    conv_back(1, s.enc1a, s.enc1, h1, w1, g_enc1, &g_enc1a);
    conv_back(0, s.input, s.enc1a, h1, w1, g_enc1a, nullptr);
  }
}

template class UNet<float>;
template class UNet<double>;

Model build_unet(const UNetSpec& spec, Rng& rng) { return Model::build(spec, rng); }

}  // namespace gdm
