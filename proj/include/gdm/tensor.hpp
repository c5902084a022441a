#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "gdm/error.hpp"

namespace gdm {

/// Dense NCHW tensor.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width)
      : n(batch), c(channels), h(height), w(width),
        data(static_cast<std::size_t>(batch) * channels * height * width, T{}) {
    if (batch < 0 || channels < 0 || height < 0 || width < 0) {
      throw InvalidInput("negative tensor dimension");
    }
  }

  std::array<int, 4> shape() const { return {n, c, h, w}; }
  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  std::span<T> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const T> sample(int i) const {
    return {data.data() + i * sample_size(), sample_size()};
  }

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  const T& at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
};

}  // namespace gdm
