#pragma once

// Conversions between the Eigen-backed image types and cv::Mat. Internal.

#include <opencv2/core.hpp>

#include "gdm/image.hpp"

namespace gdm::detail {

// Deep copy into a CV_64F matrix.
inline cv::Mat to_mat(const Matrix& m) {
  cv::Mat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()), CV_64F);
  for (int r = 0; r < out.rows; ++r) {
    auto* dst = out.ptr<double>(r);
    for (int c = 0; c < out.cols; ++c) dst[c] = m(r, c);
  }
  return out;
}

inline cv::Mat to_mat(const BinaryMask& m) {
  cv::Mat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()), CV_8U);
  for (int r = 0; r < out.rows; ++r) {
    auto* dst = out.ptr<std::uint8_t>(r);
    for (int c = 0; c < out.cols; ++c) dst[c] = m(r, c) ? 255 : 0;
  }
  return out;
}

// Any single-channel depth converted to double.
inline Matrix from_mat(const cv::Mat& mat) {
  CV_Assert(mat.channels() == 1);
  cv::Mat as_double;
  mat.convertTo(as_double, CV_64F);
  Matrix out(as_double.rows, as_double.cols);
  for (int r = 0; r < as_double.rows; ++r) {
    const auto* src = as_double.ptr<double>(r);
    for (int c = 0; c < as_double.cols; ++c) out(r, c) = src[c];
  }
  return out;
}

}  // namespace gdm::detail
