#include "gdm/spectral.hpp"

#include <cmath>
#include <numbers>

#include <opencv2/core.hpp>

#include "gdm/error.hpp"

namespace gdm {

namespace {

// std::complex<double> is layout-compatible with two doubles, so the Eigen
// buffer can be viewed as CV_64FC2 without copying.
ComplexMatrix dft_complex(const ComplexMatrix& input, int flags) {
  if (input.size() == 0) throw InvalidInput("cannot transform an empty matrix");
  ComplexMatrix src = input;
  ComplexMatrix dst(input.rows(), input.cols());
  cv::Mat src_view(static_cast<int>(src.rows()), static_cast<int>(src.cols()), CV_64FC2,
                   reinterpret_cast<double*>(src.data()));
  cv::Mat dst_view(static_cast<int>(dst.rows()), static_cast<int>(dst.cols()), CV_64FC2,
                   reinterpret_cast<double*>(dst.data()));
  cv::dft(src_view, dst_view, flags);
  return dst;
}

}  // namespace

ComplexMatrix fft2(const Matrix& input) { return fft2(ComplexMatrix(input.cast<Complex>())); }

ComplexMatrix fft2(const ComplexMatrix& input) { return dft_complex(input, cv::DFT_COMPLEX_OUTPUT); }

ComplexMatrix ifft2(const ComplexMatrix& input) {
  return dft_complex(input, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
}

Matrix real_inverse_from_shifted(const ComplexMatrix& shifted) {
  return ifft2(ifftshift(shifted)).real();
}

Eigen::VectorXd hann_window(int n) {
  if (n < 1) throw InvalidInput("window length must be >= 1");
  Eigen::VectorXd w(n);
  if (n == 1) {
    w(0) = 1.0;
    return w;
  }
  for (int i = 0; i < n; ++i) {
    w(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  }
  return w;
}

Matrix hann_window_2d(int rows, int cols) {
  return hann_window(rows) * hann_window(cols).transpose();
}

}  // namespace gdm
