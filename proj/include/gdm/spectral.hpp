#pragma once

#include <complex>

#include <Eigen/Core>

#include "gdm/image.hpp"

namespace gdm {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unnormalized forward 2D DFT (numpy.fft.fft2 convention).
ComplexMatrix fft2(const Matrix& input);
ComplexMatrix fft2(const ComplexMatrix& input);

// Inverse 2D DFT scaled by 1/(H*W) (numpy.fft.ifft2 convention).
ComplexMatrix ifft2(const ComplexMatrix& input);

// Moves the zero-frequency bin to (H/2, W/2), matching numpy.fft.fftshift.
template <typename Derived>
auto fftshift(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index h = m.rows();
  const Eigen::Index w = m.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) out((r + h / 2) % h, (c + w / 2) % w) = m(r, c);
  }
  return out;
}

// Inverse of fftshift (differs from it for odd sizes).
template <typename Derived>
auto ifftshift(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index h = m.rows();
  const Eigen::Index w = m.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) out(r, c) = m((r + h / 2) % h, (c + w / 2) % w);
  }
  return out;
}

// Center-shifted spectrum of a real image.
inline ComplexMatrix shifted_spectrum(const Matrix& input) { return fftshift(fft2(input)); }

// Real part of the inverse transform of a center-shifted spectrum.
Matrix real_inverse_from_shifted(const ComplexMatrix& shifted);

// Symmetric Hann window of length n (numpy.hanning).
Eigen::VectorXd hann_window(int n);

// Outer product of row and column Hann windows.
Matrix hann_window_2d(int rows, int cols);

}  // namespace gdm
