#include "gdm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <opencv2/photo.hpp>

#include "cv_bridge.hpp"
#include "gdm/error.hpp"
#include "gdm/spectral.hpp"

namespace gdm {

FreqMask stm_frequency_mask(int height, int width, const StmParams& p) {
  const double half = std::min(height, width) / 2.0;
  if (!(p.r_low >= 0.0) || !(p.r_low < p.r_high) || !(p.r_high < half)) {
    throw InvalidInput("band-pass radii need 0 <= r_low < r_high < min(H, W)/2");
  }
  if (!(p.theta_margin_deg >= 0.0 && p.theta_margin_deg < 90.0)) {
    throw InvalidInput("theta margin must lie in [0, 90) degrees");
  }
  const int cy = height / 2;
  const int cx = width / 2;
  FreqMask out;
  out.mask = BinaryMask::Zero(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double ky = r - cy;
      const double kx = c - cx;
      const double rad = std::hypot(ky, kx);
      if (!(rad > p.r_low && rad < p.r_high)) continue;
      const double theta = std::atan2(ky, kx) * 180.0 / std::numbers::pi;
      const double to_vertical = std::min(std::abs(theta - 90.0), std::abs(theta + 90.0));
      if (to_vertical > p.theta_margin_deg) out.mask(r, c) = 1;
    }
  }
  std::ostringstream d;
  d << "band-pass " << p.r_low << " < r < " << p.r_high << ", excluding +-" << p.theta_margin_deg
    << " deg around the vertical axis";
  out.description = d.str();
  return out;
}

StmResult stm_bandpass(const GrayImage& image, const StmParams& params) {
  StmResult out{GrayImage{}, Matrix{}, stm_frequency_mask(image.height(), image.width(), params)};
  ComplexMatrix spec = shifted_spectrum(image.pixels());
  for (Eigen::Index i = 0; i < spec.size(); ++i) {
    if (!out.mask.mask.data()[i]) spec.data()[i] = Complex{};
  }
  out.filtered = real_inverse_from_shifted(spec);
  out.image = GrayImage::rescaled(out.filtered, image.source_bit_depth(), image.pixel_size_nm());
  return out;
}

GrayImage stm_bandpass_enhance(const GrayImage& image, const StmParams& params) {
  return stm_bandpass(image, params).image;
}

Eigen::VectorXd gaussian_smooth_1d(const Eigen::VectorXd& signal, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidInput("smoothing sigma must be >= 0");
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  if (radius == 0 || signal.size() == 0) return signal;
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    kernel(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  kernel /= kernel.sum();
  const int n = static_cast<int>(signal.size());
  auto at = [&](int i) {
    // half-sample symmetric extension
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return signal(i < n ? i : period - 1 - i);
  };
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += kernel(k + radius) * at(i + k);
    out(i) = acc;
  }
  return out;
}

double percentile(const Matrix& values, double q) {
  if (values.size() == 0) throw InvalidInput("percentile of an empty array");
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidInput("percentile must lie in [0, 100]");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Indices of local maxima that clear median + k * MAD and a tiny relative
// floor; the floor keeps round-off ripples on smooth images from counting.
std::vector<int> profile_peaks(const Eigen::VectorXd& p, double k, double floor) {
  std::vector<double> vals(p.data(), p.data() + p.size());
  const double med = median(vals);
  std::vector<double> dev(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) dev[i] = std::abs(vals[i] - med);
  const double thr = std::max(med + k * median(dev), floor);
  std::vector<int> out;
  for (Eigen::Index i = 1; i + 1 < p.size(); ++i) {
    if (p(i) > thr && p(i) > p(i - 1) && p(i) >= p(i + 1)) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

AfmResult afm_notch_clean(const GrayImage& image, const AfmParams& params) {
  if (!(params.dc_radius >= 0.0)) throw InvalidInput("DC radius must be >= 0");
  if (params.notch_half_width < 0) throw InvalidInput("notch half-width must be >= 0");
  if (image.height() < 2 * params.dc_radius || image.width() < 2 * params.dc_radius) {
    throw InvalidInput("AFM cleaning needs at least 2 * dc_radius pixels per side");
  }

  AfmResult out;
  const Matrix& px = image.pixels();
  const bool constant = px.maxCoeff() == px.minCoeff();

  const bool rows = params.axis == NotchAxis::kRows;
  ComplexMatrix spec = shifted_spectrum(px);
  // Work on columns; the row variant runs on the transposed plane.
  ComplexMatrix plane = rows ? ComplexMatrix(spec.transpose()) : spec;
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());
  const int cy = h / 2;
  const int cx = w / 2;
  auto in_dc = [&](int r, int c) { return std::hypot(r - cy, c - cx) <= params.dc_radius; };

  Eigen::VectorXd profile = Eigen::VectorXd::Zero(w);
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double e = std::norm(plane(r, c));
      total += e;
      if (!in_dc(r, c)) profile(c) += e;
    }
  }
  out.profile = gaussian_smooth_1d(profile, params.smooth_sigma);

  BinaryMask keep = BinaryMask::Ones(h, w);
  if (!constant) {
    for (int c : profile_peaks(out.profile, params.peak_mad_factor, 1e-9 * total)) {
      for (int line : {c, 2 * cx - c}) {
        if (line < 0 || line >= w) continue;
        if (std::find(out.notch_lines.begin(), out.notch_lines.end(), line) ==
            out.notch_lines.end()) {
          out.notch_lines.push_back(line);
        }
      }
    }
    std::sort(out.notch_lines.begin(), out.notch_lines.end());
  }
  for (int line : out.notch_lines) {
    for (int c = std::max(0, line - params.notch_half_width);
         c <= std::min(w - 1, line + params.notch_half_width); ++c) {
      for (int r = 0; r < h; ++r) {
        if (!in_dc(r, c)) keep(r, c) = 0;
      }
    }
  }

  out.notch.mask = rows ? BinaryMask(keep.transpose()) : keep;
  std::ostringstream d;
  d << "notch " << (rows ? "rows" : "columns") << " [";
  for (std::size_t i = 0; i < out.notch_lines.size(); ++i) {
    d << (i ? "," : "") << out.notch_lines[i];
  }
  d << "] half-width " << params.notch_half_width << ", DC radius " << params.dc_radius
    << " preserved";
  out.notch.description = d.str();

  out.spectrum = spec;
  for (Eigen::Index i = 0; i < spec.size(); ++i) {
    if (!out.notch.mask.data()[i]) spec.data()[i] = Complex{};
  }
  out.notched_spectrum = std::move(spec);
  if (out.notch_lines.empty()) {
    out.filtered = px;
    out.cleaned = image;
  } else {
    out.filtered = real_inverse_from_shifted(out.notched_spectrum);
    out.cleaned =
        GrayImage::clamped(out.filtered, image.source_bit_depth(), image.pixel_size_nm());
  }

  const Matrix& cl = out.cleaned.pixels();
  const double thr = percentile(cl, params.dark_percentile);
  Matrix dark = (cl.array() < thr).cast<double>();
  out.pair.dark_masked = image.with_pixels(std::move(dark));
  out.pair.merged = afm_merge(out.pair.dark_masked, image);
  return out;
}

GrayImage afm_merge(const GrayImage& dark_masked, const GrayImage& original) {
  if (dark_masked.height() != original.height() || dark_masked.width() != original.width()) {
    throw InvalidInput("merge needs a mask of the same shape as the image");
  }
  Matrix out = (dark_masked.pixels().array() > 0.5).select(1.0, original.pixels().array());
  return original.with_pixels(std::move(out));
}

BinaryMask sem_strip_mask(const GrayImage& image, int threshold) {
  const Matrix& px = image.pixels();
  BinaryMask m(px.rows(), px.cols());
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    m.data()[i] = std::lround(px.data()[i] * 255.0) > threshold ? 1 : 0;
  }
  return m;
}

GrayImage sem_inpaint(const GrayImage& image, const BinaryMask& mask, double radius) {
  if (mask.rows() != image.height() || mask.cols() != image.width()) {
    throw InvalidInput("inpainting mask shape differs from the image");
  }
  if (!(radius > 0.0)) throw InvalidInput("inpainting radius must be positive");
  const Eigen::Index count = (mask.array() != 0).count();
  if (count == 0) return image;
  if (count == mask.size()) throw InvalidInput("inpainting mask covers the entire image");

  // OpenCV's float Telea path adds the 8-bit rounding offset (+0.5) to every
  // filled value; working at a large scale makes that offset negligible.
  constexpr double kScale = 1e6;
  cv::Mat src;
  detail::to_mat(image.pixels()).convertTo(src, CV_32F, kScale);
  cv::Mat filled;
  cv::inpaint(src, detail::to_mat(mask), filled, radius, cv::INPAINT_TELEA);
  const Matrix result = detail::from_mat(filled) / kScale;

  Matrix out = image.pixels();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (mask.data()[i]) out.data()[i] = std::clamp(result.data()[i], 0.0, 1.0);
  }
  return image.with_pixels(std::move(out));
}

SemResult sem_clean(const GrayImage& image, int threshold, double radius) {
  SemResult out;
  out.mask = sem_strip_mask(image, threshold);
  out.cleaned = sem_inpaint(image, out.mask, radius);
  return out;
}

GrayImage mask_to_image(const BinaryMask& mask) {
  return GrayImage(mask.cast<double>().cwiseMin(1.0));
}

}  // namespace gdm
