#include "gdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "gdm/error.hpp"
#include "gdm/spectral.hpp"

namespace gdm {

namespace {

// Separable maximum filter with edge-replicating boundaries.
Matrix maximum_filter(const Matrix& in, int radius) {
  const Eigen::Index h = in.rows();
  const Eigen::Index w = in.cols();
  Matrix tmp(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      double m = in(r, c);
      for (Eigen::Index k = std::max<Eigen::Index>(0, c - radius);
           k <= std::min<Eigen::Index>(w - 1, c + radius); ++k) {
        m = std::max(m, in(r, k));
      }
      tmp(r, c) = m;
    }
  }
  Matrix out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      double m = tmp(r, c);
      for (Eigen::Index k = std::max<Eigen::Index>(0, r - radius);
           k <= std::min<Eigen::Index>(h - 1, r + radius); ++k) {
        m = std::max(m, tmp(k, c));
      }
      out(r, c) = m;
    }
  }
  return out;
}

Matrix radius_map(int h, int w) {
  Matrix r(h, w);
  const double cy = h / 2;
  const double cx = w / 2;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) r(i, j) = std::hypot(i - cy, j - cx);
  }
  return r;
}

Matrix windowed_power(const Matrix& pixels) {
  const Matrix windowed =
      pixels.cwiseProduct(hann_window_2d(static_cast<int>(pixels.rows()),
                                         static_cast<int>(pixels.cols())));
  return shifted_spectrum(windowed).cwiseAbs2();
}

}  // namespace

std::vector<Coord> peak_local_max(const Matrix& image, int min_distance, double threshold,
                                  int exclude_border) {
  if (min_distance < 1) throw InvalidInput("min_distance must be >= 1");
  const Matrix mx = maximum_filter(image, min_distance);
  struct Cand {
    Coord at;
    double v;
  };
  std::vector<Cand> cand;
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  for (int r = exclude_border; r < h - exclude_border; ++r) {
    for (int c = exclude_border; c < w - exclude_border; ++c) {
      const double v = image(r, c);
      if (v == mx(r, c) && v > threshold) cand.push_back({{r, c}, v});
    }
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const Cand& a, const Cand& b) { return a.v > b.v; });
  std::vector<Coord> kept;
  for (const auto& c : cand) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const Coord& k) {
      return std::max(std::abs(k.row - c.at.row), std::abs(k.col - c.at.col)) > min_distance;
    });
    if (clear) kept.push_back(c.at);
  }
  return kept;
}

PnrResult pnr_score(const GrayImage& image, const PnrParams& params) {
  if (image.height() < 32 || image.width() < 32) {
    throw InvalidInput("PNR needs an image of at least 32x32 pixels");
  }
  if (!(params.noise_radius_frac >= 0.0 && params.noise_radius_frac < 1.0)) {
    throw InvalidInput("noise radius fraction must lie in [0, 1)");
  }
  const int h = image.height();
  const int w = image.width();
  const GrayImage norm = GrayImage::rescaled(image.pixels());

  PnrResult out;
  out.power = windowed_power(norm.pixels());
  Matrix lg = out.power.cwiseSqrt().array().log1p().matrix();
  const double lo = lg.minCoeff();
  const double hi = lg.maxCoeff();
  out.log_spectrum = hi > lo ? Matrix((lg.array() - lo) / (hi - lo)) : Matrix::Zero(h, w);

  const Matrix rad = radius_map(h, w);
  for (const Coord& p :
       peak_local_max(out.log_spectrum, params.min_distance, params.threshold_rel,
                      params.min_distance)) {
    if (rad(p.row, p.col) > params.dc_exclusion_radius) out.peak_coords.push_back(p);
  }

  const double r_max = rad.maxCoeff();
  double noise_sum = 0.0;
  long noise_n = 0;
  for (Eigen::Index i = 0; i < rad.size(); ++i) {
    if (rad.data()[i] > params.noise_radius_frac * r_max) {
      noise_sum += out.power.data()[i];
      ++noise_n;
    }
  }
  out.p_noise = noise_n ? noise_sum / static_cast<double>(noise_n) : 0.0;
  if (out.peak_coords.empty()) return out;

  double peak_sum = 0.0;
  for (const Coord& p : out.peak_coords) peak_sum += out.power(p.row, p.col);
  out.p_peak = peak_sum / static_cast<double>(out.peak_coords.size());
  out.pnr_db = 10.0 * std::log10(out.p_peak / out.p_noise);
  return out;
}

double high_frequency_energy(const GrayImage& image, double frac) {
  const Matrix power = windowed_power(image.pixels());
  const Matrix rad = radius_map(image.height(), image.width());
  const double r_max = rad.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rad.size(); ++i) {
    if (rad.data()[i] > frac * r_max) sum += power.data()[i];
  }
  return sum;
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kStm: return "stm";
    case Modality::kAfm: return "afm";
    case Modality::kSem: return "sem";
  }
  return "stm";
}

Modality modality_from_string(const std::string& s) {
  if (s == "stm") return Modality::kStm;
  if (s == "afm") return Modality::kAfm;
  if (s == "sem") return Modality::kSem;
  throw InvalidInput("modality must be stm, afm or sem, got '" + s + "'");
}

LineParams LineParams::for_modality(Modality m) {
  LineParams p;
  switch (m) {
    case Modality::kStm:
      break;
    case Modality::kAfm:
      p.canny_sigma = 1.0;
      break;
    case Modality::kSem:
      p.canny_sigma = 1.0;
      p.canny_low = 5.0;
      p.hough_gap = 1.0;
      break;
  }
  return p;
}

double LineSet::total_length() const {
  double s = 0.0;
  for (double l : lengths) s += l;
  return s;
}

double fold_angle(double degrees) {
  double a = std::fmod(degrees, 180.0);
  if (a > 90.0) a -= 180.0;
  if (a <= -90.0) a += 180.0;
  return a;
}

double segment_angle(const Segment& s) {
  return fold_angle(std::atan2(s.y2 - s.y1, s.x2 - s.x1) * 180.0 / std::numbers::pi);
}

LineSet make_line_set(std::vector<Segment> segments) {
  LineSet out;
  out.segments = std::move(segments);
  for (const auto& s : out.segments) {
    out.angles_deg.push_back(segment_angle(s));
    out.lengths.push_back(std::hypot(s.x1 - s.x2, s.y1 - s.y2));
  }
  return out;
}

// OpenCV's probabilistic Hough draws from a generator it seeds with this
// constant on every call.
constexpr std::uint64_t kHoughSeed = 0xFFFFFFFFFFFFFFFFull;

LineSet detect_lines(const GrayImage& image, const LineParams& p) {
  if (!(p.canny_sigma >= 0.0) || !(p.canny_low > 0.0) || !(p.canny_low < p.canny_high) ||
      p.hough_threshold < 1 || !(p.hough_min_length >= 0.0) || !(p.hough_gap >= 0.0)) {
    throw InvalidInput("line detection parameters must be positive with low < high");
  }
  cv::Mat f;
  detail::to_mat(image.pixels()).convertTo(f, CV_32F, 255.0);
  const int radius = static_cast<int>(4.0 * p.canny_sigma + 0.5);
  if (radius > 0) {
    cv::GaussianBlur(f, f, cv::Size(2 * radius + 1, 2 * radius + 1), p.canny_sigma,
                     p.canny_sigma, cv::BORDER_REFLECT);
  }
  cv::Mat gx, gy, dx, dy;
  cv::Sobel(f, gx, CV_32F, 1, 0, 3);
  cv::Sobel(f, gy, CV_32F, 0, 1, 3);
  gx.convertTo(dx, CV_16S);
  gy.convertTo(dy, CV_16S);
  cv::Mat edges;
  cv::Canny(dx, dy, edges, p.canny_low, p.canny_high, true);

  std::vector<cv::Vec4i> raw;
  cv::HoughLinesP(edges, raw, 1.0, std::numbers::pi / 180.0, p.hough_threshold,
                  p.hough_min_length, p.hough_gap);
  std::vector<Segment> segs;
  segs.reserve(raw.size());
  for (const auto& l : raw) segs.push_back({double(l[0]), double(l[1]), double(l[2]), double(l[3])});
  LineSet out = make_line_set(std::move(segs));
  out.hough_seed = kHoughSeed;
  return out;
}

double line_length_in_range(const LineSet& lines, double theta1, double theta2) {
  double sum = 0.0;
  for (std::size_t i = 0; i < lines.segments.size(); ++i) {
    const double a = lines.angles_deg[i];
    if (a > theta1 && a < theta2) sum += lines.lengths[i];
  }
  return sum;
}

namespace {

double delta(double denoised, double noisy) {
  return denoised == noisy ? 0.0 : denoised - noisy;
}

}  // namespace

MetricsReport evaluate_pair(const GrayImage& noisy, const GrayImage& denoised, Modality modality,
                            double theta1, double theta2) {
  if (noisy.height() != denoised.height() || noisy.width() != denoised.width()) {
    throw InvalidInput("noisy and denoised images differ in shape");
  }
  if (!(theta1 < theta2)) throw InvalidInput("angle range needs theta1 < theta2");
  MetricsReport r;
  r.modality = modality;
  r.line_params = LineParams::for_modality(modality);
  r.theta1 = theta1;
  r.theta2 = theta2;
  r.pnr_noisy = pnr_score(noisy);
  r.pnr_denoised = pnr_score(denoised);
  r.lines_noisy = detect_lines(noisy, r.line_params);
  r.lines_denoised = detect_lines(denoised, r.line_params);
  r.line_len_noisy = line_length_in_range(r.lines_noisy, theta1, theta2);
  r.line_len_denoised = line_length_in_range(r.lines_denoised, theta1, theta2);
  r.pnr_delta = delta(r.pnr_denoised.pnr_db, r.pnr_noisy.pnr_db);
  r.line_len_delta = delta(r.line_len_denoised, r.line_len_noisy);
  return r;
}

namespace {

cv::Mat to_bgr(const Matrix& gray01) {
  cv::Mat g;
  detail::to_mat(gray01).convertTo(g, CV_8U, 255.0);
  cv::Mat bgr;
  cv::cvtColor(g, bgr, cv::COLOR_GRAY2BGR);
  return bgr;
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& img) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace

void write_spectrum_overlay(const PnrResult& pnr, const std::filesystem::path& path) {
  cv::Mat img = to_bgr(pnr.log_spectrum);
  for (const Coord& p : pnr.peak_coords) {
    cv::circle(img, cv::Point(p.col, p.row), 4, cv::Scalar(0, 0, 255), 1, cv::LINE_AA);
  }
  write_or_throw(path, img);
}

void write_lines_overlay(const GrayImage& image, const LineSet& lines, double theta1,
                         double theta2, const std::filesystem::path& path) {
  cv::Mat img = to_bgr(image.pixels());
  for (std::size_t i = 0; i < lines.segments.size(); ++i) {
    const auto& s = lines.segments[i];
    const double a = lines.angles_deg[i];
    const bool in_range = a > theta1 && a < theta2;
    cv::line(img, cv::Point(int(s.x1), int(s.y1)), cv::Point(int(s.x2), int(s.y2)),
             in_range ? cv::Scalar(0, 0, 255) : cv::Scalar(255, 128, 0), 1, cv::LINE_AA);
  }
  write_or_throw(path, img);
}

}  // namespace gdm
