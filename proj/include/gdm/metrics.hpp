#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gdm/image.hpp"

namespace gdm {

struct PnrParams {
  int min_distance = 10;
  double threshold_rel = 0.05;  // on the [0, 1]-normalized log spectrum
  double noise_radius_frac = 0.5;
  double dc_exclusion_radius = 3.0;
};

struct PnrResult {
  double pnr_db = -std::numeric_limits<double>::infinity();
  std::vector<Coord> peak_coords;  // in the center-shifted plane
  double p_peak = 0.0;
  double p_noise = 0.0;
  Matrix log_spectrum;  // normalized log1p magnitude, for plotting
  Matrix power;         // |F|^2 of the windowed image, shifted

  bool no_peaks() const { return peak_coords.empty(); }
};

/// Local maxima of `image` under a (2*min_distance+1)^2 maximum filter that
/// exceed `threshold`, at least `exclude_border` pixels from the edge, kept
/// greedily by descending value so that no two lie within min_distance
/// (Chebyshev) of each other.
std::vector<Coord> peak_local_max(const Matrix& image, int min_distance, double threshold,
                                  int exclude_border);

/// Spectral peak-to-noise ratio in dB. No peaks yields pnr_db = -inf.
PnrResult pnr_score(const GrayImage& image, const PnrParams& params = {});

/// Sum of |F|^2 of the Hann-windowed image over radius > frac * r_max.
double high_frequency_energy(const GrayImage& image, double frac = 0.5);

enum class Modality { kStm, kAfm, kSem };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct LineParams {
  double canny_sigma = 0.1;
  double canny_low = 1.0;
  double canny_high = 10.0;
  int hough_threshold = 5;
  double hough_min_length = 1.0;
  double hough_gap = 2.0;

  static LineParams for_modality(Modality m);
};

struct Segment {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct LineSet {
  std::vector<Segment> segments;
  std::vector<double> angles_deg;  // folded into (-90, 90]
  std::vector<double> lengths;
  std::uint64_t hough_seed = 0;

  double total_length() const;
};

/// atan2(dy, dx) in degrees folded into (-90, 90].
double fold_angle(double degrees);
double segment_angle(const Segment& s);

LineSet make_line_set(std::vector<Segment> segments);

/// Canny edges (Gaussian sigma, hysteresis on the 8-bit scale) followed by the
/// probabilistic Hough transform.
LineSet detect_lines(const GrayImage& image, const LineParams& params);

/// Total length of segments whose angle lies strictly inside (theta1, theta2).
double line_length_in_range(const LineSet& lines, double theta1, double theta2);

struct MetricsReport {
  Modality modality = Modality::kStm;
  LineParams line_params;
  double theta1 = -30.0;
  double theta2 = 30.0;
  PnrResult pnr_noisy;
  PnrResult pnr_denoised;
  LineSet lines_noisy;
  LineSet lines_denoised;
  double line_len_noisy = 0.0;
  double line_len_denoised = 0.0;
  double pnr_delta = 0.0;       // denoised - noisy
  double line_len_delta = 0.0;  // denoised - noisy
};

MetricsReport evaluate_pair(const GrayImage& noisy, const GrayImage& denoised, Modality modality,
                            double theta1, double theta2);

/// Normalized log spectrum with detected peaks circled.
void write_spectrum_overlay(const PnrResult& pnr, const std::filesystem::path& path);

/// Segments drawn over the image; in-range segments red, others blue.
void write_lines_overlay(const GrayImage& image, const LineSet& lines, double theta1,
                         double theta2, const std::filesystem::path& path);

}  // namespace gdm
