#pragma once

#include <string>
#include <vector>

#include "gdm/image.hpp"
#include "gdm/spectral.hpp"

namespace gdm {

/// Boolean mask over the center-shifted frequency plane.
struct FreqMask {
  BinaryMask mask;  // 1 = keep
  std::string description;
};

// ---- STM: radial band-pass with an angular exclusion around the vertical axis

struct StmParams {
  double r_low = 20.0;
  double r_high = 60.0;
  double theta_margin_deg = 30.0;
};

/// Keeps r_low < r < r_high whose angle is farther than theta_margin from
/// the +-90 degree directions. Center is (H/2, W/2) as after fftshift.
FreqMask stm_frequency_mask(int height, int width, const StmParams& params);

struct StmResult {
  GrayImage image;  // rescaled to [0, 1]
  Matrix filtered;  // real part of the inverse transform, before rescaling
  FreqMask mask;
};

StmResult stm_bandpass(const GrayImage& image, const StmParams& params = {});
GrayImage stm_bandpass_enhance(const GrayImage& image, const StmParams& params = {});

// ---- AFM: column notch, dark mask, merge

enum class NotchAxis { kColumns, kRows };

struct AfmParams {
  double dc_radius = 50.0;
  double smooth_sigma = 0.1;
  int notch_half_width = 1;
  double dark_percentile = 50.0;
  double peak_mad_factor = 3.0;  // peaks must exceed median + k * MAD
  NotchAxis axis = NotchAxis::kColumns;
};

struct DarkMaskPair {
  GrayImage dark_masked;  // 1 where the cleaned image is below the percentile
  GrayImage merged;
};

struct AfmResult {
  GrayImage cleaned;
  DarkMaskPair pair;
  FreqMask notch;
  ComplexMatrix spectrum;          // shifted spectrum of the input
  ComplexMatrix notched_spectrum;  // after applying the notch mask
  Matrix filtered;                 // real inverse before clamping
  std::vector<int> notch_lines;   // shifted-plane column (or row) indices
  Eigen::VectorXd profile;        // smoothed energy profile used for detection
};

AfmResult afm_notch_clean(const GrayImage& image, const AfmParams& params = {});

/// 1.0 where dark_masked > 0.5, otherwise the original value.
GrayImage afm_merge(const GrayImage& dark_masked, const GrayImage& original);

/// Gaussian smoothing of a 1D signal, truncated at 4 sigma, mirror boundary
/// (d c b a | a b c d). A kernel radius of zero returns the input.
Eigen::VectorXd gaussian_smooth_1d(const Eigen::VectorXd& signal, double sigma);

/// Linear-interpolated percentile of all pixel values.
double percentile(const Matrix& values, double q);

// ---- SEM: bright-strip mask and inpainting

/// 1 where round(255 * v) > threshold.
BinaryMask sem_strip_mask(const GrayImage& image, int threshold = 130);

/// Fast-marching (Telea) inpainting of masked pixels; unmasked pixels are
/// returned bit-identical.
GrayImage sem_inpaint(const GrayImage& image, const BinaryMask& mask, double radius = 3.0);

struct SemResult {
  BinaryMask mask;
  GrayImage cleaned;
};

SemResult sem_clean(const GrayImage& image, int threshold = 130, double radius = 3.0);

/// Binary mask as a 0/1 image.
GrayImage mask_to_image(const BinaryMask& mask);

}  // namespace gdm
