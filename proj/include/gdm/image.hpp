#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace gdm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BinaryMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Every randomized operation draws from this engine so a single 64-bit seed
// reproduces the whole pipeline.
using Rng = std::mt19937_64;

struct Coord {
  int row = 0;
  int col = 0;

  friend bool operator==(const Coord&, const Coord&) = default;
};

/// A single-channel image with intensities normalized to [0, 1].
///
/// The pixel matrix is fixed at construction, so the range and non-empty
/// invariants hold for the lifetime of the object.
class GrayImage {
 public:
  GrayImage() = default;

  // Throws InvalidInput if the matrix is empty, non-finite, or outside [0, 1].
  explicit GrayImage(Matrix pixels, int source_bit_depth = 8,
                     std::optional<double> pixel_size_nm = std::nullopt);

  // Clamps every value into [0, 1] (NaN becomes 0).
  static GrayImage clamped(Matrix pixels, int source_bit_depth = 8,
                           std::optional<double> pixel_size_nm = std::nullopt);

  // Affine min-max rescale into [0, 1]; a constant matrix maps to all zeros.
  static GrayImage rescaled(const Matrix& values, int source_bit_depth = 8,
                            std::optional<double> pixel_size_nm = std::nullopt);

  const Matrix& pixels() const { return pixels_; }
  double operator()(int row, int col) const { return pixels_(row, col); }
  int height() const { return static_cast<int>(pixels_.rows()); }
  int width() const { return static_cast<int>(pixels_.cols()); }
  bool empty() const { return pixels_.size() == 0; }
  int source_bit_depth() const { return source_bit_depth_; }
  const std::optional<double>& pixel_size_nm() const { return pixel_size_nm_; }

  // Same metadata, new pixels (validated).
  GrayImage with_pixels(Matrix pixels) const;

 private:
  Matrix pixels_;
  int source_bit_depth_ = 8;
  std::optional<double> pixel_size_nm_;
};

/// Reads an 8- or 16-bit PNG/TIFF. Color inputs are reduced by channel mean.
GrayImage load_image(const std::filesystem::path& path);

/// Writes a PNG as 8-bit. TIFF keeps the image's source bit depth (8 or 16).
void save_image(const GrayImage& image, const std::filesystem::path& path);

/// Integer intensity levels at the given bit depth: round(v * (2^bits - 1)).
Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> quantize(
    const GrayImage& image, int bit_depth);

GrayImage from_levels(const Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>& levels,
                      int bit_depth);

struct Patch {
  Matrix pixels;
  Coord origin;
};

struct MaskedPatch {
  Matrix corrupted;
  Matrix clean;  // the source patch, used as the spectral target
  std::vector<Coord> mask_coords;
  std::vector<double> original_values;  // aligned with mask_coords
  Coord origin;

  int size() const { return static_cast<int>(clean.rows()); }
};

/// Grid positions along one axis: 0, stride, 2*stride, ... plus an
/// edge-aligned position so the last pixel is covered.
std::vector<int> patch_positions(int extent, int patch_size, int stride);

/// Regular grid of square patches (row-major order) with edge alignment.
std::vector<Patch> extract_patches(const GrayImage& image, int patch_size, int stride);

/// Number of masked pixels for a patch of side `patch_size`.
int masked_pixel_count(int patch_size, double fraction);

/// Blind-spot corruption: picks round(fraction * S^2) distinct pixels and
/// replaces each with a random unmasked pixel from its 5x5 neighbourhood.
MaskedPatch apply_blindspot_mask(const Patch& patch, double fraction, Rng& rng);

struct CropRecord {
  int height = 0;  // original size
  int width = 0;
  int pad_bottom = 0;
  int pad_right = 0;

  bool empty() const { return pad_bottom == 0 && pad_right == 0; }
};

struct PaddedImage {
  GrayImage image;
  CropRecord crop;
};

/// Reflect-pads the bottom and right edges up to multiples of `multiple`.
PaddedImage pad_to_multiple(const GrayImage& image, int multiple);

/// Undoes pad_to_multiple.
GrayImage crop(const GrayImage& image, const CropRecord& record);

/// Mirror index without repeating the edge sample (…2 1 0 1 2…).
int reflect_index(int i, int n);

}  // namespace gdm
