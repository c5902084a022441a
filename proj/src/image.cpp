#include "gdm/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "gdm/error.hpp"

namespace gdm {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

double max_level(int bit_depth) { return std::ldexp(1.0, bit_depth) - 1.0; }

void check_bit_depth(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw InvalidInput("bit depth must be 8 or 16, got " + std::to_string(bit_depth));
  }
}

}  // namespace

GrayImage::GrayImage(Matrix pixels, int source_bit_depth, std::optional<double> pixel_size_nm)
    : pixels_(std::move(pixels)),
      source_bit_depth_(source_bit_depth),
      pixel_size_nm_(pixel_size_nm) {
  if (pixels_.rows() < 1 || pixels_.cols() < 1) {
    throw InvalidInput("image must have at least one row and one column");
  }
  check_bit_depth(source_bit_depth_);
  if (pixel_size_nm_ && !(*pixel_size_nm_ > 0.0)) {
    throw InvalidInput("pixel size must be positive");
  }
  for (Eigen::Index i = 0; i < pixels_.size(); ++i) {
    const double v = pixels_.data()[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidInput("pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

GrayImage GrayImage::clamped(Matrix pixels, int source_bit_depth,
                             std::optional<double> pixel_size_nm) {
  pixels = pixels.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0); });
  return GrayImage(std::move(pixels), source_bit_depth, pixel_size_nm);
}

GrayImage GrayImage::rescaled(const Matrix& values, int source_bit_depth,
                              std::optional<double> pixel_size_nm) {
  if (values.size() == 0) throw InvalidInput("cannot rescale an empty matrix");
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  Matrix out = Matrix::Zero(values.rows(), values.cols());
  if (hi > lo) out = (values.array() - lo) / (hi - lo);
  return clamped(std::move(out), source_bit_depth, pixel_size_nm);
}

GrayImage GrayImage::with_pixels(Matrix pixels) const {
  return GrayImage(std::move(pixels), source_bit_depth_, pixel_size_nm_);
}

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("image file not found: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) {
    throw IoError("unreadable image file: " + path.string());
  }
  if (raw.rows < 1 || raw.cols < 1) {
    throw InvalidInput("zero-area image: " + path.string());
  }

  int bit_depth = 0;
  switch (raw.depth()) {
    case CV_8U: bit_depth = 8; break;
    case CV_16U: bit_depth = 16; break;
    default:
      throw InvalidInput("unsupported sample depth (need 8- or 16-bit): " + path.string());
  }

  cv::Mat gray;
  if (raw.channels() == 1) {
    raw.convertTo(gray, CV_64F);
  } else if (raw.channels() == 3 || raw.channels() == 4) {
    std::vector<cv::Mat> planes;
    cv::split(raw, planes);
    gray = cv::Mat::zeros(raw.rows, raw.cols, CV_64F);
    for (int ch = 0; ch < 3; ++ch) {
      cv::Mat plane;
      planes[ch].convertTo(plane, CV_64F);
      gray += plane;
    }
    gray /= 3.0;
  } else {
    throw InvalidInput("unsupported channel count " + std::to_string(raw.channels()));
  }

  Matrix pixels = detail::from_mat(gray) / max_level(bit_depth);
  return GrayImage::clamped(std::move(pixels), bit_depth);
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  if (image.empty()) throw InvalidInput("cannot save an empty image");
  const std::string ext = lower_extension(path);
  const bool tiff = ext == ".tif" || ext == ".tiff";
  if (!tiff && ext != ".png") {
    throw InvalidInput("output must be .png or .tif/.tiff: " + path.string());
  }
  const int bit_depth = tiff ? image.source_bit_depth() : 8;
  const auto levels = quantize(image, bit_depth);

  cv::Mat out(image.height(), image.width(), bit_depth == 16 ? CV_16U : CV_8U);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      if (bit_depth == 16) {
        out.at<std::uint16_t>(r, c) = levels(r, c);
      } else {
        out.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(levels(r, c));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("failed to write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("failed to write " + path.string());
}

Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> quantize(
    const GrayImage& image, int bit_depth) {
  check_bit_depth(bit_depth);
  const double scale = max_level(bit_depth);
  return image.pixels()
      .unaryExpr([scale](double v) {
        return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * scale));
      })
      .eval();
}

GrayImage from_levels(
    const Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& levels,
    int bit_depth) {
  check_bit_depth(bit_depth);
  Matrix pixels = levels.cast<double>() / max_level(bit_depth);
  return GrayImage::clamped(std::move(pixels), bit_depth);
}

std::vector<int> patch_positions(int extent, int patch_size, int stride) {
  if (patch_size < 1) throw InvalidInput("patch size must be >= 1");
  if (stride < 1) throw InvalidInput("stride must be >= 1");
  if (patch_size > extent) {
    throw InvalidInput("patch size " + std::to_string(patch_size) + " exceeds image dimension " +
                       std::to_string(extent));
  }
  std::vector<int> positions;
  for (int p = 0; p + patch_size <= extent; p += stride) positions.push_back(p);
  if (positions.back() != extent - patch_size) positions.push_back(extent - patch_size);
  return positions;
}

std::vector<Patch> extract_patches(const GrayImage& image, int patch_size, int stride) {
  const auto rows = patch_positions(image.height(), patch_size, stride);
  const auto cols = patch_positions(image.width(), patch_size, stride);
  std::vector<Patch> patches;
  patches.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) {
      patches.push_back({image.pixels().block(r, c, patch_size, patch_size), {r, c}});
    }
  }
  return patches;
}

int masked_pixel_count(int patch_size, double fraction) {
  return static_cast<int>(std::lround(fraction * patch_size * patch_size));
}

MaskedPatch apply_blindspot_mask(const Patch& patch, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidInput("mask fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  const int rows = static_cast<int>(patch.pixels.rows());
  const int cols = static_cast<int>(patch.pixels.cols());
  const int total = rows * cols;
  const int count = std::min(masked_pixel_count(rows, fraction), total);

  // Partial Fisher-Yates: the first `count` entries are a uniform sample
  // without replacement.
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, total - 1);
    std::swap(order[i], order[pick(rng)]);
  }

  std::vector<std::uint8_t> is_masked(total, 0);
  for (int i = 0; i < count; ++i) is_masked[order[i]] = 1;

  MaskedPatch out;
  out.clean = patch.pixels;
  out.corrupted = patch.pixels;
  out.origin = patch.origin;
  out.mask_coords.reserve(count);
  out.original_values.reserve(count);

  std::vector<Coord> candidates;
  std::vector<Coord> fallback;
  candidates.reserve(24);
  fallback.reserve(24);
  for (int i = 0; i < count; ++i) {
    const Coord at{order[i] / cols, order[i] % cols};
    candidates.clear();
    fallback.clear();
    for (int dr = -2; dr <= 2; ++dr) {
      for (int dc = -2; dc <= 2; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int r = at.row + dr;
        const int c = at.col + dc;
        if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
        fallback.push_back({r, c});
        if (!is_masked[r * cols + c]) candidates.push_back({r, c});
      }
    }
    // Every neighbour masked only happens at extreme fractions; fall back to
    // any neighbour, and to the pixel itself for a 1x1 patch.
    const auto& pool = candidates.empty() ? fallback : candidates;
    Coord source = at;
    if (!pool.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      source = pool[pick(rng)];
    }
    out.mask_coords.push_back(at);
    out.original_values.push_back(patch.pixels(at.row, at.col));
    out.corrupted(at.row, at.col) = patch.pixels(source.row, source.col);
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

PaddedImage pad_to_multiple(const GrayImage& image, int multiple) {
  if (multiple < 1) throw InvalidInput("padding multiple must be >= 1");
  const int h = image.height();
  const int w = image.width();
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  CropRecord record{h, w, ph - h, pw - w};
  if (record.empty()) return {image, record};

  Matrix padded(ph, pw);
  for (int r = 0; r < ph; ++r) {
    const int sr = reflect_index(r, h);
    for (int c = 0; c < pw; ++c) padded(r, c) = image(sr, reflect_index(c, w));
  }
  return {image.with_pixels(std::move(padded)), record};
}

GrayImage crop(const GrayImage& image, const CropRecord& record) {
  if (record.height > image.height() || record.width > image.width()) {
    throw InvalidInput("crop record larger than image");
  }
  if (record.height == image.height() && record.width == image.width()) return image;
  return image.with_pixels(image.pixels().topLeftCorner(record.height, record.width));
}

}  // namespace gdm
