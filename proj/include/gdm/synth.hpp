#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "gdm/image.hpp"

namespace gdm {

struct QpiParams {
  double effective_mass_ratio = 0.38;  // m*/m_e
  double chemical_potential_ev = 0.45;
  int image_size_px = 256;
  double field_of_view_nm = 30.0;
  int n_scatterers = 12;
  double decay_exponent = 0.5;
  double amplitude = 1.0;
  double baseline = 0.0;
  double r_min_px = 2.0;           // distance floor against the 1/r singularity
  double defect_radius_nm = 0.15;  // dark disk drawn at each scatterer
  std::uint64_t seed = 7;
};

void to_json(nlohmann::json& j, const QpiParams& p);

/// Fermi wavevector sqrt(2 m* mu) / hbar in nm^-1.
double fermi_wavevector(double effective_mass_ratio, double chemical_potential_ev);

/// Superposition of circular standing waves cos(2 k_F r + phi) / r^decay
/// around randomly placed point scatterers, min-max normalized. The pixel
/// size is recorded on the image.
GrayImage simulate_qpi(const QpiParams& params);

enum class ArtifactKind { kScanlines, kBrightStrips, kGaussianNoise };

std::string to_string(ArtifactKind k);

struct ArtifactSpec {
  ArtifactKind kind = ArtifactKind::kScanlines;
  double amplitude = 0.2;
  double density = 0.3;           // scan-line segments per image row
  double angle_jitter_deg = 5.0;  // segment tilt range around horizontal
  double sigma = 0.0;             // gaussian noise standard deviation
  int count = 6;                  // number of bright strips
  std::uint64_t seed = 3;
};

void to_json(nlohmann::json& j, const ArtifactSpec& s);

/// Row offsets amplitude * U(-1, 1) plus Poisson(density * H) short jittered
/// row segments shifted by +-amplitude. Clamped to [0, 1].
GrayImage add_scanlines(const GrayImage& image, const ArtifactSpec& spec);

struct StripResult {
  GrayImage image;
  BinaryMask painted;
};

/// Paints `count` near-horizontal strips at intensity
/// (131 + 124 * min(amplitude, 1)) / 255, so every painted pixel clears the
/// 130/255 strip threshold.
StripResult add_bright_strips(const GrayImage& image, const ArtifactSpec& spec);

/// Adds N(0, sigma) per pixel, clamped.
GrayImage add_gaussian_noise(const GrayImage& image, const ArtifactSpec& spec);

/// Hexagonal cosine texture: sum of three plane waves 120 degrees apart.
GrayImage hex_lattice(int size, double period_px, double angle_deg = 0.0);

}  // namespace gdm
