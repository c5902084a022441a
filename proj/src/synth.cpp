#include "gdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gdm/error.hpp"

namespace gdm {

namespace {

constexpr double kElectronMass = 9.1093837015e-31;  // kg
constexpr double kElectronVolt = 1.602176634e-19;   // J
constexpr double kHbar = 1.054571817e-34;           // J s
constexpr double kPi = std::numbers::pi;

}  // namespace

double fermi_wavevector(double effective_mass_ratio, double chemical_potential_ev) {
  if (!(effective_mass_ratio > 0.0)) throw InvalidInput("effective mass must be positive");
  if (!(chemical_potential_ev > 0.0)) throw InvalidInput("chemical potential must be positive");
  const double k = std::sqrt(2.0 * effective_mass_ratio * kElectronMass * chemical_potential_ev *
                             kElectronVolt) /
                   kHbar;
  return k * 1e-9;
}

void to_json(nlohmann::json& j, const QpiParams& p) {
  j = nlohmann::json{{"effective_mass_ratio", p.effective_mass_ratio},
                     {"chemical_potential_ev", p.chemical_potential_ev},
                     {"image_size_px", p.image_size_px},
                     {"field_of_view_nm", p.field_of_view_nm},
                     {"n_scatterers", p.n_scatterers},
                     {"decay_exponent", p.decay_exponent},
                     {"amplitude", p.amplitude},
                     {"baseline", p.baseline},
                     {"r_min_px", p.r_min_px},
                     {"defect_radius_nm", p.defect_radius_nm},
                     {"seed", p.seed},
                     {"k_f_per_nm", fermi_wavevector(p.effective_mass_ratio,
                                                     p.chemical_potential_ev)}};
}

GrayImage simulate_qpi(const QpiParams& p) {
  const double kf = fermi_wavevector(p.effective_mass_ratio, p.chemical_potential_ev);
  if (p.image_size_px < 1) throw InvalidInput("image size must be positive");
  if (!(p.field_of_view_nm > 0.0)) throw InvalidInput("field of view must be positive");
  if (p.n_scatterers < 1) throw InvalidInput("need at least one scatterer");
  if (!(p.r_min_px > 0.0)) throw InvalidInput("r_min must be positive");

  const int n = p.image_size_px;
  const double px = p.field_of_view_nm / n;
  const double r_min = p.r_min_px * px;

  Rng rng(p.seed);
  std::uniform_real_distribution<double> pos(0.0, p.field_of_view_nm);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  struct Scatterer {
    double x, y, phi;
  };
  std::vector<Scatterer> sc;
  for (int i = 0; i < p.n_scatterers; ++i) {
    const double x = pos(rng);
    const double y = pos(rng);
    sc.push_back({x, y, phase(rng)});
  }

  Matrix f = Matrix::Constant(n, n, p.baseline);
  for (int r = 0; r < n; ++r) {
    const double y = r * px;
    for (int c = 0; c < n; ++c) {
      const double x = c * px;
      double v = 0.0;
      for (const auto& s : sc) {
        const double d = std::hypot(x - s.x, y - s.y);
        v += p.amplitude * std::cos(2.0 * kf * d + s.phi) /
             std::pow(std::max(d, r_min), p.decay_exponent);
      }
      f(r, c) += v;
    }
  }
  const double lo = f.minCoeff();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (const auto& s : sc) {
        if (std::hypot(c * px - s.x, r * px - s.y) < p.defect_radius_nm) f(r, c) = lo;
      }
    }
  }
  return GrayImage::rescaled(f, 8, px);
}

std::string to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::kScanlines: return "scanlines";
    case ArtifactKind::kBrightStrips: return "bright_strips";
    case ArtifactKind::kGaussianNoise: return "gaussian_noise";
  }
  return "scanlines";
}

void to_json(nlohmann::json& j, const ArtifactSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},     {"amplitude", s.amplitude},
                     {"density", s.density},          {"angle_jitter_deg", s.angle_jitter_deg},
                     {"sigma", s.sigma},              {"count", s.count},
                     {"seed", s.seed}};
}

namespace {

void expect_kind(const ArtifactSpec& spec, ArtifactKind kind) {
  if (spec.kind != kind) {
    throw InvalidInput("artifact spec of kind " + to_string(spec.kind) + " passed to the " +
                       to_string(kind) + " injector");
  }
  if (!(spec.amplitude >= 0.0)) throw InvalidInput("artifact amplitude must be >= 0");
}

}  // namespace

GrayImage add_scanlines(const GrayImage& image, const ArtifactSpec& spec) {
  expect_kind(spec, ArtifactKind::kScanlines);
  if (!(spec.density >= 0.0)) throw InvalidInput("scan-line density must be >= 0");
  if (spec.amplitude == 0.0) return image;

  const int h = image.height();
  const int w = image.width();
  const Matrix& src = image.pixels();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Matrix out = src;
  for (int r = 0; r < h; ++r) out.row(r).array() += spec.amplitude * unit(rng);

  std::poisson_distribution<int> count(spec.density * h);
  const int n = count(rng);
  std::uniform_real_distribution<double> row0(0.0, h);
  std::uniform_real_distribution<double> col0(0.0, w);
  std::uniform_real_distribution<double> len(w / 8.0, w / 2.0);
  std::uniform_real_distribution<double> tilt(-spec.angle_jitter_deg, spec.angle_jitter_deg);
  std::bernoulli_distribution sign(0.5);
  BinaryMask hit(h, w);
  for (int i = 0; i < n; ++i) {
    const double r0 = row0(rng);
    const double c0 = col0(rng);
    const double length = len(rng);
    const double a = tilt(rng) * kPi / 180.0;
    const double s = sign(rng) ? spec.amplitude : -spec.amplitude;
    hit.setZero();
    for (double t = 0.0; t < length; t += 0.5) {
      const auto rr = static_cast<int>(std::lround(r0 + t * std::sin(a)));
      const auto cc = static_cast<int>(std::lround(c0 + t * std::cos(a)));
      if (rr < 0 || rr >= h || cc < 0 || cc >= w || hit(rr, cc)) continue;
      hit(rr, cc) = 1;
      out(rr, cc) += s;
    }
  }
  return image.with_pixels(out.cwiseMax(0.0).cwiseMin(1.0));
}

StripResult add_bright_strips(const GrayImage& image, const ArtifactSpec& spec) {
  expect_kind(spec, ArtifactKind::kBrightStrips);
  if (spec.count < 0) throw InvalidInput("strip count must be >= 0");
  const int h = image.height();
  const int w = image.width();
  const double value = (131.0 + 124.0 * std::min(spec.amplitude, 1.0)) / 255.0;

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> row0(0.0, h);
  std::uniform_real_distribution<double> col0(0.0, w);
  std::uniform_real_distribution<double> len(w / 8.0, w / 3.0);
  std::uniform_real_distribution<double> half_width(0.5, 1.5);
  std::uniform_real_distribution<double> tilt(-spec.angle_jitter_deg, spec.angle_jitter_deg);

  StripResult out;
  out.painted = BinaryMask::Zero(h, w);
  Matrix px = image.pixels();
  for (int i = 0; i < spec.count; ++i) {
    const double r0 = row0(rng);
    const double c0 = col0(rng);
    const double length = len(rng);
    const double hw = half_width(rng);
    const double a = tilt(rng) * kPi / 180.0;
    const double ux = std::cos(a);
    const double uy = std::sin(a);
    // Pixels within hw of the segment from (c0, r0) along (ux, uy).
    const int pad = static_cast<int>(std::ceil(hw)) + 1;
    const int rlo = std::max(0, static_cast<int>(std::floor(std::min(r0, r0 + length * uy))) - pad);
    const int rhi = std::min(h - 1, static_cast<int>(std::ceil(std::max(r0, r0 + length * uy))) + pad);
    const int clo = std::max(0, static_cast<int>(std::floor(c0)) - pad);
    const int chi = std::min(w - 1, static_cast<int>(std::ceil(c0 + length * ux)) + pad);
    for (int r = rlo; r <= rhi; ++r) {
      for (int c = clo; c <= chi; ++c) {
        const double dx = c - c0;
        const double dy = r - r0;
        const double t = std::clamp(dx * ux + dy * uy, 0.0, length);
        if (std::hypot(dx - t * ux, dy - t * uy) <= hw) {
          px(r, c) = value;
          out.painted(r, c) = 1;
        }
      }
    }
  }
  out.image = image.with_pixels(std::move(px));
  return out;
}

GrayImage add_gaussian_noise(const GrayImage& image, const ArtifactSpec& spec) {
  expect_kind(spec, ArtifactKind::kGaussianNoise);
  if (!(spec.sigma >= 0.0)) throw InvalidInput("noise sigma must be >= 0");
  if (spec.sigma == 0.0) return image;
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  Matrix px = image.pixels();
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    px.data()[i] = std::clamp(px.data()[i] + noise(rng), 0.0, 1.0);
  }
  return image.with_pixels(std::move(px));
}

GrayImage hex_lattice(int size, double period_px, double angle_deg) {
  if (size < 1) throw InvalidInput("lattice size must be positive");
  if (!(period_px > 0.0)) throw InvalidInput("lattice period must be positive");
  const double k = 2.0 * kPi / period_px;
  Matrix f = Matrix::Zero(size, size);
  for (int i = 0; i < 3; ++i) {
    const double a = (angle_deg + 120.0 * i) * kPi / 180.0;
    const double kx = k * std::cos(a);
    const double ky = k * std::sin(a);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) f(r, c) += std::cos(kx * c + ky * r);
    }
  }
  return GrayImage::rescaled(f);
}

}  // namespace gdm
