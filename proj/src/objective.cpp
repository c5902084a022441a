#include "gdm/objective.hpp"

#include <cmath>

#include "gdm/error.hpp"
#include "gdm/spectral.hpp"

namespace gdm {

void ChannelWeights::validate() const {
  if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw ConfigError("channel weights must be non-negative");
  if (std::abs(w1 + w2 - 1.0) > 1e-9) {
    throw ConfigError("channel weights must sum to 1 (got " + std::to_string(w1) + " + " +
                      std::to_string(w2) + ")");
  }
}

double ChannelWeights::of(int channel_id) const {
  switch (channel_id) {
    case 1: return w1;
    case 2: return w2;
    default: throw ConfigError("no weight configured for channel " + std::to_string(channel_id));
  }
}

std::string to_string(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction reduction_from_string(const std::string& s) {
  if (s == "mean") return Reduction::kMean;
  if (s == "sum") return Reduction::kSum;
  throw ConfigError("reduction must be 'mean' or 'sum', got '" + s + "'");
}

namespace {

void check_mask(const Matrix& pred, std::span<const double> target_values,
                std::span<const Coord> mask_coords) {
  if (mask_coords.empty()) throw InvalidInput("masked MSE needs at least one masked pixel");
  if (mask_coords.size() != target_values.size()) {
    throw InvalidInput("mask coordinates and target values differ in length");
  }
  for (const Coord& c : mask_coords) {
    if (c.row < 0 || c.row >= pred.rows() || c.col < 0 || c.col >= pred.cols()) {
      throw InvalidInput("mask coordinate out of bounds");
    }
  }
}

void check_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("spectral similarity needs equal shapes");
  }
  if (a.size() == 0) throw InvalidInput("spectral similarity of empty patches");
}

}  // namespace

double masked_mse(const Matrix& pred, std::span<const double> target_values,
                  std::span<const Coord> mask_coords) {
  check_mask(pred, target_values, mask_coords);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask_coords.size(); ++i) {
    const double d = pred(mask_coords[i].row, mask_coords[i].col) - target_values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(mask_coords.size());
}

ValueAndGradient masked_mse_with_gradient(const Matrix& pred,
                                          std::span<const double> target_values,
                                          std::span<const Coord> mask_coords) {
  check_mask(pred, target_values, mask_coords);
  ValueAndGradient out;
  out.gradient = Matrix::Zero(pred.rows(), pred.cols());
  const double n = static_cast<double>(mask_coords.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < mask_coords.size(); ++i) {
    const auto [r, c] = mask_coords[i];
    const double d = pred(r, c) - target_values[i];
    sum += d * d;
    out.gradient(r, c) += 2.0 * d / n;
  }
  out.value = sum / n;
  return out;
}

double fft_cosine_similarity(const Matrix& pred, const Matrix& target) {
  check_same_shape(pred, target);
  const Matrix a = shifted_spectrum(pred).cwiseAbs();
  const Matrix b = shifted_spectrum(target).cwiseAbs();
  const double dot = (a.array() * b.array()).sum();
  return dot / (a.norm() * b.norm() + kSpectralEpsilon);
}

ValueAndGradient fft_cosine_similarity_with_gradient(const Matrix& pred, const Matrix& target) {
  check_same_shape(pred, target);
  // fftshift only permutes bins, so inner products and norms are unchanged
  // and the gradient can be formed on the unshifted spectra.
  const ComplexMatrix fp = fft2(pred);
  const Matrix a = fp.cwiseAbs();
  const Matrix b = fft2(target).cwiseAbs();
  const double dot = (a.array() * b.array()).sum();
  const double na = a.norm();
  const double nb = b.norm();
  const double denom = na * nb + kSpectralEpsilon;

  ValueAndGradient out;
  out.value = dot / denom;

  // d(value)/d|F_k|, then chain through |F_k| = |DFT(pred)_k|:
  // d/d(pred) = Re(unnormalized IDFT of g_k * F_k / |F_k|).
  ComplexMatrix g(fp.rows(), fp.cols());
  for (Eigen::Index i = 0; i < fp.size(); ++i) {
    const double ak = a.data()[i];
    double dk = b.data()[i] / denom;
    if (na > 0.0) dk -= dot * nb * ak / (na * denom * denom);
    g.data()[i] = ak > 0.0 ? fp.data()[i] * (dk / ak) : Complex{};
  }
  out.gradient = ifft2(g).real() * static_cast<double>(fp.size());
  return out;
}

double total_loss(double l_px, double l_fft) {
  if (!(l_px >= 0.0) || !(l_fft >= 0.0)) {
    throw InvalidInput("loss terms must be non-negative");
  }
  return l_px / (1.0 + l_fft);
}

double total_loss(double l_px, std::optional<double> l_fft) {
  if (!l_fft) {
    if (!(l_px >= 0.0)) throw InvalidInput("loss terms must be non-negative");
    return l_px;
  }
  return total_loss(l_px, *l_fft);
}

namespace {

double batch_scale(std::size_t count, Reduction reduction) {
  return reduction == Reduction::kMean ? 1.0 / static_cast<double>(count) : 1.0;
}

void check_batches(std::span<const ChannelBatch> batches, const ChannelWeights& weights) {
  if (batches.empty()) throw ConfigError("at least one channel must be present");
  weights.validate();
  for (const auto& b : batches) {
    weights.of(b.channel_id);
    if (b.patches.empty()) throw InvalidInput("channel batch is empty");
    if (b.predictions.size() != b.patches.size()) {
      throw InvalidInput("predictions and patches differ in count");
    }
  }
}

}  // namespace

LossBreakdown channel_losses(std::span<const ChannelBatch> batches, const ChannelWeights& weights,
                             Reduction reduction, bool spectral_term) {
  check_batches(batches, weights);
  LossBreakdown out;
  if (spectral_term) out.l_fft = 0.0;
  for (const auto& batch : batches) {
    const double w = weights.of(batch.channel_id);
    const double scale = batch_scale(batch.patches.size(), reduction);
    ChannelTerms terms;
    double sim = 0.0;
    for (std::size_t i = 0; i < batch.patches.size(); ++i) {
      const auto& p = batch.patches[i];
      terms.mse += scale * masked_mse(batch.predictions[i], p.original_values, p.mask_coords);
      if (spectral_term) sim += scale * fft_cosine_similarity(batch.predictions[i], p.clean);
    }
    if (spectral_term) {
      terms.fft_similarity = sim;
      *out.l_fft += w * sim;
    }
    out.l_px += w * terms.mse;
    out.per_channel[batch.channel_id] = terms;
  }
  out.total = total_loss(out.l_px, out.l_fft);
  return out;
}

CompositeLoss composite_loss_with_gradients(std::span<const ChannelBatch> batches,
                                            const ChannelWeights& weights, Reduction reduction,
                                            bool spectral_term) {
  check_batches(batches, weights);
  CompositeLoss out;
  auto& bd = out.breakdown;
  if (spectral_term) bd.l_fft = 0.0;

  // First pass: values and per-term gradients.
  std::vector<std::vector<Matrix>> mse_grads(batches.size());
  std::vector<std::vector<Matrix>> sim_grads(batches.size());
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& batch = batches[bi];
    const double w = weights.of(batch.channel_id);
    const double scale = batch_scale(batch.patches.size(), reduction);
    ChannelTerms terms;
    double sim = 0.0;
    for (std::size_t i = 0; i < batch.patches.size(); ++i) {
      const auto& p = batch.patches[i];
      auto mse = masked_mse_with_gradient(batch.predictions[i], p.original_values, p.mask_coords);
      terms.mse += scale * mse.value;
      mse_grads[bi].push_back(std::move(mse.gradient) * (w * scale));
      if (spectral_term) {
        auto s = fft_cosine_similarity_with_gradient(batch.predictions[i], p.clean);
        sim += scale * s.value;
        sim_grads[bi].push_back(std::move(s.gradient) * (w * scale));
      }
    }
    if (spectral_term) {
      terms.fft_similarity = sim;
      *bd.l_fft += w * sim;
    }
    bd.l_px += w * terms.mse;
    bd.per_channel[batch.channel_id] = terms;
  }
  bd.total = total_loss(bd.l_px, bd.l_fft);

  // Second pass: chain through L = l_px / (1 + l_fft).
  const double d_px = spectral_term ? 1.0 / (1.0 + *bd.l_fft) : 1.0;
  const double d_fft = spectral_term ? -bd.l_px / ((1.0 + *bd.l_fft) * (1.0 + *bd.l_fft)) : 0.0;
  out.gradients.resize(batches.size());
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    for (std::size_t i = 0; i < mse_grads[bi].size(); ++i) {
      Matrix g = mse_grads[bi][i] * d_px;
      if (spectral_term) g += sim_grads[bi][i] * d_fft;
      out.gradients[bi].push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace gdm
