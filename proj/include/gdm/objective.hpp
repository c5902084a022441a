#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdm/image.hpp"

namespace gdm {

// Stabilizer added to the norm product of the spectral cosine similarity.
inline constexpr double kSpectralEpsilon = 1e-8;

/// Per-channel trade-off weights; they must sum to one.
struct ChannelWeights {
  double w1 = 0.5;
  double w2 = 0.5;

  void validate() const;
  double of(int channel_id) const;
};

enum class Reduction { kMean, kSum };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);

/// Mean of (pred - target)^2 over the masked coordinates only.
double masked_mse(const Matrix& pred, std::span<const double> target_values,
                  std::span<const Coord> mask_coords);

/// Cosine similarity of the center-shifted FFT magnitudes of two patches.
double fft_cosine_similarity(const Matrix& pred, const Matrix& target);

struct ValueAndGradient {
  double value = 0.0;
  Matrix gradient;  // d(value)/d(pred)
};

ValueAndGradient masked_mse_with_gradient(const Matrix& pred,
                                          std::span<const double> target_values,
                                          std::span<const Coord> mask_coords);

ValueAndGradient fft_cosine_similarity_with_gradient(const Matrix& pred, const Matrix& target);

/// Predictions for one channel's batch, aligned with the masked patches fed
/// to the network.
struct ChannelBatch {
  int channel_id = 1;
  std::vector<Matrix> predictions;
  std::vector<MaskedPatch> patches;
};

struct ChannelTerms {
  double mse = 0.0;
  std::optional<double> fft_similarity;  // absent when the spectral term is off
};

struct LossBreakdown {
  double l_px = 0.0;
  std::optional<double> l_fft;
  double total = 0.0;
  std::map<int, ChannelTerms> per_channel;
};

/// Weighted pixel and spectral terms: l_px = sum_c w_c reduce_b mse,
/// l_fft = sum_c w_c reduce_b similarity(prediction, clean patch).
LossBreakdown channel_losses(std::span<const ChannelBatch> batches, const ChannelWeights& weights,
                             Reduction reduction, bool spectral_term = true);

/// L = l_px / (1 + l_fft).
double total_loss(double l_px, double l_fft);

/// Pixel-only ablation: returns l_px unchanged when the spectral term is absent.
double total_loss(double l_px, std::optional<double> l_fft);

struct CompositeLoss {
  LossBreakdown breakdown;
  std::vector<std::vector<Matrix>> gradients;  // [batch index][patch] -> dL/d(prediction)
};

/// Loss plus gradients of the total with respect to every prediction.
CompositeLoss composite_loss_with_gradients(std::span<const ChannelBatch> batches,
                                            const ChannelWeights& weights, Reduction reduction,
                                            bool spectral_term);

}  // namespace gdm
