#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"

#include "gdm/image.hpp"
#include "gdm/model.hpp"
#include "gdm/objective.hpp"
#include "gdm/unet.hpp"

namespace gdm {

inline constexpr int kConfigSchemaVersion = 1;

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int patch_size = 128;
  std::optional<int> stride;  // patch grid stride; defaults to patch_size
  int batch_size = 8;
  double learning_rate = 1e-4;
  double mask_fraction = 0.1;
  int epochs = 50;
  ChannelWeights weights;
  Reduction reduction = Reduction::kMean;
  bool fft_loss_enabled = true;
  std::uint64_t seed = 0;
  UNetSpec unet;
  AdamParams adam;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  int effective_stride() const { return stride.value_or(patch_size); }
};

// Versioned JSON form. Unknown keys and a missing or wrong schema_version
// are rejected; absent fields keep their defaults.
void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);
TrainConfig load_train_config(const std::filesystem::path& path);

struct ChannelSpec {
  int channel_id = 1;
  GrayImage image;
  double weight = 1.0;
};

/// base_lr * 0.5^floor(epoch / 10)
double lr_at_epoch(double base_lr, int epoch);

/// Same config with the spectral term switched off (pixel loss only).
TrainConfig ablate_fft(TrainConfig config);

/// Adam with bias correction, updating float parameters in place.
class Adam {
 public:
  Adam(const Model& model, AdamParams params);
  void step(Model& model, const Gradients<float>& grads, double lr);
  long long steps_taken() const { return t_; }

 private:
  AdamParams p_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // index within the epoch
  double l_px = 0.0;
  std::optional<double> l_fft;
  double total = 0.0;
  double lr = 0.0;
};

// Per-epoch means over that epoch's optimizer steps.
struct EpochRecord {
  int epoch = 0;
  double l_px = 0.0;
  std::optional<double> l_fft;
  double total = 0.0;
  double lr = 0.0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  long long optimizer_steps = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains a freshly initialized U-Net. Each step draws one batch from every
/// channel with non-zero weight, masks it, and applies one Adam update on the
/// weighted composite loss. An epoch is one pass over the larger channel's
/// patches; smaller channels cycle.
TrainResult train(const std::vector<ChannelSpec>& channels, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// CSV with header epoch,l_px,l_fft,L,lr; l_fft is empty when absent.
void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace gdm
