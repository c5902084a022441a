#pragma once

#include <filesystem>

#include "json.hpp"

#include "gdm/image.hpp"
#include "gdm/unet.hpp"

namespace gdm {

// A checkpoint is a binary weights file "<base>.gdmw" plus a JSON metadata
// sidecar "<base>.json".
std::filesystem::path weights_path(const std::filesystem::path& base);
std::filesystem::path metadata_path(const std::filesystem::path& base);

struct Checkpoint {
  Model model;
  nlohmann::json metadata;
};

/// Writes both files. metadata["unet_spec"] is always set from the model.
void save_checkpoint(const Model& model, const nlohmann::json& metadata,
                     const std::filesystem::path& base);

/// Rebuilds the model from the metadata's spec and reads every tensor;
/// any missing, truncated, or mis-shaped piece raises CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& base);

struct DenoiseOptions {
  bool force_tiling = false;
  int tile_size = 128;
  int overlap = 32;
};

/// Full-image inference: reflect-pad to a multiple of 4, one forward pass,
/// crop, clamp to [0, 1]. Falls back to tiled inference if allocation fails.
GrayImage denoise_image(const Model& model, const GrayImage& image,
                        const DenoiseOptions& options = {});

/// Tiled inference with linear feathering across `overlap`-pixel seams.
GrayImage denoise_tiled(const Model& model, const GrayImage& image, int tile_size, int overlap);

/// Runs the network on a single padded image and returns raw (unclamped) output.
Matrix forward_image(const Model& model, const Matrix& pixels);

}  // namespace gdm
