#pragma once

#include "diffgan/checkpoint.hpp"
#include "diffgan/config.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace diffgan {

/// Everything detection needs: denoiser with its schedule, the optional controller,
/// training normalization statistics and the config the models were trained with.
///
/// Stored as one checkpoint container. Parameter names carry a "denoiser/",
/// "generator/" or "discriminator/" prefix; configs, schedule, mapper and
/// normalization live in the header metadata under "bundle".
struct ModelBundle {
  static constexpr int kBundleVersion = 1;

  TrainedDenoiser denoiser;
  std::optional<Controller> controller;
  NormalizationStats normalization;
  std::string config_text;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
  /// Optimizer moments to resume training ("denoiser", "generator", "discriminator").
  std::map<std::string, AdamWState<float>> optimizers;

  ExperimentConfig config() const { return parse_config(config_text).config; }
};

Checkpoint to_checkpoint(const ModelBundle& bundle);
ModelBundle from_checkpoint(const Checkpoint& ckpt);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

nlohmann::json to_json(const NormalizationStats& s);
NormalizationStats normalization_from_json(const nlohmann::json& j);

}  // namespace diffgan
