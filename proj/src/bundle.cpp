#include "diffgan/bundle.hpp"

namespace diffgan {

nlohmann::json to_json(const NormalizationStats& s) {
  return {{"min", s.min}, {"max", s.max}, {"degenerate", s.degenerate}};
}

NormalizationStats normalization_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  s.degenerate = j.at("degenerate").get<std::vector<bool>>();
  if (s.max.size() != s.min.size() || s.degenerate.size() != s.min.size()) {
    throw FormatError("bundle: normalization statistics have inconsistent lengths");
  }
  return s;
}

Checkpoint to_checkpoint(const ModelBundle& b) {
  Checkpoint c;
  c.seed = b.seed;
  for (const auto& [name, e] : b.denoiser.params.prefixed("denoiser/")) c.params.add(name, e.tensor, e.requires_grad);
  nlohmann::json meta = {{"version", ModelBundle::kBundleVersion},
                         {"denoiser", to_json(b.denoiser.config)},
                         {"schedule", to_json(b.denoiser.schedule)},
                         {"normalization", to_json(b.normalization)},
                         {"config", b.config_text},
                         {"extra", b.extra}};
  if (b.controller) {
    const Controller& ctl = *b.controller;
    for (const auto& [name, e] : ctl.generator.prefixed("generator/")) c.params.add(name, e.tensor, e.requires_grad);
    for (const auto& [name, e] : ctl.discriminator.prefixed("discriminator/")) c.params.add(name, e.tensor, e.requires_grad);
    meta["generator"] = to_json(ctl.generator_config);
    meta["discriminator"] = to_json(ctl.discriminator_config);
    meta["mapper"] = to_json(ctl.mapper);
  }
  c.metadata = {{"bundle", meta}};
  c.optimizers = b.optimizers;
  return c;
}

ModelBundle from_checkpoint(const Checkpoint& c) {
  ModelBundle b;
  try {
    const nlohmann::json& meta = c.metadata.at("bundle");
    if (meta.at("version").get<int>() != ModelBundle::kBundleVersion) {
      throw FormatError("bundle: unsupported version " + meta.at("version").dump());
    }
    b.seed = c.seed;
    b.denoiser.config = denoiser_config_from_json(meta.at("denoiser"));
    b.denoiser.schedule = schedule_from_json(meta.at("schedule"));
    b.denoiser.params = c.params.extract("denoiser/");
    b.normalization = normalization_from_json(meta.at("normalization"));
    b.config_text = meta.at("config").get<std::string>();
    b.extra = meta.at("extra");
    if (meta.contains("generator")) {
      Controller ctl;
      ctl.generator_config = generator_config_from_json(meta.at("generator"));
      ctl.discriminator_config = discriminator_config_from_json(meta.at("discriminator"));
      const StepMapKind kind = parse_step_map_kind(meta.at("mapper").at("kind").get<std::string>());
      ctl.mapper = kind == StepMapKind::linear ? StepMapper::linear(b.denoiser.schedule.steps)
                                               : StepMapper::from_schedule(b.denoiser.schedule);
      ctl.generator = c.params.extract("generator/");
      ctl.discriminator = c.params.extract("discriminator/");
      b.controller = std::move(ctl);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle: malformed metadata: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bundle: ") + e.what());
  }
  if (b.denoiser.params.size() == 0) throw FormatError("bundle: no denoiser parameters");
  b.optimizers = c.optimizers;
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) { save_checkpoint(to_checkpoint(bundle), path); }

ModelBundle load_bundle(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

}  // namespace diffgan
