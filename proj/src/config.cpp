#include "diffgan/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace diffgan {

std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

Scale parse_scale(const std::string& text) {
  if (text == "desk") return Scale::desk;
  if (text == "paper") return Scale::paper;
  throw ConfigError("unknown scale '" + text + "' (expected desk or paper)");
}

namespace {

// --- value codecs ---------------------------------------------------------------------

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("'" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError("'" + s + "' is not a finite number");
  return v;
}

template <class I>
I parse_int(const std::string& s) {
  I v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("'" + s + "' is not an integer");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + s + "' is not a boolean (true/false)");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty item in list '" + s + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

std::string act_name(Activation a) { return a == Activation::silu ? "silu" : "relu"; }
Activation parse_act(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected silu or relu)");
}

// --- field table ------------------------------------------------------------------------

struct Field {
  std::string key;  // section.key
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class M>
Field dbl(std::string key, M member) {
  return {std::move(key), [member](const ExperimentConfig& c) { return fmt_double(member(c)); },
          [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_double(v); }};
}

template <class T, class M>
Field integer(std::string key, M member) {
  return {std::move(key), [member](const ExperimentConfig& c) { return std::to_string(member(c)); },
          [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_int<T>(v); }};
}

template <class M>
Field boolean(std::string key, M member) {
  return {std::move(key), [member](const ExperimentConfig& c) { return fmt_bool(member(c)); },
          [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_bool(v); }};
}

template <class M, class ToS, class FromS>
Field custom(std::string key, M member, ToS to_s, FromS from_s) {
  return {std::move(key), [member, to_s](const ExperimentConfig& c) { return to_s(member(c)); },
          [member, from_s](ExperimentConfig& c, const std::string& v) { member(c) = from_s(v); }};
}

Field optional_beta(std::string key, std::optional<double> ExperimentConfig::*member) {
  return {std::move(key),
          [member](const ExperimentConfig& c) { return (c.*member) ? fmt_double(*(c.*member)) : std::string("auto"); },
          [member](ExperimentConfig& c, const std::string& v) {
            c.*member = v == "auto" ? std::nullopt : std::optional<double>(parse_double(v));
          }};
}

#define M(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using K = AnomalyKind;
    std::vector<Field> f;
    f.push_back(integer<std::uint64_t>("experiment.seed", M(seed)));
    f.push_back(custom("experiment.out", M(out), [](const std::string& s) { return s; },
                       [](const std::string& s) { return s; }));
    f.push_back(custom("experiment.scale", M(scale), [](Scale s) { return to_string(s); }, parse_scale));
    f.push_back(integer<int>("experiment.repeats", M(repeats)));

    f.push_back(custom("data.dataset", M(dataset), [](const std::string& s) { return s; },
                       [](const std::string& s) { return s; }));
    f.push_back(custom(
        "data.kinds", M(kinds), [](const std::vector<K>& v) { return join(v, [](K k) { return to_string(k); }); },
        [](const std::string& s) {
          std::vector<K> out;
          for (const auto& item : split_list(s)) {
            try {
              out.push_back(parse_anomaly_kind(item));
            } catch (const std::exception& e) {
              throw ConfigError(e.what());
            }
          }
          return out;
        }));
    f.push_back(integer<Index>("data.timesteps", M(timesteps)));
    f.push_back(integer<Index>("data.dims", M(dims)));
    f.push_back(boolean("data.strict_normalization", M(strict_normalization)));

    f.push_back(dbl("anomaly.ratio", M(anomaly.ratio)));
    f.push_back(integer<Index>("anomaly.dimension", M(anomaly.dimension)));
    f.push_back(dbl("anomaly.magnitude_min", M(anomaly.magnitude_min)));
    f.push_back(dbl("anomaly.magnitude_max", M(anomaly.magnitude_max)));
    f.push_back(dbl("anomaly.seasonal_factor_min", M(anomaly.seasonal_factor_min)));
    f.push_back(dbl("anomaly.seasonal_factor_max", M(anomaly.seasonal_factor_max)));
    f.push_back(dbl("anomaly.trend_sigmas", M(anomaly.trend_sigmas)));
    f.push_back(integer<Index>("anomaly.interval_min", M(anomaly.interval_min)));
    f.push_back(integer<Index>("anomaly.interval_max", M(anomaly.interval_max)));
    f.push_back(integer<Index>("anomaly.context_window", M(anomaly.context_window)));
    f.push_back(dbl("anomaly.noise_level", M(anomaly.noise_level)));
    f.push_back(boolean("anomaly.contaminate_train", M(anomaly.contaminate_train)));

    f.push_back(integer<Index>("window.size", M(window)));
    f.push_back(integer<Index>("window.train_stride", M(train_stride)));

    f.push_back(integer<int>("schedule.steps", M(steps)));
    f.push_back(optional_beta("schedule.beta_start", &ExperimentConfig::beta_start));
    f.push_back(optional_beta("schedule.beta_end", &ExperimentConfig::beta_end));
    f.push_back(custom("schedule.shape", M(schedule_shape), [](ScheduleShape s) { return to_string(s); },
                       [](const std::string& s) {
                         try {
                           return parse_schedule_shape(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));

    f.push_back(integer<Index>("denoiser.depth", M(denoiser.depth)));
    f.push_back(integer<Index>("denoiser.base_width", M(denoiser.base_width)));
    f.push_back(integer<Index>("denoiser.time_embedding", M(denoiser.time_embedding)));
    f.push_back(integer<Index>("denoiser.groups", M(denoiser.groups)));
    f.push_back(custom("denoiser.activation", M(denoiser.activation), act_name, parse_act));
    f.push_back(dbl("denoiser.lr", M(denoiser_train.adam.lr)));
    f.push_back(dbl("denoiser.weight_decay", M(denoiser_train.adam.weight_decay)));
    f.push_back(integer<Index>("denoiser.batch_size", M(denoiser_train.batch_size)));
    f.push_back(integer<int>("denoiser.epochs", M(denoiser_train.max_epochs)));
    f.push_back(integer<int>("denoiser.patience", M(denoiser_train.patience)));
    f.push_back(dbl("denoiser.min_improvement", M(denoiser_train.min_improvement)));
    f.push_back(integer<Index>("denoiser.max_batches_per_epoch", M(denoiser_train.max_batches_per_epoch)));
    f.push_back(dbl("denoiser.clip_norm", M(denoiser_train.clip_norm)));

    f.push_back(integer<Index>("generator.hidden", M(generator.hidden)));
    f.push_back(integer<Index>("generator.layers", M(generator.layers)));
    f.push_back(boolean("generator.residual", M(generator.residual)));
    f.push_back(dbl("generator.lr", M(gan.adam_generator.lr)));
    f.push_back(dbl("generator.weight_decay", M(gan.adam_generator.weight_decay)));

    f.push_back(custom(
        "discriminator.hidden", M(discriminator.hidden),
        [](const std::vector<Index>& v) { return join(v, [](Index i) { return std::to_string(i); }); },
        [](const std::string& s) {
          std::vector<Index> out;
          for (const auto& item : split_list(s)) out.push_back(parse_int<Index>(item));
          return out;
        }));
    f.push_back(custom("discriminator.activation", M(discriminator.activation), act_name, parse_act));
    f.push_back(dbl("discriminator.logit_bound", M(discriminator.logit_bound)));
    f.push_back(dbl("discriminator.lr", M(gan.adam_discriminator.lr)));
    f.push_back(dbl("discriminator.weight_decay", M(gan.adam_discriminator.weight_decay)));

    f.push_back(dbl("gan.lambda", M(gan.lambda)));
    f.push_back(integer<Index>("gan.batch_size", M(gan.batch_size)));
    f.push_back(integer<int>("gan.epochs", M(gan.epochs)));
    f.push_back(integer<Index>("gan.max_batches_per_epoch", M(gan.max_batches_per_epoch)));
    f.push_back(dbl("gan.clip_norm", M(gan.clip_norm)));
    f.push_back(custom("gan.mapper", M(mapper), [](StepMapKind k) { return to_string(k); },
                       [](const std::string& s) {
                         try {
                           return parse_step_map_kind(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));
    f.push_back(custom("gan.variant", M(gan.variant), [](DenoiseVariant v) { return to_string(v); },
                       [](const std::string& s) {
                         try {
                           return parse_denoise_variant(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));
    f.push_back(boolean("gan.straight_through", M(gan.straight_through)));

    f.push_back(integer<Index>("detect.stride", M(detect_stride)));
    f.push_back(custom("detect.aggregation", M(aggregation), [](Aggregation a) { return to_string(a); },
                       [](const std::string& s) {
                         try {
                           return parse_aggregation(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));
    f.push_back(custom("detect.threshold", M(threshold), [](ThresholdStrategy t) { return to_string(t); },
                       [](const std::string& s) {
                         try {
                           return parse_threshold_strategy(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));
    f.push_back(dbl("detect.quantile", M(quantile)));
    f.push_back(boolean("detect.point_adjust", M(point_adjust)));
    f.push_back(custom("detect.variant", M(detect_variant), [](DenoiseVariant v) { return to_string(v); },
                       [](const std::string& s) {
                         try {
                           return parse_denoise_variant(s);
                         } catch (const std::exception& e) {
                           throw ConfigError(e.what());
                         }
                       }));
    f.push_back(integer<Index>("detect.batch", M(detect_batch)));

    const auto int_list = [](const std::vector<int>& v) { return join(v, [](int i) { return std::to_string(i); }); };
    const auto parse_int_list = [](const std::string& s) {
      std::vector<int> out;
      for (const auto& item : split_list(s)) out.push_back(parse_int<int>(item));
      return out;
    };
    f.push_back(custom("benchmark.baseline_steps", M(baseline_steps), int_list, parse_int_list));
    f.push_back(custom("benchmark.sweep_steps", M(sweep_steps), int_list, parse_int_list));
    return f;
  }();
  return table;
}

#undef M

}  // namespace

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (repeats < 1) fail("experiment.repeats must be >= 1");
  if (kinds.empty()) fail("data.kinds must not be empty");
  if (timesteps < 100) fail("data.timesteps must be >= 100");
  if (dims < 1) fail("data.dims must be >= 1");
  if (!(anomaly.ratio >= 0.0 && anomaly.ratio < 0.5)) fail("anomaly.ratio must lie in [0, 0.5)");
  if (anomaly.dimension < 0 || anomaly.dimension >= dims) fail("anomaly.dimension outside [0, dims)");
  if (window < 1 || train_stride < 1) fail("window.size and window.train_stride must be positive");
  if (window % (Index{1} << denoiser.depth) != 0) {
    fail("window.size " + std::to_string(window) + " must be divisible by 2^denoiser.depth");
  }
  if (steps < 1) fail("schedule.steps must be >= 1");
  const double b0 = resolved_beta_start(), b1 = resolved_beta_end();
  if (!(b0 > 0.0 && b0 <= b1 && b1 < 1.0)) fail("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  if (denoiser_train.batch_size < 1 || gan.batch_size < 1) fail("batch sizes must be positive");
  if (denoiser_train.max_epochs < 1 || gan.epochs < 1) fail("epochs must be positive");
  if (!(gan.lambda > 0.0)) fail("gan.lambda must be positive");
  if (gan.straight_through) fail("gan.straight_through is not supported (f blocks gradients)");
  if (!(quantile > 0.0 && quantile < 1.0)) fail("detect.quantile must lie in (0, 1)");
  if (detect_stride < 0 || detect_batch < 1) fail("detect.stride must be >= 0 and detect.batch >= 1");
  for (int m : baseline_steps)
    if (m < 1 || m > steps) fail("benchmark.baseline_steps entries must lie in [1, schedule.steps]");
  for (int m : sweep_steps)
    if (m < 1 || m > steps) fail("benchmark.sweep_steps entries must lie in [1, schedule.steps]");
  DenoiserConfig dc = denoiser;
  dc.window = window;
  dc.channels = dims;
  try {
    dc.validate();
    generator.validate();
    discriminator.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig::ExperimentConfig() { apply_scale(*this, Scale::paper); }

void apply_scale(ExperimentConfig& cfg, Scale scale, const std::set<std::string>& explicit_keys) {
  cfg.scale = scale;
  const auto set = [&](const std::string& key, auto& field, auto value) {
    if (!explicit_keys.count(key)) field = value;
  };
  const bool desk = scale == Scale::desk;
  set("data.timesteps", cfg.timesteps, Index{desk ? 2000 : 50000});
  set("denoiser.epochs", cfg.denoiser_train.max_epochs, desk ? 40 : 20);
  set("gan.epochs", cfg.gan.epochs, 10);
  set("gan.max_batches_per_epoch", cfg.gan.max_batches_per_epoch, Index{desk ? 20 : 100});
}

ParsedConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }

  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> m;
    for (const auto& f : fields()) m.emplace(f.key, &f);
    return m;
  }();

  ParsedConfig parsed;
  std::vector<std::pair<const Field*, std::string>> assignments;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = index.find(full);
      if (it == index.end()) throw ConfigError("config: unknown key '" + full + "'");
      assignments.emplace_back(it->second, value.data());
      parsed.explicit_keys.insert(full);
    }
  }

  // Scale presets first, then explicit values on top.
  ExperimentConfig& cfg = parsed.config;
  for (const auto& [f, v] : assignments)
    if (f->key == "experiment.scale") f->set(cfg, v);
  apply_scale(cfg, cfg.scale, parsed.explicit_keys);
  for (const auto& [f, v] : assignments) {
    try {
      f->set(cfg, v);
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + f->key + ": " + e.what());
    }
  }
  cfg.validate();
  return parsed;
}

ParsedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return serialize_config(a) == serialize_config(b); }

}  // namespace diffgan
