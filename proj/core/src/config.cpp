#include "latentdr/config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include "latentdr/errors.hpp"
#include "latentdr/io.hpp"

namespace latentdr {

std::string_view to_string(TaskKind t) noexcept {
  return t == TaskKind::LongTail ? "LongTail" : "DG";
}

std::string_view to_string(DegradationKind k) noexcept {
  switch (k) {
    case DegradationKind::SelfAttention: return "SA";
    case DegradationKind::Pool: return "Pool";
    case DegradationKind::Gaussian: return "Gaussian";
  }
  return "unknown";
}

std::string_view to_string(NormPlacement n) noexcept {
  return n == NormPlacement::PreLN ? "PreLN" : "PostLN";
}

DegradationKind parse_degradation_kind(std::string_view text) {
  if (text == "SA" || text == "sa") return DegradationKind::SelfAttention;
  if (text == "Pool" || text == "pool") return DegradationKind::Pool;
  if (text == "Gaussian" || text == "gaussian") return DegradationKind::Gaussian;
  throw ConfigError("unknown operator kind '" + std::string(text) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    return parse_double(value);
  } catch (const ValidationError&) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" +
                      std::string(value) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" +
                    std::string(value) + "'");
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  if (value.empty() || value == "none") return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t end = value.find(',', start);
    if (end == std::string_view::npos) end = value.size();
    out.push_back(parse_integer<std::size_t>(key, trim(value.substr(start, end - start))));
    start = end + 1;
  }
  return out;
}

std::string join_widths(const std::vector<std::size_t>& widths) {
  if (widths.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i != 0) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

template <typename T>
Setter size_setter(T ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    c.*field = parse_integer<T>(k, v);
  };
}

Setter real_setter(double ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    c.*field = parse_real(k, v);
  };
}

Setter bool_setter(bool ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, std::string_view k, std::string_view v) {
    c.*field = parse_bool(k, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"task",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "DG" || v == "dg") {
           c.task = TaskKind::DomainGeneralization;
         } else if (v == "LongTail" || v == "longtail" || v == "LT") {
           c.task = TaskKind::LongTail;
         } else {
           throw ConfigError("config key '" + std::string(k) + "': unknown task '" +
                             std::string(v) + "'");
         }
       }},
      {"classes", size_setter(&ExperimentConfig::classes)},
      {"domains", size_setter(&ExperimentConfig::domains)},
      {"per_cell", size_setter(&ExperimentConfig::per_cell)},
      {"input_dim", size_setter(&ExperimentConfig::input_dim)},
      {"prototype_radius", real_setter(&ExperimentConfig::prototype_radius)},
      {"min_separation", real_setter(&ExperimentConfig::min_separation)},
      {"within_class_std", real_setter(&ExperimentConfig::within_class_std)},
      {"noise_std", real_setter(&ExperimentConfig::noise_std)},
      {"rotation_step", real_setter(&ExperimentConfig::rotation_step)},
      {"scale_step", real_setter(&ExperimentConfig::scale_step)},
      {"shift_norm", real_setter(&ExperimentConfig::shift_norm)},
      {"held_out_rotation", real_setter(&ExperimentConfig::held_out_rotation)},
      {"held_out", size_setter(&ExperimentConfig::held_out)},
      {"train_fraction", real_setter(&ExperimentConfig::train_fraction)},
      {"imbalance_ratio", real_setter(&ExperimentConfig::imbalance_ratio)},
      {"head_count", size_setter(&ExperimentConfig::head_count)},
      {"test_per_class", size_setter(&ExperimentConfig::test_per_class)},
      {"hidden",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.hidden = parse_widths(k, v);
       }},
      {"latent_dim", size_setter(&ExperimentConfig::latent_dim)},
      {"operator",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.op_kind = parse_degradation_kind(v);
       }},
      {"norm",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v != "auto" && v != "PostLN" && v != "PreLN") {
           throw ConfigError("config key '" + std::string(k) + "': expected auto|PostLN|PreLN");
         }
         c.norm = std::string(v);
       }},
      {"pre_ln_mixer_input",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "normalized") {
           c.pre_ln_input = PreLnMixerInput::Normalized;
         } else if (v == "raw") {
           c.pre_ln_input = PreLnMixerInput::Raw;
         } else {
           throw ConfigError("config key '" + std::string(k) + "': expected normalized|raw");
         }
       }},
      {"heads", size_setter(&ExperimentConfig::heads)},
      {"head_dim", size_setter(&ExperimentConfig::head_dim)},
      {"ff_dim", size_setter(&ExperimentConfig::ff_dim)},
      {"dropout", real_setter(&ExperimentConfig::dropout)},
      {"restore_dropout", real_setter(&ExperimentConfig::restore_dropout)},
      {"subset_fraction", real_setter(&ExperimentConfig::subset_fraction)},
      {"noise_scale", real_setter(&ExperimentConfig::noise_scale)},
      {"share_classifier", bool_setter(&ExperimentConfig::share_classifier)},
      {"variant",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.variant = parse_ablation_variant(v);
       }},
      {"batch_size", size_setter(&ExperimentConfig::batch_size)},
      {"epochs", size_setter(&ExperimentConfig::epochs)},
      {"base_lr", real_setter(&ExperimentConfig::base_lr)},
      {"momentum", real_setter(&ExperimentConfig::momentum)},
      {"weight_decay", real_setter(&ExperimentConfig::weight_decay)},
      {"lr_adjust", real_setter(&ExperimentConfig::lr_adjust)},
      {"stop_grad_into_encoder_for_l2",
       bool_setter(&ExperimentConfig::stop_grad_into_encoder_for_l2)},
      {"seed", size_setter(&ExperimentConfig::seed)},
      {"eval_batch_size", size_setter(&ExperimentConfig::eval_batch_size)},
      {"grid_seeds", size_setter(&ExperimentConfig::grid_seeds)},
      {"workers", size_setter(&ExperimentConfig::workers)},
      {"dump_latents", bool_setter(&ExperimentConfig::dump_latents)},
  };
  return table;
}

}  // namespace

NormPlacement ExperimentConfig::resolved_norm() const {
  if (norm == "PostLN") return NormPlacement::PostLN;
  if (norm == "PreLN") return NormPlacement::PreLN;
  return task == TaskKind::LongTail ? NormPlacement::PreLN : NormPlacement::PostLN;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.latent_dim = latent_dim;
  m.classes = classes;
  m.share_classifier = share_classifier;
  m.with_operators = true;
  m.operators.kind = op_kind;
  m.operators.norm = resolved_norm();
  m.operators.pre_ln_input = pre_ln_input;
  m.operators.heads = heads;
  m.operators.head_dim = head_dim;
  m.operators.ff_dim = ff_dim;
  m.operators.dropout_rate = dropout;
  m.operators.restore_dropout_rate = restore_dropout;
  m.operators.subset_fraction = subset_fraction;
  m.operators.noise_scale = noise_scale;
  return m;
}

MultiDomainParams ExperimentConfig::multidomain_params() const {
  MultiDomainParams p;
  p.classes = classes;
  p.domains = domains;
  p.per_cell = per_cell;
  p.input_dim = input_dim;
  p.prototype_radius = prototype_radius;
  p.min_separation = min_separation;
  p.within_class_std = within_class_std;
  p.noise_std = noise_std;
  p.rotation_step = rotation_step;
  p.scale_step = scale_step;
  p.shift_norm = shift_norm;
  if (held_out_rotation >= 0.0) {
    p.override_domain = held_out;
    p.override_rotation = held_out_rotation;
  }
  return p;
}

LongTailConfig ExperimentConfig::longtail_config() const {
  LongTailConfig lt;
  lt.imbalance_ratio = imbalance_ratio;
  lt.classes = classes;
  lt.head_count = head_count;
  lt.test_per_class = test_per_class;
  lt.prototype_radius = prototype_radius;
  lt.min_separation = min_separation;
  lt.within_class_std = within_class_std;
  lt.noise_std = noise_std;
  return lt;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (classes < 2) fail("classes must be >= 2");
  if (input_dim < 2) fail("input_dim must be >= 2");
  if (latent_dim < 2) fail("latent_dim must be >= 2");
  if (task == TaskKind::DomainGeneralization) {
    if (domains < 2) fail("DG task needs domains >= 2");
    if (per_cell < 2) fail("per_cell must be >= 2");
    if (held_out < 0 || static_cast<std::size_t>(held_out) >= domains) {
      fail("held_out must be in [0, domains)");
    }
  } else {
    longtail_class_counts(longtail_config());
    if (test_per_class < 1) fail("test_per_class must be >= 1");
  }
  if (!(train_fraction > 0.0) || train_fraction >= 1.0) fail("train_fraction must be in (0, 1)");
  if (!(prototype_radius > 0.0)) fail("prototype_radius must be positive");
  if (!(within_class_std >= 0.0) || !(noise_std >= 0.0)) fail("noise levels must be nonnegative");
  if (!(1.0 + scale_step * static_cast<double>(domains) > 0.0)) fail("domain scales must stay positive");
  if (heads == 0) fail("heads must be >= 1");
  if (!(dropout >= 0.0) || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (!(restore_dropout >= 0.0) || restore_dropout >= 1.0) fail("restore_dropout must be in [0, 1)");
  if (!(subset_fraction > 0.0) || subset_fraction > 1.0) fail("subset_fraction must be in (0, 1]");
  if (!(noise_scale >= 0.0)) fail("noise_scale must be nonnegative");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (op_kind != DegradationKind::Gaussian && batch_size < 2) {
    fail("batch_size must be >= 2 for SA/Pool degradation");
  }
  if (!(base_lr > 0.0)) fail("base_lr must be positive");
  if (!(momentum >= 0.0) || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
  if (!(lr_adjust > 0.0)) fail("lr_adjust must be positive");
  if (eval_batch_size < 2) fail("eval_batch_size must be >= 2");
  if (grid_seeds < 1) fail("grid_seeds must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_key_values() const {
  const auto num = [](double v) { return format_double(v); };
  return {
      {"task", std::string(to_string(task))},
      {"classes", std::to_string(classes)},
      {"domains", std::to_string(domains)},
      {"per_cell", std::to_string(per_cell)},
      {"input_dim", std::to_string(input_dim)},
      {"prototype_radius", num(prototype_radius)},
      {"min_separation", num(min_separation)},
      {"within_class_std", num(within_class_std)},
      {"noise_std", num(noise_std)},
      {"rotation_step", num(rotation_step)},
      {"scale_step", num(scale_step)},
      {"shift_norm", num(shift_norm)},
      {"held_out_rotation", num(held_out_rotation)},
      {"held_out", std::to_string(held_out)},
      {"train_fraction", num(train_fraction)},
      {"imbalance_ratio", num(imbalance_ratio)},
      {"head_count", std::to_string(head_count)},
      {"test_per_class", std::to_string(test_per_class)},
      {"hidden", join_widths(hidden)},
      {"latent_dim", std::to_string(latent_dim)},
      {"operator", std::string(to_string(op_kind))},
      {"norm", norm},
      {"pre_ln_mixer_input", pre_ln_input == PreLnMixerInput::Raw ? "raw" : "normalized"},
      {"heads", std::to_string(heads)},
      {"head_dim", std::to_string(head_dim)},
      {"ff_dim", std::to_string(ff_dim)},
      {"dropout", num(dropout)},
      {"restore_dropout", num(restore_dropout)},
      {"subset_fraction", num(subset_fraction)},
      {"noise_scale", num(noise_scale)},
      {"share_classifier", share_classifier ? "true" : "false"},
      {"variant", std::string(to_string(variant))},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"base_lr", num(base_lr)},
      {"momentum", num(momentum)},
      {"weight_decay", num(weight_decay)},
      {"lr_adjust", num(lr_adjust)},
      {"stop_grad_into_encoder_for_l2", stop_grad_into_encoder_for_l2 ? "true" : "false"},
      {"seed", std::to_string(seed)},
      {"eval_batch_size", std::to_string(eval_batch_size)},
      {"grid_seeds", std::to_string(grid_seeds)},
      {"workers", std::to_string(workers)},
      {"dump_latents", dump_latents ? "true" : "false"},
  };
}

void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_key_values()) out += k + " = " + v + '\n';
  return out;
}

}  // namespace latentdr
