#include "svtas/config.hpp"

#include <fstream>
#include <sstream>

#include "svtas/error.hpp"

namespace svtas {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || x < 0) throw std::invalid_argument(v);
    return std::size_t(x);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

void set_key(Config& cfg, const std::string& section, const std::string& key, const std::string& v) {
  const std::string full = section + "." + key;
  ModelConfig& m = cfg.model;
  TrainerConfig& t = cfg.train;
  if (section == "model") {
    if (key == "profile") {
      if (v != "gtea") throw ConfigError("config: unknown profile '" + v + "'");
      m.clip = {64, 2};
    } else if (key == "k") m.clip.stack = to_size(full, v);
    else if (key == "p") m.clip.skip = to_size(full, v);
    else if (key == "D") m.hbrt.width = to_size(full, v);
    else if (key == "M") m.hbrt.memory = to_size(full, v);
    else if (key == "N1") m.hbrt.layers = to_size(full, v);
    else if (key == "N2") m.agent.refine_blocks = to_size(full, v);
    else if (key == "heads") m.hbrt.heads = to_size(full, v);
    else if (key == "window") m.hbrt.window = to_size(full, v);
    else if (key == "ffn_mult") m.hbrt.ffn_mult = to_size(full, v);
    else if (key == "encoder_hidden") m.encoder.hidden_width = to_size(full, v);
    else if (key == "encoder_layers") m.encoder.layers = to_size(full, v);
    else if (key == "groups") m.encoder.groups = to_size(full, v);
    else if (key == "refine_width") m.agent.refine_width = to_size(full, v);
    else if (key == "half_width") m.sequential_half_width = to_size(full, v);
    else if (key == "paradigm") {
      if (v == "clustering") m.paradigm = Paradigm::clustering;
      else if (v == "sequential") m.paradigm = Paradigm::sequential;
      else throw ConfigError("config: paradigm must be clustering or sequential, got '" + v + "'");
    } else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "reward") {
    if (key == "beta1") t.reward.beta1 = to_double(full, v);
    else if (key == "beta2") t.reward.beta2 = to_double(full, v);
    else if (key == "class_start") t.reward.class_start = int(to_size(full, v));
    else if (key == "eps") t.reward.eps = to_double(full, v);
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "train") {
    if (key == "mode") t.mode = parse_mode(v);
    else if (key == "epochs") t.epochs = to_size(full, v);
    else if (key == "lr") t.optim.lr = to_double(full, v);
    else if (key == "weight_decay") t.optim.weight_decay = to_double(full, v);
    else if (key == "seed") t.seed = to_size(full, v);
    else if (key == "grad_clip") t.grad_clip = to_double(full, v);
    else if (key == "ce_norm") {
      if (v == "per_class") t.ce_norm = CeNormalization::per_class;
      else if (v == "mean") t.ce_norm = CeNormalization::mean;
      else throw ConfigError("config: ce_norm must be per_class or mean, got '" + v + "'");
    } else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "data") {
    if (key == "dataset") cfg.data.dataset = v;
    else if (key == "out") cfg.data.output = v;
    else throw ConfigError("config: unknown key '" + full + "'");
  } else {
    throw ConfigError("config: unknown section [" + section + "]");
  }
}

void validate(const Config& cfg) {
  cfg.model.clip.validate();
  if (cfg.train.epochs == 0) throw ConfigError("config: train.epochs must be >= 1");
  if (cfg.train.optim.lr < 0.0 || cfg.train.optim.weight_decay < 0.0)
    throw ConfigError("config: lr and weight_decay must be non-negative");
  cfg.train.reward.validate();
}

}  // namespace

void ModelConfig::finalize(std::size_t input_width, std::size_t classes) {
  encoder.input_width = input_width;
  encoder.output_width = hbrt.width;
  agent.input_width = hbrt.width;
  agent.classes = classes;
  clip.validate();
  encoder.validate();
  hbrt.validate();
  agent.validate();
}

std::size_t ModelConfig::half_width() const {
  return sequential_half_width ? sequential_half_width : (clip.length() + 1) / 2;
}

Config parse_config(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config:" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "reward" && section != "train" && section != "data")
        throw ConfigError("config:" + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config:" + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError("config:" + std::to_string(lineno) + ": key outside any section");
    set_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto dot = assignment.find('.');
  const auto eq = assignment.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq)
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  set_key(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
          trim(assignment.substr(eq + 1)));
  validate(cfg);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::supervised: return "supervised";
    case TrainMode::mc: return "mc";
    case TrainMode::td: return "td";
  }
  return "?";
}

TrainMode parse_mode(const std::string& text) {
  if (text == "supervised") return TrainMode::supervised;
  if (text == "mc") return TrainMode::mc;
  if (text == "td") return TrainMode::td;
  throw ConfigError("train mode must be supervised, mc or td, got '" + text + "'");
}

}  // namespace svtas
