#include "zrigf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "zrigf/error.hpp"

namespace zrigf {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_value(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }

void parse_value(const std::string& key, const std::string& text, double& out) {
  const auto r = std::from_chars(text.data(), text.data() + text.size(), out);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) throw ConfigError(key + ": not a number: " + text);
}
void parse_value(const std::string& key, const std::string& text, std::size_t& out) {
  const auto r = std::from_chars(text.data(), text.data() + text.size(), out);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(key + ": not a non-negative integer: " + text);
  }
}
void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw ConfigError(key + ": expected true or false, got " + text);
  }
}
void parse_value(const std::string&, const std::string& text, std::string& out) { out = text; }

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename Access>
Field field(std::string key, Access access) {
  return {key,
          [access](const TrainConfig& c) { return format_value(access(const_cast<TrainConfig&>(c))); },
          [access, key](TrainConfig& c, const std::string& text) { parse_value(key, text, access(c)); }};
}

void add_stage(std::vector<Field>& fields, const std::string& prefix, StageConfig TrainConfig::*stage) {
  fields.push_back(field(prefix + ".lr", [stage](TrainConfig& c) -> auto& { return (c.*stage).lr; }));
  fields.push_back(field(prefix + ".batch_size", [stage](TrainConfig& c) -> auto& { return (c.*stage).batch_size; }));
  fields.push_back(field(prefix + ".epochs", [stage](TrainConfig& c) -> auto& { return (c.*stage).epochs; }));
  fields.push_back(field(prefix + ".max_steps", [stage](TrainConfig& c) -> auto& { return (c.*stage).max_steps; }));
  fields.push_back(
      field(prefix + ".weight_decay", [stage](TrainConfig& c) -> auto& { return (c.*stage).weight_decay; }));
  fields.push_back(field(prefix + ".freeze", [stage](TrainConfig& c) -> auto& { return (c.*stage).freeze; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(field("model.image_size", [](TrainConfig& c) -> auto& { return c.model.image_size; }));
    f.push_back(field("model.patch_size", [](TrainConfig& c) -> auto& { return c.model.patch_size; }));
    f.push_back(field("model.channels", [](TrainConfig& c) -> auto& { return c.model.channels; }));
    f.push_back(field("model.d_model", [](TrainConfig& c) -> auto& { return c.model.d_model; }));
    f.push_back(field("model.d_shared", [](TrainConfig& c) -> auto& { return c.model.d_shared; }));
    f.push_back(field("model.heads", [](TrainConfig& c) -> auto& { return c.model.heads; }));
    f.push_back(field("model.d_ff", [](TrainConfig& c) -> auto& { return c.model.d_ff; }));
    f.push_back(field("model.layers", [](TrainConfig& c) -> auto& { return c.model.layers; }));
    f.push_back(field("model.max_text_len", [](TrainConfig& c) -> auto& { return c.model.max_text_len; }));
    f.push_back(field("model.max_response_len", [](TrainConfig& c) -> auto& { return c.model.max_response_len; }));
    f.push_back(field("model.mask_block", [](TrainConfig& c) -> auto& { return c.model.mask_block; }));
    f.push_back(field("model.init_tau", [](TrainConfig& c) -> auto& { return c.model.init_tau; }));
    f.push_back(field("seed", [](TrainConfig& c) -> auto& { return c.seed; }));
    f.push_back(field("precision", [](TrainConfig& c) -> auto& { return c.precision; }));
    add_stage(f, "stage1", &TrainConfig::stage1);
    add_stage(f, "stage2", &TrainConfig::stage2);
    f.push_back(field("warmup_fraction", [](TrainConfig& c) -> auto& { return c.warmup_fraction; }));
    f.push_back(field("clip_norm", [](TrainConfig& c) -> auto& { return c.clip_norm; }));
    f.push_back(field("adam.beta1", [](TrainConfig& c) -> auto& { return c.beta1; }));
    f.push_back(field("adam.beta2", [](TrainConfig& c) -> auto& { return c.beta2; }));
    f.push_back(field("adam.eps", [](TrainConfig& c) -> auto& { return c.adam_eps; }));
    f.push_back(field("lambda1", [](TrainConfig& c) -> auto& { return c.lambda1; }));
    f.push_back(field("lambda2", [](TrainConfig& c) -> auto& { return c.lambda2; }));
    f.push_back(field("top_k", [](TrainConfig& c) -> auto& { return c.top_k; }));
    f.push_back(field("mask_ratio", [](TrainConfig& c) -> auto& { return c.mask_ratio; }));
    f.push_back(field("label_smoothing", [](TrainConfig& c) -> auto& { return c.label_smoothing; }));
    f.push_back(field("beam", [](TrainConfig& c) -> auto& { return c.beam; }));
    f.push_back(field("max_generate_len", [](TrainConfig& c) -> auto& { return c.max_generate_len; }));
    f.push_back(field("module.tim", [](TrainConfig& c) -> auto& { return c.toggles.tim; }));
    f.push_back(field("module.tamim", [](TrainConfig& c) -> auto& { return c.toggles.tamim; }));
    f.push_back(field("module.mf", [](TrainConfig& c) -> auto& { return c.toggles.mf; }));
    f.push_back(field("module.it", [](TrainConfig& c) -> auto& { return c.toggles.it; }));
    return f;
  }();
  return all;
}

}  // namespace

std::set<std::string> StageConfig::frozen_groups() const {
  std::set<std::string> out;
  std::stringstream ss(freeze);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    bool known = false;
    for (const auto& g : parameter_groups()) known = known || g == item;
    if (!known) throw ConfigError("unknown parameter group in freeze list: " + item);
    out.insert(item);
  }
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  parse_precision(precision);
  for (const auto* s : {&stage1, &stage2}) {
    if (!(s->lr > 0.0)) throw ConfigError("lr must be positive");
    if (s->batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (s->epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(s->weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    s->frozen_groups();
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must be in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam.eps must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must be in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must be in [0, 1)");
  if (beam < 1) throw ConfigError("beam must be at least 1");
  if (max_generate_len < 1) throw ConfigError("max_generate_len must be at least 1");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

void TrainConfig::apply_text(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(ss, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  c.apply_text(text);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace zrigf
