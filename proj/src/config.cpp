// SPDX-License-Identifier: Apache-2.0
#include "iocf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "iocf/error.hpp"

namespace iocf {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Setting {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define IOCF_SIZE(name, field)                                                                        \
  Setting {                                                                                           \
    name, [](TrainConfig& c, const std::string& v) { c.field = parse_number<std::size_t>(name, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }                                  \
  }
#define IOCF_REAL(name, field)                                                                   \
  Setting {                                                                                      \
    name, [](TrainConfig& c, const std::string& v) { c.field = parse_number<double>(name, v); }, \
        [](const TrainConfig& c) { return format_double(c.field); }                              \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      {"variant", [](TrainConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
       [](const TrainConfig& c) { return "\"" + std::string(to_string(c.model.variant)) + "\""; }},
      IOCF_SIZE("layers", model.layers),
      IOCF_SIZE("encoder_channels", model.encoder_channels),
      IOCF_SIZE("density_channels", model.density_channels),
      IOCF_SIZE("channels", model.channels),
      IOCF_SIZE("queries", model.queries),
      IOCF_SIZE("decoder_layers", model.decoder_layers),
      IOCF_SIZE("heads", model.heads),
      IOCF_SIZE("downsample", model.downsample),
      IOCF_SIZE("ffn_hidden", model.ffn_hidden),
      IOCF_REAL("lambda", match.lambda),
      IOCF_REAL("cost_distance", match.distance),
      IOCF_REAL("cost_score", match.score),
      IOCF_REAL("cost_knn", match.knn),
      IOCF_SIZE("knn_k", match.k),
      IOCF_REAL("lr", lr),
      IOCF_REAL("weight_decay", weight_decay),
      IOCF_REAL("beta1", beta1),
      IOCF_REAL("beta2", beta2),
      IOCF_REAL("adam_eps", adam_eps),
      IOCF_SIZE("batch", batch),
      IOCF_SIZE("steps", steps),
      IOCF_SIZE("epochs", epochs),
      IOCF_SIZE("crop", crop),
      {"augment", [](TrainConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); },
       [](const TrainConfig& c) { return std::string(c.augment ? "true" : "false"); }},
      IOCF_REAL("threshold", threshold),
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      IOCF_SIZE("eval_every", eval_every),
      IOCF_SIZE("checkpoint_every", checkpoint_every),
  };
  return table;
}

#undef IOCF_SIZE
#undef IOCF_REAL

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  match.validate();
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (steps == 0 && epochs == 0) throw ConfigError("steps or epochs must be positive");
  if (crop == 0 || crop % model.downsample != 0) {
    throw ConfigError("crop (" + std::to_string(crop) + ") must be a positive multiple of downsample (" +
                      std::to_string(model.downsample) + ")");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
}

std::size_t TrainConfig::total_steps(std::size_t images) const {
  if (epochs == 0) return steps;
  return epochs * ((images + batch - 1) / batch);
}

TrainConfig paper_train_config() {
  TrainConfig c;
  c.model = paper_model_config();
  c.match.lambda = 0.5;
  c.lr = 1e-5;
  c.weight_decay = 5e-4;
  c.batch = 8;
  c.steps = 0;
  c.epochs = 1500;
  c.crop = 256;
  c.augment = true;
  c.threshold = 0.35;
  return c;
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.model = desk_model_config();
  c.lr = 1e-4;
  c.weight_decay = 5e-4;
  c.batch = 4;
  c.steps = 2000;
  c.epochs = 0;
  c.crop = 256;
  c.threshold = 0.35;
  return c;
}

TrainConfig preset_config(std::string_view name) {
  if (name == "paper") return paper_train_config();
  if (name == "desk") return desk_train_config();
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper or desk)");
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& s : settings()) {
    if (key == s.key) {
      s.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> setting_keys() {
  std::vector<std::string> out;
  for (const auto& s : settings()) out.emplace_back(s.key);
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string body;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      body.push_back(ch);
    }
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    } else if (value.find('"') != std::string::npos) {
      throw ConfigError(where + ": unbalanced quote");
    }
    if (!out.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  for (const auto& [key, value] : parse_config_text(os.str(), path.string())) {
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& s : settings()) out += std::string(s.key) + " = " + s.get(cfg) + "\n";
  return out;
}

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
  return {{"variant", std::string(to_string(cfg.variant))},
          {"layers", cfg.layers},
          {"encoder_channels", cfg.encoder_channels},
          {"density_channels", cfg.density_channels},
          {"channels", cfg.channels},
          {"queries", cfg.queries},
          {"decoder_layers", cfg.decoder_layers},
          {"heads", cfg.heads},
          {"downsample", cfg.downsample},
          {"ffn_hidden", cfg.ffn_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.encoder_channels = j.at("encoder_channels").get<std::size_t>();
    cfg.density_channels = j.at("density_channels").get<std::size_t>();
    cfg.channels = j.at("channels").get<std::size_t>();
    cfg.queries = j.at("queries").get<std::size_t>();
    cfg.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.downsample = j.at("downsample").get<std::size_t>();
    cfg.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["model"] = to_json(cfg.model);
  for (const auto& s : settings()) {
    j["train"][s.key] = nlohmann::json::parse(s.get(cfg));
  }
  return j;
}

}  // namespace iocf
