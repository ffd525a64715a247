#pragma once

#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "protoem/common.hpp"

namespace protoem {

// All hyperparameters and variant flags. Keys in config files, environment
// overrides (PROTOEM_<KEY>) and --set flags mirror the field names exactly.
struct ModelConfig {
  int dim = 768;
  int k_examples = 5;
  int gcn_layers = 1;
  double dropout = 0.2;
  double lambda_coref = 1.0;
  double lambda_temporal = 2.0;
  double lambda_causal = 4.0;
  double lambda_subevent = 4.0;
  double lr_encoder = 2e-5;
  double lr_heads = 3e-4;
  int warmup_steps = 200;
  int batch_size = 8;
  int epochs = 50;
  std::uint64_t seed = 42;

  std::string graph = "on";          // on | off | learned | uniform
  std::string prototypes = "full";   // full | random | event | context
  std::string arch = "default";      // default | two_plm | one_plm | coref_ind
  std::string selection = "topk";    // topk | random

  std::string encoder = "tiny-random";  // tiny-random | pretrained
  std::string encoder_weights;
  int encoder_layers = 2;
  int max_window = 512;
  int vocab_buckets = 4096;
  int subword_chunk = 16;
  std::string mask_symbol = "[MASK]";

  double weight_decay = 0.01;
  double grad_clip = 1.0;
  std::string loss_reduction = "mean";  // mean | sum
  double neg_ratio = 0.0;               // 0 keeps every None-labeled pair
  bool tie_context = true;
  std::string graph_norm = "row";  // row | doubly
  int fnn_depth = 2;
  double train_fraction = 1.0;

  std::array<double, 4> lambdas() const {
    // Task order: coreference, temporal, causal, subevent.
    return {lambda_coref, lambda_temporal, lambda_causal, lambda_subevent};
  }
};

namespace detail {

struct ConfigField {
  std::function<void(ModelConfig&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
};

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    auto num = [&f](const std::string& key, auto ModelConfig::* member) {
      f[key] = ConfigField{
          [member, key](ModelConfig& c, const std::string& v) {
            try {
              using T = std::decay_t<decltype(c.*member)>;
              if constexpr (std::is_same_v<T, int>)
                c.*member = std::stoi(v);
              else if constexpr (std::is_same_v<T, std::uint64_t>)
                c.*member = std::stoull(v);
              else
                c.*member = std::stod(v);
            } catch (const std::exception&) {
              throw ConfigError(key + ": cannot parse number '" + v + "'");
            }
          },
          [member](const ModelConfig& c) {
            std::ostringstream os;
            os << std::setprecision(17) << c.*member;
            return os.str();
          }};
    };
    auto str = [&f](const std::string& key, std::string ModelConfig::* member) {
      f[key] = ConfigField{[member](ModelConfig& c, const std::string& v) { c.*member = v; },
                           [member](const ModelConfig& c) { return c.*member; }};
    };
    auto boolean = [&f](const std::string& key, bool ModelConfig::* member) {
      f[key] = ConfigField{
          [member](ModelConfig& c, const std::string& v) { c.*member = parse_bool(v); },
          [member](const ModelConfig& c) { return c.*member ? "true" : "false"; }};
    };
    num("dim", &ModelConfig::dim);
    num("k_examples", &ModelConfig::k_examples);
    num("gcn_layers", &ModelConfig::gcn_layers);
    num("dropout", &ModelConfig::dropout);
    num("lambda_coref", &ModelConfig::lambda_coref);
    num("lambda_temporal", &ModelConfig::lambda_temporal);
    num("lambda_causal", &ModelConfig::lambda_causal);
    num("lambda_subevent", &ModelConfig::lambda_subevent);
    num("lr_encoder", &ModelConfig::lr_encoder);
    num("lr_heads", &ModelConfig::lr_heads);
    num("warmup_steps", &ModelConfig::warmup_steps);
    num("batch_size", &ModelConfig::batch_size);
    num("epochs", &ModelConfig::epochs);
    num("seed", &ModelConfig::seed);
    str("graph", &ModelConfig::graph);
    str("prototypes", &ModelConfig::prototypes);
    str("arch", &ModelConfig::arch);
    str("selection", &ModelConfig::selection);
    str("encoder", &ModelConfig::encoder);
    str("encoder_weights", &ModelConfig::encoder_weights);
    num("encoder_layers", &ModelConfig::encoder_layers);
    num("max_window", &ModelConfig::max_window);
    num("vocab_buckets", &ModelConfig::vocab_buckets);
    num("subword_chunk", &ModelConfig::subword_chunk);
    str("mask_symbol", &ModelConfig::mask_symbol);
    num("weight_decay", &ModelConfig::weight_decay);
    num("grad_clip", &ModelConfig::grad_clip);
    str("loss_reduction", &ModelConfig::loss_reduction);
    num("neg_ratio", &ModelConfig::neg_ratio);
    boolean("tie_context", &ModelConfig::tie_context);
    str("graph_norm", &ModelConfig::graph_norm);
    num("fnn_depth", &ModelConfig::fnn_depth);
    num("train_fraction", &ModelConfig::train_fraction);
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void config_set(ModelConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

// key=value lines; '#' starts a comment.
inline void config_apply_file(ModelConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r\n");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    try {
      config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

// PROTOEM_<KEY> (upper-cased field name) overrides.
inline void config_apply_env(ModelConfig& cfg, const char* prefix = "PROTOEM_") {
  for (const auto& [key, field] : detail::config_fields()) {
    (void)field;
    std::string env_key = prefix;
    for (char c : key) env_key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const char* v = std::getenv(env_key.c_str())) config_set(cfg, key, v);
  }
}

// "--set key=value" style overrides.
inline void config_apply_overrides(ModelConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    config_set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

// Reports every violation at once.
inline void config_validate(const ModelConfig& c) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  auto one_of = [&](const std::string& key, const std::string& v,
                    std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (v == a) return;
    std::string msg = key + " must be one of {";
    bool first = true;
    for (const char* a : allowed) {
      if (!first) msg += ", ";
      msg += a;
      first = false;
    }
    errors.push_back(msg + "}, got '" + v + "'");
  };
  require(c.dim > 0, "dim must be positive");
  require(c.k_examples >= 1, "k_examples must be >= 1");
  require(c.gcn_layers >= 0, "gcn_layers must be >= 0");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
  for (double l : c.lambdas()) require(l > 0.0, "loss weights must be positive");
  require(c.lr_encoder > 0.0, "lr_encoder must be positive");
  require(c.lr_heads > 0.0, "lr_heads must be positive");
  require(c.warmup_steps >= 1, "warmup_steps must be >= 1");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.epochs >= 1, "epochs must be >= 1");
  one_of("graph", c.graph, {"on", "off", "learned", "uniform"});
  one_of("prototypes", c.prototypes, {"full", "random", "event", "context"});
  one_of("arch", c.arch, {"default", "two_plm", "one_plm", "coref_ind"});
  one_of("selection", c.selection, {"topk", "random"});
  one_of("encoder", c.encoder, {"tiny-random", "pretrained"});
  require(c.encoder != "pretrained" || !c.encoder_weights.empty(),
          "encoder=pretrained requires encoder_weights");
  require(c.encoder_layers >= 1, "encoder_layers must be >= 1");
  require(c.max_window > 2, "max_window must exceed the two boundary markers");
  require(c.vocab_buckets >= 1, "vocab_buckets must be >= 1");
  require(c.subword_chunk >= 1, "subword_chunk must be >= 1");
  one_of("loss_reduction", c.loss_reduction, {"mean", "sum"});
  require(c.neg_ratio >= 0.0, "neg_ratio must be >= 0");
  one_of("graph_norm", c.graph_norm, {"row", "doubly"});
  require(c.fnn_depth >= 1, "fnn_depth must be >= 1");
  require(c.train_fraction > 0.0 && c.train_fraction <= 1.0, "train_fraction must be in (0, 1]");
  require(c.grad_clip >= 0.0, "grad_clip must be >= 0");
  require(c.weight_decay >= 0.0, "weight_decay must be >= 0");
  if (!errors.empty()) {
    std::string all = "invalid configuration:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  for (const auto& [key, field] : detail::config_fields()) j[key] = field.get(cfg);
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  for (const auto& [key, value] : j.items())
    config_set(cfg, key, value.get<std::string>());
  return cfg;
}

}  // namespace protoem
