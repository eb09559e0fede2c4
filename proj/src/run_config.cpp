#include "gae/run_config.hpp"

#include "gae/csv.hpp"
#include "gae/error.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace gae {

namespace {

const std::vector<double> kDefaultLengthscales = {0.16, 0.32, 0.64};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const std::string t = trim(v);
  const long long x = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t.empty() || t[0] == '-')
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  char* end = nullptr;
  const unsigned long long x = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const std::string t = trim(v);
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  if (trim(v).empty()) return items;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    items.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const std::string& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const std::string& item : split_list(v)) out.push_back(static_cast<int>(to_int(key, item)));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_g17(v[i]);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Sorted by key; this table is both the parser and the config.lock writer.
const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> h = {
      {"append_edge_norm",
       [](RunConfig& c, const std::string& v) { c.append_edge_norm = to_bool("append_edge_norm", v); },
       [](const RunConfig& c) { return std::string(c.append_edge_norm ? "true" : "false"); }},
      {"augment_pooled_adjacency",
       [](RunConfig& c, const std::string& v) {
         c.augment_pooled_adjacency = to_bool("augment_pooled_adjacency", v);
       },
       [](const RunConfig& c) { return std::string(c.augment_pooled_adjacency ? "true" : "false"); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = static_cast<int>(to_int("batch_size", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"checkpoint_every",
       [](RunConfig& c, const std::string& v) {
         c.train.checkpoint_every = static_cast<int>(to_int("checkpoint_every", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); }},
      {"clip_norm",
       [](RunConfig& c, const std::string& v) { c.train.clip_norm = to_double("clip_norm", v); },
       [](const RunConfig& c) { return format_g17(c.train.clip_norm); }},
      {"decoder_lengthscales",
       [](RunConfig& c, const std::string& v) {
         c.decoder_lengthscales = to_double_list("decoder_lengthscales", v);
       },
       [](const RunConfig& c) { return join_doubles(c.decoder_lengthscales); }},
      {"deterministic",
       [](RunConfig& c, const std::string& v) { c.train.deterministic = to_bool("deterministic", v); },
       [](const RunConfig& c) { return std::string(c.train.deterministic ? "true" : "false"); }},
      {"encoder_lengthscales",
       [](RunConfig& c, const std::string& v) {
         c.encoder_lengthscales = to_double_list("encoder_lengthscales", v);
       },
       [](const RunConfig& c) { return join_doubles(c.encoder_lengthscales); }},
      {"hidden",
       [](RunConfig& c, const std::string& v) { c.hidden = static_cast<Index>(to_int("hidden", v)); },
       [](const RunConfig& c) { return std::to_string(c.hidden); }},
      {"improve_rel",
       [](RunConfig& c, const std::string& v) { c.train.improve_rel = to_double("improve_rel", v); },
       [](const RunConfig& c) { return format_g17(c.train.improve_rel); }},
      {"jobs",
       [](RunConfig& c, const std::string& v) { c.train.jobs = static_cast<int>(to_int("jobs", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.jobs); }},
      {"lr0", [](RunConfig& c, const std::string& v) { c.train.lr0 = to_double("lr0", v); },
       [](const RunConfig& c) { return format_g17(c.train.lr0); }},
      {"lr_decay",
       [](RunConfig& c, const std::string& v) { c.train.lr_decay = to_double("lr_decay", v); },
       [](const RunConfig& c) { return format_g17(c.train.lr_decay); }},
      {"max_epochs",
       [](RunConfig& c, const std::string& v) {
         c.train.max_epochs = static_cast<int>(to_int("max_epochs", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.max_epochs); }},
      {"mp_per_coarse_block",
       [](RunConfig& c, const std::string& v) {
         c.mp_per_coarse_block = static_cast<int>(to_int("mp_per_coarse_block", v));
       },
       [](const RunConfig& c) { return std::to_string(c.mp_per_coarse_block); }},
      {"mp_per_fine_block",
       [](RunConfig& c, const std::string& v) {
         c.mp_per_fine_block = static_cast<int>(to_int("mp_per_fine_block", v));
       },
       [](const RunConfig& c) { return std::to_string(c.mp_per_fine_block); }},
      {"patience",
       [](RunConfig& c, const std::string& v) {
         c.train.patience = static_cast<int>(to_int("patience", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.patience); }},
      {"preset", [](RunConfig& c, const std::string& v) { c.preset = trim(v); },
       [](const RunConfig& c) { return c.preset; }},
      {"radius", [](RunConfig& c, const std::string& v) { c.radius = to_double("radius", v); },
       [](const RunConfig& c) { return format_g17(c.radius); }},
      {"reduction_factors",
       [](RunConfig& c, const std::string& v) {
         c.reduction_factors = to_int_list("reduction_factors", v);
       },
       [](const RunConfig& c) { return join_ints(c.reduction_factors); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_uint("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"val_fraction",
       [](RunConfig& c, const std::string& v) { c.val_fraction = to_double("val_fraction", v); },
       [](const RunConfig& c) { return format_g17(c.val_fraction); }},
  };
  return h;
}

}  // namespace

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const KeyHandler& h : handlers()) {
    if (key == h.key) {
      h.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
      apply_kv(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key=value, got '" + ov + "'");
    apply_kv(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return cfg;
}

void apply_preset(RunConfig& cfg) {
  if (cfg.preset.empty()) return;
  if (cfg.preset == "model1") {
    cfg.encoder_lengthscales.clear();
    cfg.decoder_lengthscales.clear();
  } else if (cfg.preset == "model2") {
    cfg.encoder_lengthscales.clear();
    if (cfg.decoder_lengthscales.empty()) cfg.decoder_lengthscales = kDefaultLengthscales;
  } else if (cfg.preset == "model3") {
    if (cfg.encoder_lengthscales.empty()) cfg.encoder_lengthscales = kDefaultLengthscales;
    if (cfg.decoder_lengthscales.empty()) cfg.decoder_lengthscales = kDefaultLengthscales;
  } else {
    throw ConfigError("unknown preset '" + cfg.preset + "' (expected model1, model2, or model3)");
  }
}

void write_config_lock(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  for (const KeyHandler& h : handlers()) out << h.key << " = " << h.get(cfg) << "\n";
  if (!out) throw IngestError("failed while writing " + path);
}

ModelConfig make_model_config(const RunConfig& cfg, Index input_features, Index edge_features) {
  ModelConfig mc;
  mc.input_features = input_features;
  mc.edge_features = edge_features;
  mc.hidden = cfg.hidden;
  mc.plan.rf = cfg.reduction_factors;
  mc.encoder_mmp = MmpSpec{cfg.encoder_lengthscales, cfg.mp_per_fine_block, cfg.mp_per_coarse_block};
  mc.decoder_mmp = MmpSpec{cfg.decoder_lengthscales, cfg.mp_per_fine_block, cfg.mp_per_coarse_block};
  mc.augment_pooled_adjacency = cfg.augment_pooled_adjacency;
  return mc;
}

GraphBuildOptions make_graph_options(const RunConfig& cfg) {
  GraphBuildOptions opts;
  opts.radius = cfg.radius;
  opts.append_norm = cfg.append_edge_norm;
  return opts;
}

}  // namespace gae
