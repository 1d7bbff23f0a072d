#pragma once

// Flat key = value run configuration. One file drives a whole run: data
// locations, network sizes, loss variant, training schedule, and evaluation
// protocol. Command-line flags overwrite file values through set(). Unknown
// keys are rejected so typos fail loudly instead of silently using defaults.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/data.hpp"
#include "dtgan/discriminator.hpp"
#include "dtgan/generator.hpp"
#include "dtgan/losses.hpp"
#include "dtgan/trainer.hpp"

namespace dtgan {

// Configuration / usage mistakes; the CLI maps these to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace config_detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      // data
      "data_root", "scenes", "held_out", "obs_len", "pred_len", "min_ped",
      "skip", "val_frac",
      // generator
      "embed_dim", "tcn_layers", "tcn_kernel", "cnn_layers", "decoder_kernel",
      // discriminator
      "disc_hidden", "input_mode",
      // loss
      "variant", "gamma", "k_variety", "r_hat_epsilon",
      // training schedule
      "batch_size", "pretrain_lr", "adv_lr", "pretrain_epochs", "adv_epochs",
      "d_steps_per_g", "g_clip_lo", "g_clip_hi", "d_clip_lo", "d_clip_hi",
      "seed",
      // evaluation
      "k_adefde", "k_amdamv",
  };
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace config_detail

class RunConfig {
 public:
  RunConfig() = default;

  // Parses the flat text format: 'key = value' lines, '#' comments, blank
  // lines ignored. Duplicate and unknown keys are errors.
  static RunConfig parse(std::istream& in, const std::string& label = "config") {
    RunConfig rc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = config_detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(label + ":" + std::to_string(lineno) +
                         ": expected 'key = value', got '" + line + "'");
      const auto key = config_detail::trim(line.substr(0, eq));
      const auto value = config_detail::trim(line.substr(eq + 1));
      if (!config_detail::known_keys().count(key))
        throw UsageError(label + ":" + std::to_string(lineno) +
                         ": unknown key '" + key + "'");
      if (rc.kv_.count(key))
        throw UsageError(label + ":" + std::to_string(lineno) +
                         ": duplicate key '" + key + "'");
      if (value.empty())
        throw UsageError(label + ":" + std::to_string(lineno) +
                         ": empty value for key '" + key + "'");
      rc.kv_[key] = value;
    }
    return rc;
  }

  static RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  // Flag override; flags win over file values.
  void set(const std::string& key, const std::string& value) {
    if (!config_detail::known_keys().count(key))
      throw UsageError("unknown config key '" + key + "'");
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  // -- typed accessors, every failure names the key ------------------------

  std::string get_str(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
      throw UsageError("missing config key '" + key + "'");
    return it->second;
  }
  std::string get_str(const std::string& key, const std::string& dflt) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  long long get_int(const std::string& key, long long dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw UsageError("key '" + key + "': expected integer, got '" +
                       it->second + "'");
    }
  }

  double get_double(const std::string& key, double dflt) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw UsageError("key '" + key + "': expected number, got '" +
                       it->second + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
    const long long v = get_int(key, static_cast<long long>(dflt));
    if (v < 0)
      throw UsageError("key '" + key + "': expected non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  // -- domain views ---------------------------------------------------------

  // Data directory: the config key wins, the DTGAN_DATA_DIR environment
  // variable is the fallback.
  std::string data_root() const {
    if (has("data_root")) return get_str("data_root");
    if (const char* env = std::getenv("DTGAN_DATA_DIR"); env && *env)
      return env;
    throw UsageError(
        "missing config key 'data_root' (or set DTGAN_DATA_DIR)");
  }

  std::vector<std::string> scenes() const {
    const auto raw = get_str("scenes");
    std::vector<std::string> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = config_detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty())
      throw UsageError("key 'scenes': expected comma-separated names, got '" +
                       raw + "'");
    return out;
  }

  std::string held_out() const { return get_str("held_out"); }

  int obs_len() const { return static_cast<int>(get_int("obs_len", 8)); }
  int pred_len() const { return static_cast<int>(get_int("pred_len", 12)); }
  int min_ped() const { return static_cast<int>(get_int("min_ped", 3)); }
  int skip() const { return static_cast<int>(get_int("skip", 1)); }
  double val_frac() const { return get_double("val_frac", 0.2); }
  std::uint64_t seed() const { return get_u64("seed", 42); }
  int k_adefde() const { return static_cast<int>(get_int("k_adefde", 20)); }
  int k_amdamv() const { return static_cast<int>(get_int("k_amdamv", 100)); }

  LossConfig loss_config() const {
    LossConfig lc;
    const auto v = get_str("variant", "dtgan");
    try {
      lc.variant = loss_variant_from_string(v);
    } catch (const std::invalid_argument&) {
      throw UsageError("key 'variant': unknown variant '" + v + "'");
    }
    lc.gamma = get_double("gamma", 1.0);
    lc.k_samples = static_cast<int>(get_int("k_variety", 20));
    lc.r_hat_epsilon = get_double("r_hat_epsilon", 1e-8);
    try {
      lc.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return lc;
  }

  GeneratorConfig generator_config() const {
    GeneratorConfig g;
    g.embed_dim = static_cast<int>(get_int("embed_dim", 8));
    g.obs_len = obs_len();
    g.pred_len = pred_len();
    g.tcn_layers = static_cast<int>(get_int("tcn_layers", 2));
    g.tcn_kernel = static_cast<int>(get_int("tcn_kernel", 3));
    g.cnn_layers = static_cast<int>(get_int("cnn_layers", 3));
    g.decoder_kernel = static_cast<int>(get_int("decoder_kernel", 3));
    const auto variant = loss_config().variant;
    g.head = variant == LossVariant::dtgan_g ? OutputHead::gaussian
                                             : OutputHead::point;
    g.radius_channel = variant == LossVariant::dtgan_u;
    try {
      g.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return g;
  }

  DiscriminatorConfig discriminator_config() const {
    DiscriminatorConfig d;
    d.embed_dim = static_cast<int>(get_int("embed_dim", 8));
    d.hidden = static_cast<int>(get_int("disc_hidden", 16));
    const auto m = get_str("input_mode", "obs_plus_future");
    try {
      d.input_mode = disc_input_mode_from_string(m);
    } catch (const std::invalid_argument&) {
      throw UsageError("key 'input_mode': unknown mode '" + m + "'");
    }
    try {
      d.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return d;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch_size = static_cast<int>(get_int("batch_size", 32));
    t.pretrain_lr = get_double("pretrain_lr", 0.001);
    t.adv_lr = get_double("adv_lr", 1e-5);
    t.pretrain_epochs = static_cast<int>(get_int("pretrain_epochs", 50));
    t.adv_epochs = static_cast<int>(get_int("adv_epochs", 100));
    t.d_steps_per_g = static_cast<int>(get_int("d_steps_per_g", 1));
    t.g_clip_lo = get_double("g_clip_lo", -1.0);
    t.g_clip_hi = get_double("g_clip_hi", 1.0);
    t.d_clip_lo = get_double("d_clip_lo", -0.1);
    t.d_clip_hi = get_double("d_clip_hi", 0.1);
    t.seed = seed();
    t.loss = loss_config();
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return t;
  }

 private:
  std::map<std::string, std::string> kv_;
};

// Scene discovery: every regular file directly inside <data_root>/<name>,
// name-sorted. A missing directory is a usage error (bad path or typo).
inline SceneSpec scan_scene_dir(const std::string& data_root,
                                const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(data_root) / name;
  if (!fs::is_directory(dir))
    throw UsageError("scene directory not found: " + dir.string());
  SceneSpec spec;
  spec.name = name;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file())
      spec.files.push_back(entry.path().string());
  std::sort(spec.files.begin(), spec.files.end());
  return spec;
}

inline std::vector<SceneSpec> scan_scenes(const std::string& data_root,
                                          const std::vector<std::string>& names) {
  std::vector<SceneSpec> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(scan_scene_dir(data_root, n));
  return out;
}

}  // namespace dtgan
