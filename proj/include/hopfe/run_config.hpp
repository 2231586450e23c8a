#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopfe/data.hpp"
#include "hopfe/errors.hpp"
#include "hopfe/model.hpp"
#include "hopfe/training.hpp"

namespace hopfe {

// A bad configuration value; `flag()` names the option at fault ("--gamma").
class ConfigError : public InvalidConfig {
 public:
  ConfigError(std::string flag, const std::string& what)
      : InvalidConfig(flag + ": " + what), flag_(std::move(flag)) {}
  const std::string& flag() const noexcept { return flag_; }

 private:
  std::string flag_;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path semantics;
  std::filesystem::path vectors;
  std::string profile;
};

// Option names shared by the JSON config file and the command line
// (`"gamma": 6` in the file, `--gamma 6` on the command line).
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "data",  "out", "checkpoint", "dim",   "heads",       "batch",    "neg",       "alpha",
      "gamma", "lr",  "decay",      "steps", "valid-every", "variant",  "matching",  "semantics",
      "vectors", "seed", "threads", "profile", "grad-check-interval", "monitor", "monitor-sample"};
  return keys;
}

namespace detail {

inline std::string flag_name(const std::string& key) { return "--" + key; }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(flag_name(key), "expected a number, got '" + text + "'");
  }
  return value;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  if (!text.empty() && text.front() == '-') throw ConfigError(flag_name(key), "must not be negative");
  return parse_number<std::size_t>(key, text);
}

inline std::string json_value_text(const std::string& key, const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v.get<double>());
    return std::string(buf, ptr);
  }
  throw ConfigError(flag_name(key), "expected a string or number in the config file");
}

inline void apply_profile(RunConfig& cfg, const std::string& name) {
  if (name.empty()) return;
  if (name != "paper") throw ConfigError("--profile", "unknown profile '" + name + "' (expected paper)");
  // Benchmark-scale settings drawn from the published search grid.
  cfg.model.dim = 500;
  cfg.model.gamma = 6.0;
  cfg.model.alpha = 1.0;
  cfg.train.batch_size = 1024;
  cfg.train.neg_samples = 256;
  cfg.train.learning_rate = 0.1;
  cfg.train.decay_rate = 0.1;
  cfg.train.max_steps = 100000;
  cfg.train.valid_every = 10000;
  cfg.train.threads = std::max(1u, std::thread::hardware_concurrency());
  cfg.profile = name;
}

inline void apply_value(RunConfig& cfg, const std::string& key, const std::string& v) {
  auto positive = [&](double x) {
    if (!(x > 0.0)) throw ConfigError(flag_name(key), "must be positive, got '" + v + "'");
    return x;
  };
  auto at_least_one = [&](std::size_t x) {
    if (x < 1) throw ConfigError(flag_name(key), "must be at least 1");
    return x;
  };
  try {
    if (key == "data") cfg.data = v;
    else if (key == "out") cfg.out = v;
    else if (key == "checkpoint") cfg.checkpoint = v;
    else if (key == "semantics") cfg.semantics = v;
    else if (key == "vectors") cfg.vectors = v;
    else if (key == "dim") cfg.model.dim = at_least_one(parse_count(key, v));
    else if (key == "heads") cfg.model.heads = at_least_one(parse_count(key, v));
    else if (key == "batch") cfg.train.batch_size = at_least_one(parse_count(key, v));
    else if (key == "neg") cfg.train.neg_samples = parse_count(key, v);
    else if (key == "alpha") cfg.model.alpha = positive(parse_number<double>(key, v));
    else if (key == "gamma") cfg.model.gamma = positive(parse_number<double>(key, v));
    else if (key == "lr") cfg.train.learning_rate = positive(parse_number<double>(key, v));
    else if (key == "decay") {
      const double d = positive(parse_number<double>(key, v));
      if (d > 1.0) throw ConfigError(flag_name(key), "must lie in (0, 1]");
      cfg.train.decay_rate = d;
    } else if (key == "steps") cfg.train.max_steps = at_least_one(parse_count(key, v));
    else if (key == "valid-every") cfg.train.valid_every = parse_count(key, v);
    else if (key == "variant") cfg.model.variant = parse_variant(v);
    else if (key == "matching") cfg.model.matching = parse_matching(v);
    else if (key == "seed") cfg.train.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "threads") cfg.train.threads = at_least_one(parse_count(key, v));
    else if (key == "grad-check-interval") cfg.train.grad_check_interval = parse_count(key, v);
    else if (key == "monitor") cfg.train.monitor = parse_split(v);
    else if (key == "monitor-sample") cfg.train.monitor_sample = parse_count(key, v);
    else if (key == "profile") {}  // applied first, see parse_config
    else throw ConfigError(flag_name(key), "unknown option");
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidConfig& e) {
    throw ConfigError(flag_name(key), e.what());
  }
}

}  // namespace detail

using FlagValues = std::vector<std::pair<std::string, std::string>>;

// Defaults, then the profile, then the JSON file, then flags; later sources
// win. Throws ConfigError naming the offending flag.
inline RunConfig parse_config(const nlohmann::json& file, const FlagValues& flags) {
  if (!file.is_null() && !file.is_object()) throw ConfigError("--config", "config file must hold a JSON object");
  RunConfig cfg;
  std::string profile;
  if (file.is_object() && file.contains("profile")) profile = detail::json_value_text("profile", file.at("profile"));
  for (const auto& [key, value] : flags) {
    if (key == "profile") profile = value;
  }
  detail::apply_profile(cfg, profile);
  if (file.is_object()) {
    for (const auto& [key, value] : file.items()) detail::apply_value(cfg, key, detail::json_value_text(key, value));
  }
  for (const auto& [key, value] : flags) detail::apply_value(cfg, key, value);

  if (cfg.model.variant == Variant::kNoHopf && cfg.model.heads != 1) {
    throw ConfigError("--heads", "heads > 1 requires --variant hopfe (no-hopf has no fibers)");
  }
  if (cfg.semantics.empty() != cfg.vectors.empty()) {
    throw ConfigError(cfg.semantics.empty() ? "--semantics" : "--vectors",
                      "--semantics and --vectors must be given together");
  }
  if (!cfg.semantics.empty() && cfg.model.heads > kAttributeKinds) {
    throw ConfigError("--heads", "semantics support at most 4 heads (one per attribute kind)");
  }
  for (const auto& [flag, path] : {std::pair{"--data", cfg.data}, std::pair{"--semantics", cfg.semantics},
                                   std::pair{"--vectors", cfg.vectors}}) {
    if (!path.empty() && !std::filesystem::exists(path)) {
      throw ConfigError(flag, "path does not exist: " + path.string());
    }
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"dim", c.model.dim},
          {"heads", c.model.heads},
          {"variant", to_string(c.model.variant)},
          {"matching", to_string(c.model.matching)},
          {"gamma", c.model.gamma},
          {"alpha", c.model.alpha},
          {"batch", c.train.batch_size},
          {"neg", c.train.neg_samples},
          {"lr", c.train.learning_rate},
          {"decay", c.train.decay_rate},
          {"steps", c.train.max_steps},
          {"valid-every", c.train.valid_every},
          {"seed", c.train.seed},
          {"threads", c.train.threads},
          {"data", c.data.string()},
          {"semantics", c.semantics.string()},
          {"vectors", c.vectors.string()},
          {"profile", c.profile}};
}

// Width of a token vector file: the value count of its first vector line.
inline std::size_t infer_vector_width(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::blank(line)) continue;
    std::istringstream fields(line);
    std::string token, num;
    fields >> token;
    std::size_t n = 0;
    while (fields >> num) ++n;
    if (lineno == 1 && n == 1) continue;  // word2vec "<count> <width>" header
    if (n == 0) throw ParseError(path.string(), lineno, "token without values");
    return n;
  }
  throw ParseError(path.string(), 0, "no token vectors");
}

}  // namespace hopfe
