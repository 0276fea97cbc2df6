#include "hiermatch/config.hpp"

#include <fstream>
#include <sstream>

#include "hiermatch/tensor.hpp"
#include "hiermatch/version.hpp"

namespace hiermatch {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" +
                    value + "'");
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" +
                      value + "'");
  }
}

std::uint64_t parse_count(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "' expects a nonnegative integer, got '" + value + "'");
  }
}

}  // namespace

void apply_config_override(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  if (key == "d") {
    cfg.model.d = parse_count(value, key);
    if (cfg.model.d == 0) throw ConfigError("d must be positive");
  } else if (key == "d_h") {
    cfg.model.d_h = parse_count(value, key);
    if (cfg.model.d_h == 0) throw ConfigError("d_h must be positive");
  } else if (key == "tau") {
    cfg.model.tau = parse_real(value, key);
    if (cfg.model.tau <= 0.0) throw ConfigError("tau must be positive");
  } else if (key == "margin") {
    cfg.model.margin = parse_real(value, key);
    if (cfg.model.margin < 0.0) throw ConfigError("margin must be nonnegative");
  } else if (key == "no_coattn") {
    cfg.model.no_coattn = parse_bool(value, key);
  } else if (key == "no_hierarchy") {
    cfg.model.no_hierarchy = parse_bool(value, key);
  } else if (key == "explicit_hierarchy") {
    cfg.model.explicit_hierarchy = parse_bool(value, key);
  } else if (key == "lr") {
    cfg.train.lr = parse_real(value, key);
    if (cfg.train.lr <= 0.0) throw ConfigError("lr must be positive");
  } else if (key == "batch") {
    cfg.train.batch = parse_count(value, key);
    if (cfg.train.batch == 0) throw ConfigError("batch must be positive");
  } else if (key == "epochs") {
    cfg.train.epochs = parse_count(value, key);
  } else if (key == "seed") {
    cfg.train.seed = parse_count(value, key);
  } else if (key == "patience") {
    cfg.train.patience = parse_count(value, key);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    apply_config_override(cfg, key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string canonical_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "d=" << cfg.model.d << " d_h=" << cfg.model.d_h
      << " tau=" << cfg.model.tau << " margin=" << cfg.model.margin
      << " no_coattn=" << (cfg.model.no_coattn ? 1 : 0)
      << " no_hierarchy=" << (cfg.model.no_hierarchy ? 1 : 0)
      << " explicit_hierarchy=" << (cfg.model.explicit_hierarchy ? 1 : 0)
      << " lr=" << cfg.train.lr << " batch=" << cfg.train.batch
      << " epochs=" << cfg.train.epochs << " seed=" << cfg.train.seed
      << " patience=" << cfg.train.patience;
  return out.str();
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = seed;
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string fnv1a64_hex(const std::string& text) {
  const std::uint64_t h = fnv1a64(text.data(), text.size());
  std::ostringstream out;
  out << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4)
    out << ((h >> shift) & 0xF);
  return out.str();
}

const char* build_identifier() { return HIERMATCH_BUILD_ID; }

}  // namespace hiermatch
