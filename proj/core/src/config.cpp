#include "recon/config.hpp"

#include <fstream>
#include <sstream>

namespace recon {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string KeyValueBlock::lookup(const std::string& key, const std::string* fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    require(fallback != nullptr, ErrorKind::ConfigError, "missing required key: " + key);
    used_.insert(key);
    echo_[key] = *fallback;
    return *fallback;
  }
  used_.insert(key);
  echo_[key] = it->second;
  return it->second;
}

std::string KeyValueBlock::require_str(const std::string& key) const {
  return lookup(key, nullptr);
}

std::string KeyValueBlock::get_str(const std::string& key, const std::string& fallback) const {
  return lookup(key, &fallback);
}

long long KeyValueBlock::require_int(const std::string& key) const {
  const std::string v = lookup(key, nullptr);
  try {
    return std::stoll(v);
  } catch (...) {
    raise(ErrorKind::ConfigError, "key " + key + " is not an integer: " + v);
  }
}

long long KeyValueBlock::get_int(const std::string& key, long long fallback) const {
  const std::string fb = std::to_string(fallback);
  const std::string v = lookup(key, &fb);
  try {
    return std::stoll(v);
  } catch (...) {
    raise(ErrorKind::ConfigError, "key " + key + " is not an integer: " + v);
  }
}

double KeyValueBlock::require_real(const std::string& key) const {
  const std::string v = lookup(key, nullptr);
  try {
    return std::stod(v);
  } catch (...) {
    raise(ErrorKind::ConfigError, "key " + key + " is not a number: " + v);
  }
}

double KeyValueBlock::get_real(const std::string& key, double fallback) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", fallback);
  const std::string fb(buf);
  const std::string v = lookup(key, &fb);
  try {
    return std::stod(v);
  } catch (...) {
    raise(ErrorKind::ConfigError, "key " + key + " is not a number: " + v);
  }
}

uint64_t KeyValueBlock::get_u64(const std::string& key, uint64_t fallback) const {
  const std::string fb = std::to_string(fallback);
  const std::string v = lookup(key, &fb);
  try {
    return std::stoull(v);
  } catch (...) {
    raise(ErrorKind::ConfigError, "key " + key + " is not a u64: " + v);
  }
}

bool KeyValueBlock::get_bool(const std::string& key, bool fallback) const {
  const std::string fb = fallback ? "true" : "false";
  const std::string v = lookup(key, &fb);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  raise(ErrorKind::ConfigError, "key " + key + " is not a bool: " + v);
}

std::vector<double> KeyValueBlock::get_real_list(const std::string& key,
                                                 const std::vector<double>& fallback) const {
  std::string fb;
  for (std::size_t i = 0; i < fallback.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", fallback[i]);
    if (i) fb += ",";
    fb += buf;
  }
  const std::string v = lookup(key, &fb);
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      raise(ErrorKind::ConfigError, "key " + key + " has a non-numeric item: " + item);
    }
  }
  return out;
}

std::vector<std::string> KeyValueBlock::get_str_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  std::string fb;
  for (std::size_t i = 0; i < fallback.size(); ++i) {
    if (i) fb += ",";
    fb += fallback[i];
  }
  const std::string v = lookup(key, &fb);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> KeyValueBlock::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    (void)value;
    if (used_.count(key) == 0) out.push_back(key);
  }
  return out;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open config: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str(), path);
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::map<std::string, std::string>* current = nullptr;
  std::vector<std::map<std::string, std::string>> obs_maps;
  std::map<std::string, std::string> globals;
  current = &globals;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "[observation]") {
      obs_maps.emplace_back();
      current = &obs_maps.back();
      continue;
    }
    require(t[0] != '[', ErrorKind::ConfigError,
            origin + ":" + std::to_string(lineno) + ": unknown section " + t);
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::ConfigError,
            origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    require(!key.empty(), ErrorKind::ConfigError,
            origin + ":" + std::to_string(lineno) + ": empty key");
    (*current)[key] = value;
  }

  cfg.globals = KeyValueBlock(std::move(globals));
  for (auto& m : obs_maps) cfg.observations.emplace_back(std::move(m));
  return cfg;
}

void RunConfig::apply_override(const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  require(eq != std::string::npos, ErrorKind::ConfigError,
          "--set expects key=value, got: " + key_eq_value);
  globals.set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

void RunConfig::fail_on_unused() const {
  std::string bad;
  for (const auto& k : globals.unused_keys()) bad += (bad.empty() ? "" : ", ") + k;
  for (const auto& obs : observations) {
    for (const auto& k : obs.unused_keys()) {
      bad += (bad.empty() ? "" : ", ") + ("[observation]." + k);
    }
  }
  require(bad.empty(), ErrorKind::ConfigError, "unknown config keys: " + bad);
}

std::string RunConfig::render_manifest(const std::string& command) const {
  std::ostringstream out;
  out << "command = " << command << "\n";
  for (const auto& [key, value] : globals.echo()) {
    out << key << " = " << value << "\n";
  }
  for (const auto& obs : observations) {
    out << "[observation]\n";
    for (const auto& [key, value] : obs.echo()) {
      out << key << " = " << value << "\n";
    }
  }
  return out.str();
}

}  // namespace recon
