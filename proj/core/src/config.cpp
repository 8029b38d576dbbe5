// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#include "cloudtomo/config.hpp"

#include <fstream>
#include <sstream>

#include "cloudtomo/common.hpp"
#include "cloudtomo/io.hpp"
#include "cloudtomo/rng.hpp"

namespace cloudtomo {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KvMap parse_kv_text(const std::string& text) {
  KvMap kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

KvMap parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_kv_text(buf.str());
}

void write_kv_file(const KvMap& kv, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config file: " + path);
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

int64_t kv_int(const KvMap& kv, const std::string& key, int64_t def) {
  auto it = kv.find(key);
  if (it == kv.end()) return def;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw ConfigError("key '" + key + "': not an integer: " + it->second);
  }
}

double kv_double(const KvMap& kv, const std::string& key, double def) {
  auto it = kv.find(key);
  if (it == kv.end()) return def;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("key '" + key + "': not a number: " + it->second);
  }
}

bool kv_bool(const KvMap& kv, const std::string& key, bool def) {
  auto it = kv.find(key);
  if (it == kv.end()) return def;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': not a boolean: " + v);
}

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& def) {
  auto it = kv.find(key);
  return it == kv.end() ? def : it->second;
}

std::vector<int> kv_int_list(const KvMap& kv, const std::string& key,
                             const std::vector<int>& def) {
  auto it = kv.find(key);
  if (it == kv.end()) return def;
  std::vector<int> out;
  std::istringstream is(it->second);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("key '" + key + "': bad integer list: " + it->second);
    }
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

namespace io {
uint64_t file_hash(const std::string& path) {
  auto is = open_in(path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    std::streamsize n = is.gcount();
    if (n > 0) h = fnv1a64(buf, static_cast<size_t>(n), h);
  }
  return h;
}
}  // namespace io

}  // namespace cloudtomo
