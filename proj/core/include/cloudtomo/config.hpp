// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cloudtomo {

// Plain-text key/value config files: one `key = value` per line, `#` starts a
// comment. Schema in docs/CONFIG.md.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);
void write_kv_file(const KvMap& kv, const std::string& path);

int64_t kv_int(const KvMap& kv, const std::string& key, int64_t def);
double kv_double(const KvMap& kv, const std::string& key, double def);
bool kv_bool(const KvMap& kv, const std::string& key, bool def);
std::string kv_str(const KvMap& kv, const std::string& key, const std::string& def);
std::vector<int> kv_int_list(const KvMap& kv, const std::string& key,
                             const std::vector<int>& def);

}  // namespace cloudtomo
