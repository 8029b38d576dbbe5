// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cloudtomo/common.hpp"

namespace cloudtomo::io {

// Binary artifact files are little-endian; this code assumes a little-endian
// host (checked at startup in the CLI).

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError(std::string("truncated file while reading ") + what);
  return v;
}

template <typename T>
void write_array(std::ostream& os, const T* data, size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_array(std::istream& is, T* data, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw IoError(std::string("truncated file while reading ") + what);
}

inline void write_magic(std::ostream& os, const char magic[8]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char magic[8], const char* what) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0)
    throw IoError(std::string("bad magic for ") + what + " (corrupt or wrong file type)");
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
  auto n = read_pod<uint64_t>(is, what);
  if (n > (1ULL << 32)) throw IoError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError(std::string("truncated file while reading ") + what);
  return s;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

uint64_t file_hash(const std::string& path);

}  // namespace cloudtomo::io
