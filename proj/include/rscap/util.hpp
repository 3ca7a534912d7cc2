#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rscap {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

/// Bad user input: config, CLI arguments, malformed files.
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- strings

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline int word_count(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::string tok;
  int n = 0;
  while (in >> tok) ++n;
  return n;
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// "a" | "a and b" | "a, b and c"
inline std::string join_natural(const std::vector<std::string>& parts) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts[0];
  std::string out;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  out += " and ";
  out += parts.back();
  return out;
}

inline std::string replace_all(std::string s, std::string_view from,
                               std::string_view to) {
  if (from.empty()) return s;
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

// ---------------------------------------------------------------- hashing

inline uint64_t fnv1a64(std::string_view s,
                        uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_hash(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline uint64_t mix_hash(uint64_t a, std::string_view s) {
  return mix_hash(a, fnv1a64(s));
}

// ------------------------------------------------------------------- rng
//
// All randomness flows through mt19937_64 plus the two helpers below so
// that seeded results are identical across standard libraries (the std
// distribution objects are not portable).

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline uint64_t uniform_below(std::mt19937_64& g, uint64_t n) {
  return static_cast<uint64_t>(
      (static_cast<unsigned __int128>(g()) * n) >> 64);
}

/// First k slots of a seeded Fisher-Yates shuffle of 0..n-1, in draw order.
inline std::vector<size_t> sample_indices(std::mt19937_64& g, size_t n,
                                          size_t k) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(uniform_below(g, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// ------------------------------------------------------------------ files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << content;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_jsonl(const fs::path& path,
                        const std::vector<ordered_json>& rows) {
  std::string buf;
  for (const auto& row : rows) {
    buf += row.dump();
    buf += '\n';
  }
  write_file(path, buf);
}

inline std::vector<ordered_json> read_jsonl(const fs::path& path) {
  std::vector<ordered_json> rows;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    rows.push_back(ordered_json::parse(line));
  }
  return rows;
}

}  // namespace rscap
