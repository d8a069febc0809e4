#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vlink::util {

/// ASCII lowercasing; bytes >= 0x80 are left untouched.
std::string to_lower_ascii(std::string_view s);

/// Splits on ASCII whitespace, dropping empty tokens.
std::vector<std::string_view> split_whitespace(std::string_view s);

/// Decodes UTF-8 into code points. Invalid bytes decode to themselves (U+0080..U+00FF).
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
/// 16-hex-digit FNV-1a digest of the bytes.
std::string digest(std::string_view bytes);

/// Shortest round-tripping decimal representation.
std::string format_double(double v);

std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, std::string_view bytes);
void append_file(const std::string& path, std::string_view bytes);

/// Seeded generator with platform-independent derived distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  /// k distinct indices from [0, n), returned in ascending order.
  std::vector<std::size_t> sample(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a root seed and a label.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is visited once.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

void put_u32_le(std::string& out, std::uint32_t v);
void put_f32_le(std::string& out, float v);
std::uint32_t get_u32_le(const unsigned char* p);
float get_f32_le(const unsigned char* p);

/// Quotes a CSV field per RFC 4180 when it contains a delimiter, quote or line break.
std::string csv_field(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace vlink::util
