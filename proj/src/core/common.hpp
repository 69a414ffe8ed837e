#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dman {

// Error taxonomy shared by the whole library. The C API maps each class to a
// status code; everything derives from Error so callers can catch broadly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptError : public IoError {
 public:
  using IoError::IoError;
};

// Deterministic random source. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); all distributions are hand-rolled on
// top of it because std:: distribution outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n).
  size_t index(size_t n) {
    if (n == 0) throw InputError("Rng::index: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t threshold = (0 - un) % un;  // 2^64 mod n
    uint64_t x = engine_();
    while (x < threshold) x = engine_();
    return static_cast<size_t>(x % un);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw consumes two engine outputs.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // In-place Fisher-Yates shuffle, iterating from the back.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k entries of a partial Fisher-Yates pass over [0, n); returned in
  // pick order, without replacement. k must not exceed n.
  std::vector<size_t> sample_indices(size_t n, size_t k) {
    if (k > n) throw InputError("Rng::sample_indices: k exceeds n");
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  std::string state_string() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// FNV-1a 64-bit running hash; doubles are folded in as little-endian bytes.
class Fnv1a {
 public:
  void update(const void* bytes, size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ull;
    }
  }

  void update_f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    update(buf, 8);
  }

  void update_u64(uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    update(buf, 8);
  }

  uint64_t digest() const { return hash_; }

 private:
  uint64_t hash_ = 1469598103934665603ull;
};

// Fixed-precision decimal formatting; used everywhere a double lands in a
// text file so that identical values always produce identical bytes.
std::string format_double(double v, int precision);

std::string to_hex(uint64_t v);

// Stable seed derivation for independent substreams of one master seed.
uint64_t derive_seed(uint64_t base, std::string_view tag);

}  // namespace dman
