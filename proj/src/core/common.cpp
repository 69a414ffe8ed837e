#include "core/common.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dman {

std::string Rng::state_string() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (is.fail()) throw CorruptError("Rng::set_state: malformed engine state");
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string to_hex(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t derive_seed(uint64_t base, std::string_view tag) {
  Fnv1a h;
  h.update_u64(base);
  h.update(tag.data(), tag.size());
  return h.digest();
}

}  // namespace dman
