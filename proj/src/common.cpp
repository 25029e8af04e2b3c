#include "myoattn/common.hpp"

#include <cstdio>

namespace myoattn {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace myoattn
