#pragma once

#include "stx/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <type_traits>

namespace stx::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  require(static_cast<std::size_t>(in.gcount()) == sizeof(T), ErrorKind::Parse, "unexpected end of binary file");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace stx::binio
