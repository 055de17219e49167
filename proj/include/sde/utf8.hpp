#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sde::utf8 {

/// Splits a UTF-8 string into code points, each returned as its own byte
/// string. Invalid lead bytes are kept as single-byte units so that
/// concatenating the result always reproduces the input.
inline std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) {
      len = 2;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::size_t length(std::string_view text) { return code_points(text).size(); }

}  // namespace sde::utf8
