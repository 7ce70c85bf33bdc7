#ifndef QAFILA_TEXT_HPP
#define QAFILA_TEXT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qafila {

/// Unicode NFC normalization of UTF-8 text. Invalid UTF-8 is returned unchanged.
std::string nfc(std::string_view utf8);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a, seedable. Stable across platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string base64_encode(std::string_view data);

/// Splits on ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

}  // namespace qafila

#endif  // QAFILA_TEXT_HPP
