#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sae {

std::string sha256_hex(std::string_view data);
std::uint32_t crc32(std::span<const unsigned char> data);

}  // namespace sae
