#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smoothlab {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const double> values);

std::string base64_encode(std::span<const double> values);
std::vector<double> base64_decode_doubles(std::string_view text);

} // namespace smoothlab
