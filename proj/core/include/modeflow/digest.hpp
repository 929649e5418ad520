#pragma once

#include <span>
#include <string>
#include <string_view>

namespace modeflow {

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);
/// SHA-256 over the raw bytes of a double array (host byte order).
std::string sha256_hex(std::span<const double> values);

}  // namespace modeflow
