#include "modeflow/digest.hpp"

#include <array>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

std::string sha256_bytes(const void* data, std::size_t size) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

}  // namespace

std::string sha256_hex(std::string_view data) { return sha256_bytes(data.data(), data.size()); }

std::string sha256_hex(std::span<const double> values) {
    return sha256_bytes(values.data(), values.size_bytes());
}

}  // namespace modeflow
