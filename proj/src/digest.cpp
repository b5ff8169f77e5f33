#include "smoothlab/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <memory>

#include <cereal/external/base64.hpp>

#include "smoothlab/error.hpp"

namespace smoothlab {

static_assert(std::endian::native == std::endian::little,
              "weight serialization assumes a little-endian host");

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_hex(std::span<const double> values) {
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(values.data()),
                                       values.size_bytes()));
}

std::string base64_encode(std::span<const double> values) {
    return cereal::base64::encode(reinterpret_cast<const unsigned char*>(values.data()),
                                  values.size_bytes());
}

std::vector<double> base64_decode_doubles(std::string_view text) {
    const std::string bytes = cereal::base64::decode(std::string(text));
    if (bytes.size() % sizeof(double) != 0)
        throw ParseError("base64 payload is not a whole number of 64-bit floats");
    std::vector<double> values(bytes.size() / sizeof(double));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

} // namespace smoothlab
