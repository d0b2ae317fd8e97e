#pragma once

#include <filesystem>
#include <memory>

#include "agdh/gka_core.hpp"

namespace agdh::test {

inline const group::GroupParams& toy() {
    static const auto params = group::GroupParams::toy();
    return params;
}

inline std::shared_ptr<const group::GroupParams> toy_ptr() {
    static const auto params = std::make_shared<const group::GroupParams>(group::GroupParams::toy());
    return params;
}

inline std::shared_ptr<const group::GroupParams> prod_ptr() {
    static const auto params = std::make_shared<const group::GroupParams>(
        group::GroupParams::load(std::filesystem::path(AGDH_PARAMS_DIR) / "modp-1024-160.txt"));
    return params;
}

inline const group::GroupParams& prod() { return *prod_ptr(); }

inline group::Scalar s(std::uint64_t v, const group::GroupParams& p = toy()) { return group::Scalar::from_u64(v, p); }

inline group::GroupElement e(std::uint64_t v, const group::GroupParams& p = toy()) { return p.element(mpz_class(static_cast<unsigned long>(v))); }

// Plain square-and-multiply on machine words; shares no code with GMP paths.
inline std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t mod) {
    std::uint64_t result = 1 % mod;
    base %= mod;
    while (exp) {
        if (exp & 1) result = result * base % mod;
        base = base * base % mod;
        exp >>= 1;
    }
    return result;
}

}  // namespace agdh::test
