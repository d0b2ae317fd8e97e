#include "agdh/gka_core.hpp"

namespace agdh::gka {

GroupElement oracle_key(const Scalar& leader_secret, std::span<const Scalar> member_secrets, GroupOps& ops) {
    const auto& params = ops.params();
    Scalar exponent = Scalar::from_u64(1, params);
    for (const auto& s : member_secrets) exponent = ops.scalar_add(exponent, s);
    exponent = ops.scalar_mul(leader_secret, exponent);
    return ops.exp(params.generator(), exponent);
}

}  // namespace agdh::gka
