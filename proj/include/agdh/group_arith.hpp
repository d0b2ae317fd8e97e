#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <gmpxx.h>

#include "agdh/bytes.hpp"
#include "agdh/rng.hpp"

namespace agdh::group {

class GroupParams;

/// An exponent in Z_q, always stored reduced.
class Scalar {
public:
    Scalar() = default;
    static Scalar reduced(const mpz_class& value, const GroupParams& params);
    static Scalar from_u64(std::uint64_t value, const GroupParams& params);

    const mpz_class& value() const noexcept { return value_; }
    bool is_zero() const { return value_ == 0; }
    std::uint64_t to_u64() const;

    friend bool operator==(const Scalar& a, const Scalar& b) { return a.value_ == b.value_; }

private:
    explicit Scalar(mpz_class v) : value_(std::move(v)) {}
    mpz_class value_;
};

/// A member of the order-q subgroup of Z_p^*. Values produced by the
/// arithmetic below are members by closure; untrusted values go through
/// GroupParams::element() or decode_element().
class GroupElement {
public:
    GroupElement() : value_(1) {}
    static GroupElement unchecked(mpz_class value) { return GroupElement(std::move(value)); }

    const mpz_class& value() const noexcept { return value_; }
    bool is_identity() const { return value_ == 1; }
    std::uint64_t to_u64() const;

    friend bool operator==(const GroupElement& a, const GroupElement& b) { return a.value_ == b.value_; }
    friend bool operator<(const GroupElement& a, const GroupElement& b) { return a.value_ < b.value_; }

private:
    explicit GroupElement(mpz_class v) : value_(std::move(v)) {}
    mpz_class value_;
};

class GroupParams {
public:
    /// Validates primality of p and q, q | p-1 and that g has order exactly q.
    GroupParams(mpz_class modulus, mpz_class order, mpz_class generator, std::string name);

    /// p=23, q=11, g=2.
    static GroupParams toy();
    /// Parses the `key=<hex>` text format (keys p, q, g, name; '#' comments).
    static GroupParams parse(std::string_view text);
    static GroupParams load(const std::filesystem::path& path);

    const mpz_class& modulus() const noexcept { return p_; }
    const mpz_class& order() const noexcept { return q_; }
    const GroupElement& generator() const noexcept { return g_; }
    const std::string& name() const noexcept { return name_; }
    /// Bytes in an encoded element: the byte length of p.
    std::size_t element_width() const noexcept { return element_width_; }
    /// Bytes needed for a scalar: the byte length of q.
    std::size_t scalar_width() const noexcept { return scalar_width_; }

    /// Subgroup membership test: 1 <= v < p and v^q == 1. Not counted as an exponentiation.
    bool contains(const mpz_class& value) const;
    /// Checked conversion; throws Error(NotInSubgroup).
    GroupElement element(const mpz_class& value) const;

    friend bool operator==(const GroupParams& a, const GroupParams& b);

private:
    mpz_class p_;
    mpz_class q_;
    GroupElement g_;
    std::string name_;
    std::size_t element_width_;
    std::size_t scalar_width_;
};

struct ExpCounter {
    std::uint64_t count = 0;
};

/// Arithmetic bound to one parameter set and one node's exponentiation
/// counter. Cheap to construct; holds references only.
class GroupOps {
public:
    GroupOps(const GroupParams& params, ExpCounter& counter) : params_(&params), counter_(&counter) {}

    const GroupParams& params() const noexcept { return *params_; }
    std::uint64_t exp_count() const noexcept { return counter_->count; }

    /// base^s mod p; the only operation that touches the counter.
    GroupElement exp(const GroupElement& base, const Scalar& s);
    GroupElement mul(const GroupElement& a, const GroupElement& b) const;

    Scalar scalar_add(const Scalar& a, const Scalar& b) const;
    Scalar scalar_mul(const Scalar& a, const Scalar& b) const;
    /// Throws Error(ZeroScalar) for s == 0.
    Scalar scalar_inverse(const Scalar& s) const;

private:
    const GroupParams* params_;
    ExpCounter* counter_;
};

/// Uniform over [1, q-1].
Scalar random_scalar(Rng& rng, const GroupParams& params);

GroupElement exp(const GroupElement& base, const Scalar& s, const GroupParams& params, ExpCounter& counter);
GroupElement mul(const GroupElement& a, const GroupElement& b, const GroupParams& params);
Scalar scalar_inverse(const Scalar& s, const GroupParams& params);

/// Fixed-width big-endian encoding, element_width() bytes.
Bytes encode_element(const GroupElement& e, const GroupParams& params);
/// Throws Error(BadLength) on a width mismatch and Error(NotInSubgroup) when
/// the value is not a subgroup member.
GroupElement decode_element(ByteView bytes, const GroupParams& params);
/// Fixed-width big-endian encoding of a scalar at `width` bytes.
Bytes encode_scalar(const Scalar& s, std::size_t width);

std::string to_hex(const mpz_class& value);

}  // namespace agdh::group
