#include "agdh/group_arith.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include "agdh/error.hpp"

namespace agdh::group {

namespace {

std::size_t byte_length(const mpz_class& v) { return (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8; }

mpz_class parse_hex(std::string_view text, const char* field) {
    mpz_class v;
    std::string s(text);
    if (s.empty() || v.set_str(s, 16) != 0) {
        throw Error(Errc::ConfigError, std::string("bad hex value for '") + field + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

Scalar Scalar::reduced(const mpz_class& value, const GroupParams& params) {
    mpz_class r;
    mpz_mod(r.get_mpz_t(), value.get_mpz_t(), params.order().get_mpz_t());
    return Scalar(r);
}

Scalar Scalar::from_u64(std::uint64_t value, const GroupParams& params) {
    mpz_class v;
    mpz_import(v.get_mpz_t(), 1, 1, sizeof(value), 0, 0, &value);
    return reduced(v, params);
}

std::uint64_t Scalar::to_u64() const {
    if (!value_.fits_ulong_p()) throw std::range_error("scalar does not fit in 64 bits");
    return value_.get_ui();
}

std::uint64_t GroupElement::to_u64() const {
    if (!value_.fits_ulong_p()) throw std::range_error("element does not fit in 64 bits");
    return value_.get_ui();
}

GroupParams::GroupParams(mpz_class modulus, mpz_class order, mpz_class generator, std::string name)
    : p_(std::move(modulus)), q_(std::move(order)), name_(std::move(name)) {
    if (p_ < 5 || mpz_probab_prime_p(p_.get_mpz_t(), 40) == 0) {
        throw Error(Errc::ConfigError, "modulus p is not prime");
    }
    if (q_ < 3 || mpz_probab_prime_p(q_.get_mpz_t(), 40) == 0) {
        throw Error(Errc::ConfigError, "order q is not an odd prime");
    }
    mpz_class pm1 = p_ - 1;
    if (!mpz_divisible_p(pm1.get_mpz_t(), q_.get_mpz_t())) {
        throw Error(Errc::ConfigError, "q does not divide p-1");
    }
    if (generator <= 1 || generator >= p_) throw Error(Errc::ConfigError, "generator out of range");
    mpz_class check;
    mpz_powm(check.get_mpz_t(), generator.get_mpz_t(), q_.get_mpz_t(), p_.get_mpz_t());
    // q prime and g != 1, so g^q == 1 pins the order to exactly q.
    if (check != 1) throw Error(Errc::ConfigError, "generator does not have order q");
    g_ = GroupElement::unchecked(std::move(generator));
    element_width_ = byte_length(p_);
    scalar_width_ = byte_length(q_);
}

GroupParams GroupParams::toy() { return GroupParams(23, 11, 2, "toy-23-11"); }

GroupParams GroupParams::parse(std::string_view text) {
    std::optional<mpz_class> p, q, g;
    std::string name;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key=value");
        }
        auto key = trim(view.substr(0, eq));
        auto value = trim(view.substr(eq + 1));
        if (key == "p") {
            p = parse_hex(value, "p");
        } else if (key == "q") {
            q = parse_hex(value, "q");
        } else if (key == "g") {
            g = parse_hex(value, "g");
        } else if (key == "name") {
            name = std::string(value);
        } else {
            throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
        }
    }
    if (!p || !q || !g) throw Error(Errc::ConfigError, "parameter file must define p, q and g");
    if (name.empty()) throw Error(Errc::ConfigError, "parameter file must define name");
    return GroupParams(*p, *q, *g, name);
}

GroupParams GroupParams::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigError, "cannot open parameter file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool GroupParams::contains(const mpz_class& value) const {
    if (value < 1 || value >= p_) return false;
    mpz_class check;
    mpz_powm(check.get_mpz_t(), value.get_mpz_t(), q_.get_mpz_t(), p_.get_mpz_t());
    return check == 1;
}

GroupElement GroupParams::element(const mpz_class& value) const {
    if (!contains(value)) throw Error(Errc::NotInSubgroup, "value " + to_hex(value) + " is not in the subgroup");
    return GroupElement::unchecked(value);
}

bool operator==(const GroupParams& a, const GroupParams& b) {
    return a.p_ == b.p_ && a.q_ == b.q_ && a.g_ == b.g_;
}

GroupElement GroupOps::exp(const GroupElement& base, const Scalar& s) {
    ++counter_->count;
    mpz_class r;
    mpz_powm(r.get_mpz_t(), base.value().get_mpz_t(), s.value().get_mpz_t(), params_->modulus().get_mpz_t());
    return GroupElement::unchecked(std::move(r));
}

GroupElement GroupOps::mul(const GroupElement& a, const GroupElement& b) const {
    mpz_class r = a.value() * b.value();
    mpz_mod(r.get_mpz_t(), r.get_mpz_t(), params_->modulus().get_mpz_t());
    return GroupElement::unchecked(std::move(r));
}

Scalar GroupOps::scalar_add(const Scalar& a, const Scalar& b) const {
    return Scalar::reduced(a.value() + b.value(), *params_);
}

Scalar GroupOps::scalar_mul(const Scalar& a, const Scalar& b) const {
    return Scalar::reduced(a.value() * b.value(), *params_);
}

Scalar GroupOps::scalar_inverse(const Scalar& s) const { return group::scalar_inverse(s, *params_); }

Scalar random_scalar(Rng& rng, const GroupParams& params) {
    const mpz_class& q = params.order();
    const std::size_t bits = mpz_sizeinbase(q.get_mpz_t(), 2);
    Bytes buf((bits + 7) / 8);
    const unsigned excess = static_cast<unsigned>(buf.size() * 8 - bits);
    const std::uint8_t top_mask = static_cast<std::uint8_t>(0xffu >> excess);
    mpz_class v;
    for (;;) {
        rng.fill(buf);
        buf[0] &= top_mask;
        mpz_import(v.get_mpz_t(), buf.size(), 1, 1, 0, 0, buf.data());
        if (v >= 1 && v < q) return Scalar::reduced(v, params);
    }
}

GroupElement exp(const GroupElement& base, const Scalar& s, const GroupParams& params, ExpCounter& counter) {
    return GroupOps(params, counter).exp(base, s);
}

GroupElement mul(const GroupElement& a, const GroupElement& b, const GroupParams& params) {
    ExpCounter unused;
    return GroupOps(params, unused).mul(a, b);
}

Scalar scalar_inverse(const Scalar& s, const GroupParams& params) {
    if (s.is_zero()) throw Error(Errc::ZeroScalar, "scalar 0 has no inverse");
    mpz_class r;
    mpz_invert(r.get_mpz_t(), s.value().get_mpz_t(), params.order().get_mpz_t());
    return Scalar::reduced(r, params);
}

namespace {

Bytes export_fixed(const mpz_class& v, std::size_t width) {
    Bytes out(width, 0);
    std::size_t count = 0;
    if (byte_length(v) > width) throw Error(Errc::BadLength, "value wider than " + std::to_string(width) + " bytes");
    if (v != 0) {
        Bytes tmp(byte_length(v));
        mpz_export(tmp.data(), &count, 1, 1, 0, 0, v.get_mpz_t());
        std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(count),
                  out.end() - static_cast<std::ptrdiff_t>(count));
    }
    return out;
}

}  // namespace

Bytes encode_element(const GroupElement& e, const GroupParams& params) {
    return export_fixed(e.value(), params.element_width());
}

GroupElement decode_element(ByteView bytes, const GroupParams& params) {
    if (bytes.size() != params.element_width()) {
        throw Error(Errc::BadLength, "element needs " + std::to_string(params.element_width()) + " bytes, got " +
                                         std::to_string(bytes.size()));
    }
    mpz_class v;
    mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 0, 0, bytes.data());
    return params.element(v);
}

Bytes encode_scalar(const Scalar& s, std::size_t width) { return export_fixed(s.value(), width); }

std::string to_hex(const mpz_class& value) { return value.get_str(16); }

}  // namespace agdh::group
