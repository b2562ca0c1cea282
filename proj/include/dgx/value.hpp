#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dgx/errors.hpp"

namespace dgx {

using VecD = std::vector<double>;

enum class SortKind { Int, Real, Vec };

// Declared sort of a parameter slot. Int slots may carry a finite domain,
// which the exact (master-equation) module requires.
struct Sort {
    SortKind kind = SortKind::Real;
    std::optional<std::int64_t> lo;  // Int only
    std::optional<std::int64_t> hi;

    bool has_range() const { return lo.has_value() && hi.has_value(); }
    bool operator==(const Sort& o) const { return kind == o.kind && lo == o.lo && hi == o.hi; }
};

std::string sort_name(SortKind k);

// A runtime value: 64-bit integer, double, or a real vector.
class Value {
public:
    Value() : v_(std::int64_t{0}) {}
    Value(std::int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<std::int64_t>(i)) {}
    Value(double d) : v_(d) {}
    Value(VecD v) : v_(std::move(v)) {}

    bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
    bool is_real() const { return std::holds_alternative<double>(v_); }
    bool is_vec() const { return std::holds_alternative<VecD>(v_); }
    bool is_scalar() const { return !is_vec(); }

    std::int64_t as_int() const {
        if (!is_int()) throw DomainError({}, "expected integer value, got " + describe());
        return std::get<std::int64_t>(v_);
    }
    // Ints promote to real.
    double as_real() const {
        if (is_int()) return static_cast<double>(std::get<std::int64_t>(v_));
        if (is_real()) return std::get<double>(v_);
        throw DomainError({}, "expected scalar value, got vector");
    }
    const VecD& as_vec() const {
        if (!is_vec()) throw DomainError({}, "expected vector value, got " + describe());
        return std::get<VecD>(v_);
    }

    bool operator==(const Value& o) const { return v_ == o.v_; }
    bool operator!=(const Value& o) const { return !(*this == o); }

    std::string describe() const;
    std::string to_string() const;

private:
    std::variant<std::int64_t, double, VecD> v_;
};

// Formats a double with the shortest representation that round-trips.
std::string format_real(double x);

}  // namespace dgx
