#include "dgx/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace dgx {

std::string sort_name(SortKind k) {
    switch (k) {
        case SortKind::Int: return "int";
        case SortKind::Real: return "real";
        case SortKind::Vec: return "vec";
    }
    return "?";
}

std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    std::string s(buf, res.ptr);
    // Keep integral-valued doubles recognizable as reals when re-parsed.
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string Value::describe() const {
    if (is_int()) return "int";
    if (is_real()) return "real";
    return "vec(" + std::to_string(as_vec().size()) + ")";
}

std::string Value::to_string() const {
    if (is_int()) return std::to_string(std::get<std::int64_t>(v_));
    if (is_real()) return format_real(std::get<double>(v_));
    std::string s = "[";
    const auto& v = as_vec();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_real(v[i]);
    }
    return s + "]";
}

}  // namespace dgx
