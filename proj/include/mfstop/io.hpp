#pragma once

#include <charconv>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace mfstop {

/// Shortest round-trip decimal form, '.' separator, locale independent.
inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, res.ptr);
}

/// Comma-separated output with a mandatory header and LF line endings.
class CsvWriter {
public:
    CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), width_(header.size()) {
        if (header.empty()) throw std::invalid_argument("csv header must not be empty");
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        static_assert(sizeof...(Ts) > 0);
        if (sizeof...(Ts) != width_) throw std::invalid_argument("csv row width mismatch");
        std::size_t i = 0;
        ((os_ << (i++ ? "," : "") << cell(cells)), ...);
        os_ << '\n';
    }

private:
    template <class T>
    static std::string cell(const T& v) {
        if constexpr (std::is_floating_point_v<T>) return format_number(static_cast<double>(v));
        else if constexpr (std::is_integral_v<T>) return std::to_string(v);
        else return std::string(v);
    }

    std::ostream& os_;
    std::size_t width_;
};

}  // namespace mfstop
