#pragma once

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace pinnlab {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Minimal CSV writer: fixed header, one row per call, doubles round-trip.
class CsvWriter {
public:
    CsvWriter(const std::string& path, std::initializer_list<std::string_view> header) : out_(path) {
        if (!out_) {
            throw std::runtime_error("cannot open '" + path + "' for writing");
        }
        bool first = true;
        for (auto h : header) {
            out_ << (first ? "" : ",") << h;
            first = false;
        }
        out_ << '\n';
    }

    template <typename... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
        out_ << '\n';
    }

    void flush() { out_.flush(); }

private:
    template <typename V>
    static std::string cell(const V& v) {
        if constexpr (std::is_floating_point_v<V>) {
            return format_double(double(v));
        } else if constexpr (std::is_integral_v<V>) {
            return std::to_string(v);
        } else {
            return std::string(v);
        }
    }

    std::ofstream out_;
};

}  // namespace pinnlab
