#pragma once

// Tensor container: "AMSPT1", four little-endian u32 dims (n, c, h, w), then
// n*c*h*w little-endian IEEE-754 doubles. Small fixtures may use the JSON form
// {"shape": [n, c, h, w], "data": [...]}.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amsp/tensor.hpp"

namespace amsp {

/// Malformed or truncated serialized data.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kTensorMagic = "AMSPT1";

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<char, 4> b{};
    for (std::size_t i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    os.write(b.data(), b.size());
}

inline void put_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> b{};
    for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
    os.write(b.data(), b.size());
}

template <std::size_t N>
std::array<unsigned char, N> get_bytes(std::istream& is, const char* what) {
    std::array<char, N> raw{};
    if (!is.read(raw.data(), N)) throw FormatError(std::string("tensor container truncated while reading ") + what);
    std::array<unsigned char, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = static_cast<unsigned char>(raw[i]);
    return out;
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
    const auto b = get_bytes<4>(is, what);
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is) {
    const auto b = get_bytes<8>(is, "data");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
    for (std::size_t d : t.shape().dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) detail::contract_fail("write_tensor: dimension ", d, " exceeds u32");
    }
    os.write(kTensorMagic.data(), static_cast<std::streamsize>(kTensorMagic.size()));
    for (std::size_t d : t.shape().dims()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_f64(os, v);
}

inline Tensor read_tensor(std::istream& is) {
    const auto magic = detail::get_bytes<6>(is, "magic");
    if (!std::equal(magic.begin(), magic.end(), kTensorMagic.begin())) throw FormatError("bad tensor magic (expected AMSPT1)");
    Shape s;
    s.n = detail::get_u32(is, "shape");
    s.c = detail::get_u32(is, "shape");
    s.h = detail::get_u32(is, "shape");
    s.w = detail::get_u32(is, "shape");
    std::vector<double> data(s.numel());
    for (double& v : data) v = detail::get_f64(is);
    return Tensor(s, std::move(data));
}

inline std::string encode_tensor(const Tensor& t) {
    std::ostringstream os(std::ios::binary);
    write_tensor(os, t);
    return std::move(os).str();
}

inline Tensor decode_tensor(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    Tensor t = read_tensor(is);
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after tensor container");
    return t;
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
    const Shape s = t.shape();
    return nlohmann::json{{"shape", {s.n, s.c, s.h, s.w}}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    try {
        const auto dims = j.at("shape").get<std::vector<std::size_t>>();
        if (dims.size() != 4) throw FormatError("tensor JSON: shape must have 4 entries");
        auto data = j.at("data").get<std::vector<double>>();
        const Shape s{dims[0], dims[1], dims[2], dims[3]};
        if (data.size() != s.numel()) {
            throw FormatError("tensor JSON: data has " + std::to_string(data.size()) + " values, shape needs " +
                              std::to_string(s.numel()));
        }
        return Tensor(s, std::move(data));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("tensor JSON: ") + e.what());
    }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os.flush()) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return std::move(ss).str();
}

/// Loads either form, chosen by content (binary magic or JSON).
inline Tensor load_tensor(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.rfind(kTensorMagic, 0) == 0) return decode_tensor(bytes);
    try {
        return tensor_from_json(nlohmann::json::parse(bytes));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": neither an AMSPT1 container nor tensor JSON (" + e.what() + ")");
    }
}

}  // namespace amsp
