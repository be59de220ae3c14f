#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "elect/tensor.hpp"

namespace elect {

static_assert(std::endian::native == std::endian::little, "ELCT I/O assumes a little-endian host");

// ELCT layout:
//   0  'E' 'L' 'C' 'T'
//   4  version u8 = 1
//   5  dtype   u8 = 0 (f32)
//   6  ndim    u8
//   7  reserved u8 = 0
//   8  ndim x u32 LE dims
//   .. row-major f32 LE payload
inline constexpr std::array<char, 4> kElctMagic{'E', 'L', 'C', 'T'};
inline constexpr std::uint8_t kElctVersion = 1;
inline constexpr std::uint8_t kElctDtypeF32 = 0;

inline std::string encode_elct(const Tensor& t) {
    if (t.ndim() > 255) throw InvalidArgument("ELCT supports at most 255 dimensions");
    std::string out;
    out.reserve(8 + 4 * t.ndim() + 4 * t.size());
    out.append(kElctMagic.data(), kElctMagic.size());
    out.push_back(static_cast<char>(kElctVersion));
    out.push_back(static_cast<char>(kElctDtypeF32));
    out.push_back(static_cast<char>(t.ndim()));
    out.push_back('\0');
    for (auto d : t.shape()) {
        if (d > UINT32_MAX) throw InvalidArgument("ELCT dimension exceeds u32");
        const auto d32 = static_cast<std::uint32_t>(d);
        out.append(reinterpret_cast<const char*>(&d32), 4);
    }
    out.append(reinterpret_cast<const char*>(t.data().data()), 4 * t.size());
    return out;
}

inline Tensor decode_elct(std::string_view bytes) {
    if (bytes.size() < 8) throw FormatError("ELCT: file shorter than header");
    if (std::memcmp(bytes.data(), kElctMagic.data(), 4) != 0) throw FormatError("ELCT: bad magic");
    const auto version = static_cast<std::uint8_t>(bytes[4]);
    const auto dtype = static_cast<std::uint8_t>(bytes[5]);
    const auto ndim = static_cast<std::uint8_t>(bytes[6]);
    if (version != kElctVersion) throw FormatError("ELCT: unsupported version " + std::to_string(version));
    if (dtype != kElctDtypeF32) throw FormatError("ELCT: unsupported dtype " + std::to_string(dtype));
    if (ndim == 0) throw FormatError("ELCT: ndim is zero");
    const std::size_t header = 8 + 4 * std::size_t{ndim};
    if (bytes.size() < header) throw FormatError("ELCT: truncated dimension table");

    Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        std::uint32_t d;
        std::memcpy(&d, bytes.data() + 8 + 4 * i, 4);
        if (d == 0) throw FormatError("ELCT: zero dimension");
        shape[i] = d;
    }
    const std::size_t n = shape_numel(shape);
    if (bytes.size() != header + 4 * n) {
        throw FormatError("ELCT: payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                          std::to_string(4 * n));
    }
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data() + header, 4 * n);
    try {
        return Tensor(std::move(shape), std::move(data));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("ELCT: ") + e.what());
    }
}

inline void write_elct(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string bytes = encode_elct(t);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Tensor read_elct(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_elct(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

namespace base64 {

inline constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::string_view in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const std::uint32_t v = (std::uint8_t(in[i]) << 16) | (std::uint8_t(in[i + 1]) << 8) | std::uint8_t(in[i + 2]);
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(kAlphabet[(v >> 6) & 63]);
        out.push_back(kAlphabet[v & 63]);
    }
    if (i < in.size()) {
        std::uint32_t v = std::uint8_t(in[i]) << 16;
        if (i + 1 < in.size()) v |= std::uint8_t(in[i + 1]) << 8;
        out.push_back(kAlphabet[(v >> 18) & 63]);
        out.push_back(kAlphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < in.size() ? kAlphabet[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

inline std::string decode(std::string_view in) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (in.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
    std::string out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = in[i + k];
            if (c == '=' && i + 4 == in.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else {
                if (pad) throw FormatError("base64: data after padding");
                v[k] = value(c);
                if (v[k] < 0) throw FormatError("base64: invalid character");
            }
        }
        const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<char>((w >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<char>((w >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<char>(w & 0xFF));
    }
    return out;
}

}  // namespace base64

/// Raw little-endian f32 payload, base64-encoded.
inline std::string tensor_payload_b64(const Tensor& t) {
    return base64::encode(
        std::string_view(reinterpret_cast<const char*>(t.data().data()), 4 * t.size()));
}

inline Tensor tensor_from_payload_b64(const Shape& shape, std::string_view b64) {
    const std::string raw = base64::decode(b64);
    if (shape.empty()) throw FormatError("tensor payload: empty shape");
    const std::size_t n = shape_numel(shape);
    if (raw.size() != 4 * n) {
        throw FormatError("tensor payload: " + std::to_string(raw.size()) + " bytes for shape " + shape_str(shape));
    }
    std::vector<float> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    try {
        return Tensor(shape, std::move(data));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("tensor payload: ") + e.what());
    }
}

}  // namespace elect
