#pragma once

// Framed-float binary container shared by every checkpoint in the library:
//
//   magic[4] | version u8 | [tag u8] | count u64 LE | count x f64 LE
//
// The optional tag byte is present only for frame kinds that declare one
// (optimizer state carries its algorithm there).

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adaterm/numerics.hpp"

namespace adaterm::framing {

using Magic = std::array<char, 4>;

constexpr Magic make_magic(std::string_view s) {
    return {s[0], s[1], s[2], s[3]};
}

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t pos) {
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    return x;
}

}  // namespace detail

struct Frame {
    Magic magic{};
    std::uint8_t version = 0;
    std::optional<std::uint8_t> tag;
    std::vector<double> payload;
};

inline std::vector<std::uint8_t> encode(const Frame& frame) {
    std::vector<std::uint8_t> out;
    out.reserve(14 + 8 * frame.payload.size());
    for (char c : frame.magic) out.push_back(static_cast<std::uint8_t>(c));
    out.push_back(frame.version);
    if (frame.tag) out.push_back(*frame.tag);
    detail::put_u64(out, frame.payload.size());
    for (double x : frame.payload) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
    return out;
}

/// Decodes a frame, checking magic, version and exact length.
inline Frame decode(std::span<const std::uint8_t> bytes, Magic expected_magic,
                    std::uint8_t expected_version, bool has_tag) {
    const std::size_t header = 4 + 1 + (has_tag ? 1 : 0) + 8;
    if (bytes.size() < header) throw ParameterError("checkpoint: truncated header");
    Frame frame;
    for (std::size_t i = 0; i < 4; ++i) frame.magic[i] = static_cast<char>(bytes[i]);
    if (frame.magic != expected_magic) throw ParameterError("checkpoint: bad magic");
    frame.version = bytes[4];
    if (frame.version != expected_version) throw ParameterError("checkpoint: unsupported version");
    std::size_t pos = 5;
    if (has_tag) frame.tag = bytes[pos++];
    const std::uint64_t count = detail::get_u64(bytes, pos);
    pos += 8;
    if (count > (bytes.size() - pos) / 8 || bytes.size() - pos != count * 8) {
        throw ParameterError("checkpoint: payload length mismatch");
    }
    frame.payload.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        frame.payload[i] = std::bit_cast<double>(detail::get_u64(bytes, pos + 8 * i));
    }
    return frame;
}

}  // namespace adaterm::framing
