#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segparse/error.hpp"
#include "segparse/nn.hpp"

namespace segparse {

// Parameter checkpoints: an 8-byte magic, a little-endian uint64 header
// length, a JSON header (architecture descriptor, step count, seed), a
// little-endian uint64 parameter count, then raw little-endian doubles.
inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'C', 'K', '0', '0', '0', '1'};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

inline void write_double_le(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

inline double read_double_le(std::istream& in) {
    const std::uint64_t bits = read_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace detail

inline nlohmann::json arch_to_json(const NetArch& arch) {
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& c : arch.conv) {
        conv.push_back({{"channels", c.out_channels}, {"kernel", c.kernel}, {"stride", c.stride}});
    }
    return {{"conv", conv}, {"dense", arch.dense}};
}

inline NetArch arch_from_json(const nlohmann::json& j) {
    NetArch arch;
    arch.conv.clear();
    arch.dense.clear();
    for (const auto& c : j.at("conv")) {
        arch.conv.push_back({c.at("channels").get<int>(), c.at("kernel").get<int>(),
                             c.at("stride").get<int>()});
    }
    for (const auto& d : j.at("dense")) arch.dense.push_back(d.get<int>());
    return arch;
}

inline nlohmann::json shape_to_json(const Shape& s) {
    return {{"c", s.c}, {"h", s.h}, {"w", s.w}};
}

inline Shape shape_from_json(const nlohmann::json& j) {
    return Shape{j.at("c").get<int>(), j.at("h").get<int>(), j.at("w").get<int>()};
}

inline void save_checkpoint(const std::string& path, std::span<const double> params,
                            const nlohmann::json& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kCheckpointMagic, 8);
    const std::string header_text = header.dump();
    detail::write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    detail::write_u64(out, params.size());
    for (double p : params) detail::write_double_le(out, p);
    if (!out) throw IoError("failed writing " + path);
}

inline std::vector<double> load_checkpoint(const std::string& path, nlohmann::json* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw IoError(path + " is not a parameter checkpoint");
    }
    const std::uint64_t header_len = detail::read_u64(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    const std::uint64_t count = detail::read_u64(in);
    std::vector<double> params(count);
    for (auto& p : params) p = detail::read_double_le(in);
    if (!in) throw IoError(path + " is truncated");
    if (header) {
        try {
            *header = nlohmann::json::parse(header_text);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + " has a malformed header: " + e.what());
        }
    }
    return params;
}

}  // namespace segparse
