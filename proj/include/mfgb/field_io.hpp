#pragma once

// Field dumps. Binary format: little-endian, magic "MFGB", u32 d, u32 n,
// u32 component count, then float64 values in row-major node order, one
// component block after another. A trajectory is written as a single file
// whose component count is (nt+1) * k, slice after slice, so any trajectory
// dump is also a valid multi-component field file.
//
// CSV export: one row per node, columns x_1..x_d, value_1..value_k.

#include "mfgb/grid.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace mfgb {

struct FieldFileData {
    int d = 0;
    int n = 0;
    int components = 0;
    std::vector<double> values;  // component-major, row-major nodes within
};

namespace detail {
inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_bin_header(std::ostream& os, int d, int n, int components) {
    os.write("MFGB", 4);
    write_u32(os, static_cast<std::uint32_t>(d));
    write_u32(os, static_cast<std::uint32_t>(n));
    write_u32(os, static_cast<std::uint32_t>(components));
}

inline void write_component(std::ostream& os, const ScalarField& f) {
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size()) * 8);
}
}  // namespace detail

inline void write_field_bin(const std::string& path, const MultiField& f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_field_bin: cannot open " + path);
    detail::write_bin_header(os, f.grid().d, f.grid().n, f.components());
    for (int c = 0; c < f.components(); ++c) detail::write_component(os, f.comp(c));
    if (!os) throw std::runtime_error("write_field_bin: write failed for " + path);
}

inline void write_trajectory_bin(const std::string& path, const ScalarTrajectory& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_trajectory_bin: cannot open " + path);
    detail::write_bin_header(os, t.grid().d, t.grid().n,
                             static_cast<int>(t.slice.size()));
    for (const auto& f : t.slice) detail::write_component(os, f);
    if (!os) throw std::runtime_error("write_trajectory_bin: write failed for " + path);
}

inline void write_trajectory_bin(const std::string& path, const MultiTrajectory& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_trajectory_bin: cannot open " + path);
    const int k = t.slice.front().components();
    detail::write_bin_header(os, t.grid().d, t.grid().n,
                             static_cast<int>(t.slice.size()) * k);
    for (const auto& f : t.slice)
        for (int c = 0; c < k; ++c) detail::write_component(os, f.comp(c));
    if (!os) throw std::runtime_error("write_trajectory_bin: write failed for " + path);
}

inline FieldFileData read_field_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_field_bin: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MFGB", 4) != 0)
        throw std::runtime_error("read_field_bin: bad magic in " + path);
    FieldFileData data;
    data.d = static_cast<int>(detail::read_u32(is));
    data.n = static_cast<int>(detail::read_u32(is));
    data.components = static_cast<int>(detail::read_u32(is));
    if (!is || data.d < 1 || data.d > 2 || data.n < 1 || data.components < 1)
        throw std::runtime_error("read_field_bin: bad header in " + path);
    const std::int64_t nodes = data.d == 2 ? static_cast<std::int64_t>(data.n) * data.n
                                           : static_cast<std::int64_t>(data.n);
    data.values.resize(static_cast<std::size_t>(nodes * data.components));
    is.read(reinterpret_cast<char*>(data.values.data()),
            static_cast<std::streamsize>(data.values.size() * 8));
    if (!is) throw std::runtime_error("read_field_bin: truncated file " + path);
    return data;
}

inline void write_field_csv(const std::string& path, const MultiField& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_field_csv: cannot open " + path);
    const GridSpec& g = f.grid();
    for (int a = 0; a < g.d; ++a) os << (a ? ",x_" : "x_") << (a + 1);
    for (int c = 0; c < f.components(); ++c) os << ",value_" << (c + 1);
    os << "\n";
    double x[2] = {0.0, 0.0};
    for (std::int64_t i = 0; i < g.nodes(); ++i) {
        g.node_coords(i, x);
        for (int a = 0; a < g.d; ++a) os << (a ? "," : "") << fmt_double(x[a]);
        for (int c = 0; c < f.components(); ++c) os << "," << fmt_double(f.comp(c)[i]);
        os << "\n";
    }
    if (!os) throw std::runtime_error("write_field_csv: write failed for " + path);
}

}  // namespace mfgb
