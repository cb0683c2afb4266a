#include "qcsurf/qcgr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace qcsurf {

namespace {

constexpr char kMagic[4] = {'Q', 'C', 'G', 'R'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "QCGR I/O assumes a little-endian host");

void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void FeatureGrid::validate() const {
    if (resolution < 8) throw std::runtime_error("feature grid: resolution must be >= 8");
    if (channels < 1) throw std::runtime_error("feature grid: need at least one channel");
    size_t nn = static_cast<size_t>(resolution) * resolution;
    if (data.size() != nn * channels || mask.size() != nn)
        throw std::runtime_error("feature grid: array size mismatch");
    for (int c = 0; c < channels; ++c)
        for (size_t i = 0; i < nn; ++i)
            if (mask[i] && !std::isfinite(data[c * nn + i]))
                throw std::runtime_error("feature grid: non-finite value on covered node");
}

void save_qcgr(const FeatureGrid& grid, const std::string& path) {
    grid.validate();
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out.write(kMagic, 4);
        write_u32(out, kVersion);
        write_u32(out, static_cast<uint32_t>(grid.channels));
        write_u32(out, static_cast<uint32_t>(grid.resolution));
        std::vector<float> buf(grid.data.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(grid.data[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(grid.mask.data()),
                  static_cast<std::streamsize>(grid.mask.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

FeatureGrid load_qcgr(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a QCGR file");
    uint32_t version = read_u32(in);
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported QCGR version " + std::to_string(version));
    uint32_t c = read_u32(in);
    uint32_t n = read_u32(in);
    if (!in || c < 1 || c > 1u << 16 || n < 8 || n > 1u << 16)
        throw std::runtime_error(path + ": bad QCGR header");
    FeatureGrid grid(static_cast<int>(n), static_cast<int>(c));
    std::vector<float> buf(grid.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(grid.mask.data()),
            static_cast<std::streamsize>(grid.mask.size()));
    if (!in) throw std::runtime_error(path + ": truncated QCGR payload");
    for (size_t i = 0; i < buf.size(); ++i) grid.data[i] = buf[i];
    for (auto& m : grid.mask) m = m ? 1 : 0;
    grid.validate();
    return grid;
}

void save_pgm(const FeatureGrid& grid, int channel, const std::string& path) {
    if (channel < 0 || channel >= grid.channels)
        throw std::runtime_error("pgm export: channel out of range");
    const int n = grid.resolution;
    const double* p = grid.plane(channel);
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (size_t i = 0; i < static_cast<size_t>(n) * n; ++i) {
        lo = std::min(lo, p[i]);
        hi = std::max(hi, p[i]);
    }
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << "P5\n" << n << " " << n << "\n255\n";
        for (int iy = n - 1; iy >= 0; --iy)
            for (int ix = 0; ix < n; ++ix) {
                double v = (grid.at(channel, ix, iy) - lo) * scale;
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
            }
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

}  // namespace qcsurf
