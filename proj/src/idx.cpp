// IDX image/label container IO (big-endian u32 header words, raw byte data).
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "qcsurf/data.hpp"

namespace qcsurf::data {

namespace {

uint32_t read_u32be(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void write_u32be(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void commit(const std::string& tmp, const std::string& path) {
    std::filesystem::rename(tmp, path);
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    if (read_u32be(in) != 2051) throw std::runtime_error("idx: bad image magic in " + path);
    IdxImages out;
    out.count = static_cast<int>(read_u32be(in));
    out.rows = static_cast<int>(read_u32be(in));
    out.cols = static_cast<int>(read_u32be(in));
    if (out.count < 0 || out.rows <= 0 || out.cols <= 0)
        throw std::runtime_error("idx: bad image dimensions in " + path);
    size_t total = static_cast<size_t>(out.count) * out.rows * out.cols;
    out.pixels.resize(total);
    in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(total));
    if (!in) throw std::runtime_error("idx: truncated image data in " + path);
    return out;
}

std::vector<unsigned char> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    if (read_u32be(in) != 2049) throw std::runtime_error("idx: bad label magic in " + path);
    uint32_t count = read_u32be(in);
    std::vector<unsigned char> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
    if (!in) throw std::runtime_error("idx: truncated label data in " + path);
    return labels;
}

void save_idx_images(const std::string& path, const IdxImages& images) {
    if (images.pixels.size() != static_cast<size_t>(images.count) * images.rows * images.cols)
        throw std::runtime_error("idx: pixel buffer does not match dimensions");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("idx: cannot write " + tmp);
        write_u32be(out, 2051);
        write_u32be(out, static_cast<uint32_t>(images.count));
        write_u32be(out, static_cast<uint32_t>(images.rows));
        write_u32be(out, static_cast<uint32_t>(images.cols));
        out.write(reinterpret_cast<const char*>(images.pixels.data()),
                  static_cast<std::streamsize>(images.pixels.size()));
        if (!out) throw std::runtime_error("idx: write failed for " + tmp);
    }
    commit(tmp, path);
}

void save_idx_labels(const std::string& path, const std::vector<unsigned char>& labels) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("idx: cannot write " + tmp);
        write_u32be(out, 2049);
        write_u32be(out, static_cast<uint32_t>(labels.size()));
        out.write(reinterpret_cast<const char*>(labels.data()),
                  static_cast<std::streamsize>(labels.size()));
        if (!out) throw std::runtime_error("idx: write failed for " + tmp);
    }
    commit(tmp, path);
}

}  // namespace qcsurf::data
