// qcgr.hpp — FeatureGrid (C×N×N lattice data + coverage mask) and its binary
// container. Format "QCGR": magic bytes `QCGR`, u32 version=1, u32 C, u32 N,
// C×N×N little-endian float32 row-major, N×N mask bytes.
#pragma once

#include <string>
#include <vector>

#include "qcsurf/lattice.hpp"

namespace qcsurf {

struct FeatureGrid {
    int resolution = 0;  // N, lattice nodes at (i/(N−1), j/(N−1))
    int channels = 0;
    std::vector<double> data;         // channel-major: c*N*N + iy*N + ix
    std::vector<unsigned char> mask;  // iy*N + ix; 1 = covered

    FeatureGrid() = default;
    FeatureGrid(int n, int c)
        : resolution(n), channels(c),
          data(static_cast<size_t>(c) * n * n, 0.0),
          mask(static_cast<size_t>(n) * n, 1) {}

    double& at(int c, int ix, int iy) {
        return data[(static_cast<size_t>(c) * resolution + iy) * resolution + ix];
    }
    double at(int c, int ix, int iy) const {
        return data[(static_cast<size_t>(c) * resolution + iy) * resolution + ix];
    }
    const double* plane(int c) const {
        return data.data() + static_cast<size_t>(c) * resolution * resolution;
    }
    double* plane(int c) {
        return data.data() + static_cast<size_t>(c) * resolution * resolution;
    }
    bool covered(int ix, int iy) const {
        return mask[static_cast<size_t>(iy) * resolution + ix] != 0;
    }

    // Bilinear sample of channel c at (x, y) ∈ [0,1]², clamped; exact node
    // hits return the stored value bitwise.
    double bilinear(int c, double x, double y) const {
        return sample_plane(plane(c), resolution, x, y);
    }

    void validate() const;  // sizes, N ≥ 8, finite masked values
};

// Round-trip is exact at float32 precision; doubles are narrowed on write.
void save_qcgr(const FeatureGrid& grid, const std::string& path);
FeatureGrid load_qcgr(const std::string& path);

// Binary PGM (P5) export of one channel, min-max normalized to 0..255,
// top row = iy = N−1 so the image reads y-up.
void save_pgm(const FeatureGrid& grid, int channel, const std::string& path);

}  // namespace qcsurf
