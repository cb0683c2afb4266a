// lattice.hpp — shared sampling helpers for N×N lattices over [0,1]².
//
// Node (ix, iy) sits at (ix/(N−1), iy/(N−1)); planes are stored row-major
// (iy*N + ix). Every bilinear sample in the project goes through these
// helpers so that exact node hits return the stored value bitwise: the
// lattice-unit coordinate is snapped to the nearest integer when within
// 1e−9 of it, and bilinear weights that are exactly 0 or 1 then select a
// single corner with no rounding.
#pragma once

#include <algorithm>
#include <cmath>

namespace qcsurf {

inline double node_coord(int i, int n) { return double(i) / (n - 1); }

// Clamp + snap a lattice-unit coordinate into [0, n−1].
inline double snap_lattice_coord(double s, int n) {
    s = std::clamp(s, 0.0, double(n - 1));
    double r = std::round(s);
    if (std::abs(s - r) < 1e-9) s = r;
    return s;
}

struct BilinearCell {
    int i0, j0;      // lower-left corner node
    double fx, fy;   // fractional position in the cell, in [0,1]
};

// sx, sy already clamped to [0, n−1].
inline BilinearCell bilinear_cell(double sx, double sy, int n) {
    int i0 = std::min(static_cast<int>(sx), n - 2);
    int j0 = std::min(static_cast<int>(sy), n - 2);
    return {i0, j0, sx - i0, sy - j0};
}

inline double bilerp(double v00, double v10, double v01, double v11,
                     double fx, double fy) {
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
           (1 - fx) * fy * v01 + fx * fy * v11;
}

// Sample a row-major n×n plane at (x, y) ∈ [0,1]² (clamped).
inline double sample_plane(const double* plane, int n, double x, double y) {
    double sx = snap_lattice_coord(x * (n - 1), n);
    double sy = snap_lattice_coord(y * (n - 1), n);
    BilinearCell c = bilinear_cell(sx, sy, n);
    const double* row0 = plane + static_cast<size_t>(c.j0) * n + c.i0;
    const double* row1 = row0 + n;
    return bilerp(row0[0], row0[1], row1[0], row1[1], c.fx, c.fy);
}

}  // namespace qcsurf
