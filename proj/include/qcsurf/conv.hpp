// conv.hpp — convolution operators on surfaces: plain lattice convolution,
// a brute-force per-vertex quadrature oracle, parametrized convolution
// (rasterize → convolve → push forward), and its warped variant where the
// parameter domain is recomposed with a quasi-conformal self-map.
#pragma once

#include <vector>

#include "qcsurf/mesh.hpp"
#include "qcsurf/param.hpp"
#include "qcsurf/qc.hpp"

namespace qcsurf {

// Lattice kernel: weight (a, b) multiplies displacement
// ((a−⌊k/2⌋)·h_cell, (b−⌊k/2⌋)·h_cell); off-lattice displacements are
// bilinearly interpolated, zero outside the k×k support.
struct Kernel {
    int size = 0;                 // odd
    std::vector<double> weights;  // row-major, b*size + a

    Kernel() = default;
    Kernel(int k, std::vector<double> w);

    double at(int a, int b) const { return weights[static_cast<size_t>(b) * size + a]; }
    // Continuous evaluation at displacement (dx, dy) in [0,1]² units, given
    // the lattice spacing h_cell of the target grid.
    double eval(double dx, double dy, double h_cell) const;
    double support_radius(double h_cell) const { return (size / 2) * h_cell; }

    void validate() const;
};

struct ConvContext {
    const UVMap* uv = nullptr;   // flattening of the mesh
    const GridMap* map = nullptr;  // backward-convention self-map g = f⁻¹
    int resolution = 0;
};

// True convolution (kernel flipped): out(x) = Σ_y grid(y)·k(x−y)·h_cell²,
// zero padding, same resolution; masked-off nodes contribute zero. The input
// mask is carried through.
FeatureGrid conv2d_plain(const FeatureGrid& grid, const Kernel& kernel);

// Brute-force quadrature reference: for each vertex p, the one-point
// centroid-rule sum over faces of h(centroid)·k(ψ(p)−ψ(centroid))·area(ψ(face)),
// where ψ = forward map ∘ uv. The context's map must certify bijective.
SurfaceFunction manifold_conv_oracle(const TriangleMesh& mesh, const SurfaceFunction& h,
                                     const Kernel& kernel, const ConvContext& context);

// rasterize_pullback → conv2d_plain → pushforward.
SurfaceFunction parametrized_conv(const TriangleMesh& mesh, const SurfaceFunction& h,
                                  const Kernel& kernel, const UVMap& uv, int N);

// Warped variant: pullback, resample through the backward map, convolve,
// then sample back at the forward image of each vertex's uv position.
// With map = identity this reduces to parametrized_conv bit-for-bit.
SurfaceFunction qc_conv(const TriangleMesh& mesh, const SurfaceFunction& h,
                        const Kernel& kernel, const ConvContext& context);

}  // namespace qcsurf
