// qc.hpp — Beltrami-coefficient machinery on lattice self-maps of [0,1]²:
// complex finite-difference derivatives, μ computation and composition,
// dilation, bijectivity certification, map inversion, smoothness energy.
#pragma once

#include <complex>
#include <vector>

#include "qcsurf/mesh.hpp"
#include "qcsurf/param.hpp"
#include "qcsurf/qcgr.hpp"

namespace qcsurf {

// Self-map of the unit square sampled on the N×N lattice. `u`/`v` hold the
// image of each node, row-major (iy*N + ix). The stored map is the one used
// for backward sampling (the warp's sampling grid g = f⁻¹); when the forward
// map is needed it comes from invert_map.
struct GridMap {
    int resolution = 0;
    std::vector<double> u, v;

    static GridMap identity(int n);

    double& at_u(int ix, int iy) { return u[static_cast<size_t>(iy) * resolution + ix]; }
    double& at_v(int ix, int iy) { return v[static_cast<size_t>(iy) * resolution + ix]; }
    double at_u(int ix, int iy) const { return u[static_cast<size_t>(iy) * resolution + ix]; }
    double at_v(int ix, int iy) const { return v[static_cast<size_t>(iy) * resolution + ix]; }

    // Bilinear sample at (x, y) ∈ [0,1]², interpolating the displacement
    // field u − x so an identity map samples to (x, y) bitwise.
    Eigen::Vector2d sample(double x, double y) const;

    void validate() const;  // finite, boundary-preserving within 1e−6
};

// Complex field on the lattice (or one value per mesh face when
// resolution == 0).
struct BeltramiField {
    int resolution = 0;
    std::vector<std::complex<double>> values;

    double max_abs() const;
};

struct ComplexDerivatives {
    int resolution = 0;
    std::vector<std::complex<double>> fz, fzbar;
};

// Central differences inside, second-order one-sided at the lattice edge:
// f_z = ½((u_x+v_y) + i(v_x−u_y)), f_z̄ = ½((u_x−v_y) + i(v_x+u_y)).
ComplexDerivatives complex_derivatives(const GridMap& map);

// μ = f_z̄ / f_z; nodes with |f_z| < 1e−12 get μ = 0 and are appended to
// `degenerate` when provided.
BeltramiField beltrami_from_map(const GridMap& map, std::vector<int>* degenerate = nullptr);

// Per-face μ of the piecewise-affine map (local isometric 2D frame of the 3D
// triangle) → (uv triangle).
BeltramiField beltrami_per_face(const TriangleMesh& mesh, const UVMap& uv);

// K = (1 + max|μ|) / (1 − max|μ|); throws if max|μ| ≥ 1.
double dilation(const BeltramiField& mu);

// μ of g∘f from μ_f, μ_g∘f (already resampled at f(z) by the caller) and f_z:
// (μ_f + r·μ_g∘f) / (1 + r·conj(μ_f)·μ_g∘f), r = conj(f_z)/f_z.
// Throws when a denominator modulus drops below 1e−12.
BeltramiField compose_beltrami(const BeltramiField& mu_f,
                               const BeltramiField& mu_g_at_f,
                               const std::vector<std::complex<double>>& f_z);

struct BijectivityReport {
    double max_mu = 0;
    bool mu_bounded = false;     // max|μ| < 1
    double min_jacobian = 0;     // min over nodes of u_x v_y − u_y v_x
    bool certified = false;      // mu_bounded && min_jacobian > 0
};
BijectivityReport certify_bijective(const GridMap& map);

// Nodewise inverse of the bilinear interpolant: for each lattice node x,
// Newton iteration finds y with f(y) = x, seeded by a forward scan over
// cells. Guarantees ‖f(f⁻¹(x)) − x‖∞ ≤ tol; throws on non-convergence.
// An identity input returns the identity bitwise.
GridMap invert_map(const GridMap& map, double tol = 1e-6);

// RMS over interior nodes (both components) of the 5-point Laplacian of the
// displacement f(x) − x.
double laplacian_energy(const GridMap& map);

// QCGR bridging: maps travel as C=2 grids (u, v), μ as C=2 grids (re, im).
FeatureGrid grid_from_map(const GridMap& map);
GridMap map_from_grid(const FeatureGrid& grid);
FeatureGrid grid_from_beltrami(const BeltramiField& mu);

}  // namespace qcsurf
