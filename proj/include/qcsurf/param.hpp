// param.hpp — flattening of a disk-topology mesh to the unit square, pullback
// rasterization onto a FeatureGrid, and pushforward back to mesh vertices.
#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcsurf/mesh.hpp"
#include "qcsurf/qcgr.hpp"

namespace qcsurf {

struct UVMap {
    const TriangleMesh* mesh = nullptr;
    std::vector<Eigen::Vector2d> uv;        // per-vertex, inside [0,1]²
    std::array<int, 4> corner_indices{};    // boundary vertices pinned to corners

    void validate() const;  // range, boundary-on-perimeter, no flipped triangles
};

// Discrete harmonic map to the unit square: boundary spread along the
// perimeter by cumulative arc-length (corner 0 = smallest boundary vertex
// index; corners 1..3 at the quarter-length points, except that any boundary
// "ear" face claims the nearest corner so it cannot collapse onto one side),
// interior solved from the cotangent-weight Laplacian with negative weights
// clamped to 0. Throws on a singular system or if any uv triangle ends up
// flipped.
UVMap conformal_parameterize(const TriangleMesh& mesh);

// Barycentric rasterization of per-vertex values onto an N×N lattice over
// [0,1]². Nodes outside every uv triangle are masked off and zero-filled.
FeatureGrid rasterize_pullback(const TriangleMesh& mesh, const UVMap& uv,
                               const SurfaceFunction& h, int N);
// Channel-name convenience wrapper over the mesh's named channels.
FeatureGrid rasterize_pullback(const TriangleMesh& mesh, const UVMap& uv,
                               const std::vector<std::string>& channels, int N);

// Per-vertex bilinear sample of the grid at each vertex's uv coordinate.
SurfaceFunction pushforward(const FeatureGrid& grid, const UVMap& uv,
                            const TriangleMesh& mesh);

// Node -> (face, barycentric) lookup table for one UVMap, reusable across
// many rasterizations against the same flattening. face = −1 off-mesh.
struct RasterTable {
    int resolution = 0;
    std::vector<int> face;
    std::vector<Eigen::Vector3d> bary;
};
RasterTable build_raster_table(const TriangleMesh& mesh, const UVMap& uv, int N);
FeatureGrid rasterize_with_table(const RasterTable& table, const TriangleMesh& mesh,
                                 const SurfaceFunction& h);

}  // namespace qcsurf
