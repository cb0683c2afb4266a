// mesh.hpp — triangle-mesh container for disk-topology surfaces, with
// per-vertex scalar channels, validation, I/O and discrete curvature.
//
// Conventions:
// - Faces are counterclockwise vertex-index triples, 0-based in memory.
// - A valid mesh is an oriented manifold disk: V - E + F = 1 and exactly one
//   boundary loop. The loop is stored ordered, following the orientation of
//   the incident faces, starting at the smallest boundary vertex index.
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace qcsurf {

struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    // Named per-vertex scalar channels ("texture", "gauss_curv", ...).
    std::map<std::string, std::vector<double>> channels;
    // Single boundary loop, ordered along face orientation.
    std::vector<int> boundary;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }

    bool has_channel(const std::string& name) const { return channels.count(name) > 0; }
    const std::vector<double>& channel(const std::string& name) const;
    void set_channel(const std::string& name, std::vector<double> values);
};

// Per-vertex function on a mesh, C channels stored channel-major
// (values[c * V + v]).
struct SurfaceFunction {
    const TriangleMesh* mesh = nullptr;
    int channel_count = 1;
    std::vector<double> values;

    SurfaceFunction() = default;
    SurfaceFunction(const TriangleMesh& m, int channels);

    double& at(int channel, int vertex);
    double at(int channel, int vertex) const;
    void validate() const;  // sizes match, all values finite
};

// Topology + geometry validation. Throws std::runtime_error describing the
// first violation found (non-manifold edge, inconsistent orientation,
// non-disk topology, degenerate face). Fills mesh.boundary.
void validate_mesh(TriangleMesh& mesh);

// Readers accept ASCII OFF and Wavefront OBJ (positions + triangular faces;
// all other records ignored). The returned mesh is validated.
TriangleMesh load_mesh(const std::string& path);

// OBJ writer; per-vertex channels go to a CSV sidecar
// (vertex_index,channel_name,value). When `uv` is non-null the OBJ carries
// vt records and faces reference them.
void save_obj(const TriangleMesh& mesh, const std::string& path,
              const std::vector<Eigen::Vector2d>* uv = nullptr);
void save_channels_csv(const TriangleMesh& mesh, const std::string& path);
void load_channels_csv(TriangleMesh& mesh, const std::string& path);

// Discrete curvature channels (angle deficit / cotangent Laplacian over the
// mixed Voronoi area; obtuse triangles fall back to a third of the face
// area). Mean curvature is returned as a magnitude.
SurfaceFunction gaussian_curvature(const TriangleMesh& mesh);
SurfaceFunction mean_curvature(const TriangleMesh& mesh);

// Mixed Voronoi vertex areas, exposed for tests.
std::vector<double> mixed_vertex_areas(const TriangleMesh& mesh);
// Angle sum at each vertex, exposed for tests.
std::vector<double> vertex_angle_sums(const TriangleMesh& mesh);
// True for vertices on the boundary loop.
std::vector<char> boundary_flags(const TriangleMesh& mesh);

double face_area(const TriangleMesh& mesh, int face);

// Regular grid mesh over [0,1]^2 with nx-by-ny vertices and a height field
// z(ix, iy); the workhorse for generated surfaces and tests.
TriangleMesh make_grid_mesh(int nx, int ny,
                            const std::vector<double>& z = {});

}  // namespace qcsurf
