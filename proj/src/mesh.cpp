#include "qcsurf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace qcsurf {

const std::vector<double>& TriangleMesh::channel(const std::string& name) const {
    auto it = channels.find(name);
    if (it == channels.end())
        throw std::runtime_error("mesh: no channel named '" + name + "'");
    return it->second;
}

void TriangleMesh::set_channel(const std::string& name, std::vector<double> values) {
    if (static_cast<int>(values.size()) != vertex_count())
        throw std::runtime_error("mesh: channel '" + name + "' size mismatch");
    channels[name] = std::move(values);
}

SurfaceFunction::SurfaceFunction(const TriangleMesh& m, int channels)
    : mesh(&m), channel_count(channels),
      values(static_cast<size_t>(channels) * m.vertex_count(), 0.0) {}

double& SurfaceFunction::at(int channel, int vertex) {
    return values[static_cast<size_t>(channel) * mesh->vertex_count() + vertex];
}

double SurfaceFunction::at(int channel, int vertex) const {
    return values[static_cast<size_t>(channel) * mesh->vertex_count() + vertex];
}

void SurfaceFunction::validate() const {
    if (!mesh) throw std::runtime_error("surface function: no mesh attached");
    if (channel_count < 1) throw std::runtime_error("surface function: channel_count < 1");
    if (values.size() != static_cast<size_t>(channel_count) * mesh->vertex_count())
        throw std::runtime_error("surface function: value array size mismatch");
    for (double v : values)
        if (!std::isfinite(v))
            throw std::runtime_error("surface function: non-finite value");
}

double face_area(const TriangleMesh& mesh, int face) {
    const auto& f = mesh.faces[face];
    Eigen::Vector3d e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
    Eigen::Vector3d e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
    return 0.5 * e1.cross(e2).norm();
}

namespace {

// Projected bbox area, the degeneracy scale reference. Sum of the three
// axis-plane projections so flat meshes in any coordinate plane still get a
// nonzero scale.
double bbox_area(const TriangleMesh& mesh) {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    Eigen::Vector3d d = hi - lo;
    return d.x() * d.y() + d.y() * d.z() + d.z() * d.x();
}

}  // namespace

void validate_mesh(TriangleMesh& mesh) {
    const int V = mesh.vertex_count();
    const int F = mesh.face_count();
    if (V < 3 || F < 1) throw std::runtime_error("mesh: too few vertices or faces");

    for (const auto& v : mesh.vertices)
        if (!v.allFinite()) throw std::runtime_error("mesh: non-finite vertex position");

    for (int fi = 0; fi < F; ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k)
            if (f[k] < 0 || f[k] >= V)
                throw std::runtime_error("mesh: face " + std::to_string(fi) +
                                         " has out-of-range vertex index");
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw std::runtime_error("mesh: face " + std::to_string(fi) +
                                     " repeats a vertex");
    }

    const double area_scale = bbox_area(mesh);
    for (int fi = 0; fi < F; ++fi) {
        if (face_area(mesh, fi) < 1e-12 * area_scale)
            throw std::runtime_error("mesh: degenerate face " + std::to_string(fi));
    }

    // Directed edge map. Each directed edge may appear once; each undirected
    // edge in one or two directions. Two same-direction copies mean either a
    // duplicated face or inconsistent orientation.
    std::map<std::pair<int, int>, int> directed;  // edge -> face
    for (int fi = 0; fi < F; ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            auto ins = directed.emplace(std::make_pair(a, b), fi);
            if (!ins.second)
                throw std::runtime_error(
                    "mesh: directed edge repeated between faces " +
                    std::to_string(ins.first->second) + " and " + std::to_string(fi) +
                    " (duplicate face or inconsistent orientation)");
        }
    }
    // Manifold check: an undirected edge may not be shared by >2 faces. With
    // each direction appearing at most once, that is already guaranteed, so
    // what remains is matching twins to find the boundary.
    std::map<int, int> boundary_next;  // boundary edge a->b, following orientation
    int boundary_edge_count = 0;
    std::set<std::pair<int, int>> undirected;
    for (const auto& [e, fi] : directed) {
        (void)fi;
        undirected.insert(std::minmax(e.first, e.second));
        if (!directed.count(std::make_pair(e.second, e.first))) {
            ++boundary_edge_count;
            // Boundary loop traversal uses the directed boundary edges as-is:
            // they wind consistently because face orientation is consistent.
            auto ins = boundary_next.emplace(e.first, e.second);
            if (!ins.second)
                throw std::runtime_error("mesh: non-manifold boundary vertex " +
                                         std::to_string(e.first));
        }
    }
    const int E = static_cast<int>(undirected.size());
    if (V - E + F != 1)
        throw std::runtime_error("mesh: non-disk topology (V-E+F = " +
                                 std::to_string(V - E + F) + ", expected 1)");
    if (boundary_edge_count == 0)
        throw std::runtime_error("mesh: closed surface, expected one boundary loop");

    // Chain the single loop, starting at the smallest boundary vertex index
    // so the result is canonical.
    int start = boundary_next.begin()->first;
    for (const auto& [a, b] : boundary_next) {
        (void)b;
        start = std::min(start, a);
    }
    std::vector<int> loop;
    loop.reserve(boundary_edge_count);
    int cur = start;
    do {
        loop.push_back(cur);
        auto it = boundary_next.find(cur);
        if (it == boundary_next.end())
            throw std::runtime_error("mesh: broken boundary chain at vertex " +
                                     std::to_string(cur));
        cur = it->second;
    } while (cur != start && static_cast<int>(loop.size()) <= boundary_edge_count);
    if (static_cast<int>(loop.size()) != boundary_edge_count)
        throw std::runtime_error("mesh: more than one boundary loop");

    // Isolated vertices break the Euler count above only if they exist; catch
    // them explicitly for a clearer message.
    std::vector<char> used(V, 0);
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) used[f[k]] = 1;
    for (int v = 0; v < V; ++v)
        if (!used[v])
            throw std::runtime_error("mesh: isolated vertex " + std::to_string(v));

    mesh.boundary = std::move(loop);
}

std::vector<char> boundary_flags(const TriangleMesh& mesh) {
    std::vector<char> flags(mesh.vertex_count(), 0);
    for (int v : mesh.boundary) flags[v] = 1;
    return flags;
}

TriangleMesh make_grid_mesh(int nx, int ny, const std::vector<double>& z) {
    if (nx < 2 || ny < 2) throw std::runtime_error("grid mesh: need at least 2x2 vertices");
    if (!z.empty() && static_cast<int>(z.size()) != nx * ny)
        throw std::runtime_error("grid mesh: height field size mismatch");
    TriangleMesh mesh;
    mesh.vertices.reserve(static_cast<size_t>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            double x = double(ix) / (nx - 1);
            double y = double(iy) / (ny - 1);
            double h = z.empty() ? 0.0 : z[static_cast<size_t>(iy) * nx + ix];
            mesh.vertices.emplace_back(x, y, h);
        }
    // Consistent diagonal (lower-left to upper-right), ccw seen from +z.
    auto vid = [nx](int ix, int iy) { return iy * nx + ix; };
    for (int iy = 0; iy + 1 < ny; ++iy)
        for (int ix = 0; ix + 1 < nx; ++ix) {
            int a = vid(ix, iy), b = vid(ix + 1, iy);
            int c = vid(ix + 1, iy + 1), d = vid(ix, iy + 1);
            mesh.faces.push_back({a, b, c});
            mesh.faces.push_back({a, c, d});
        }
    validate_mesh(mesh);
    return mesh;
}

}  // namespace qcsurf
