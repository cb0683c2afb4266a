#include "qcsurf/mesh.hpp"

#include <cmath>
#include <numbers>

namespace qcsurf {

namespace {

// Interior angle at corner `k` of face `f`.
double corner_angle(const TriangleMesh& mesh, const std::array<int, 3>& f, int k) {
    const Eigen::Vector3d& p = mesh.vertices[f[k]];
    Eigen::Vector3d u = mesh.vertices[f[(k + 1) % 3]] - p;
    Eigen::Vector3d v = mesh.vertices[f[(k + 2) % 3]] - p;
    double c = u.dot(v);
    double s = u.cross(v).norm();
    return std::atan2(s, c);
}

double cot(double angle) { return std::cos(angle) / std::sin(angle); }

}  // namespace

std::vector<double> vertex_angle_sums(const TriangleMesh& mesh) {
    std::vector<double> sums(mesh.vertex_count(), 0.0);
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) sums[f[k]] += corner_angle(mesh, f, k);
    return sums;
}

std::vector<double> mixed_vertex_areas(const TriangleMesh& mesh) {
    std::vector<double> areas(mesh.vertex_count(), 0.0);
    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = mesh.faces[fi];
        double ang[3];
        bool obtuse = false;
        for (int k = 0; k < 3; ++k) {
            ang[k] = corner_angle(mesh, f, k);
            if (ang[k] > std::numbers::pi / 2) obtuse = true;
        }
        if (obtuse) {
            // Fallback: equal thirds of the face area.
            double third = face_area(mesh, fi) / 3.0;
            for (int k = 0; k < 3; ++k) areas[f[k]] += third;
        } else {
            // Voronoi piece at corner k: (|pk - pk1|^2 cot(ang[k2]) +
            // |pk - pk2|^2 cot(ang[k1])) / 8.
            for (int k = 0; k < 3; ++k) {
                int k1 = (k + 1) % 3, k2 = (k + 2) % 3;
                double d1 = (mesh.vertices[f[k]] - mesh.vertices[f[k1]]).squaredNorm();
                double d2 = (mesh.vertices[f[k]] - mesh.vertices[f[k2]]).squaredNorm();
                areas[f[k]] += (d1 * cot(ang[k2]) + d2 * cot(ang[k1])) / 8.0;
            }
        }
    }
    return areas;
}

SurfaceFunction gaussian_curvature(const TriangleMesh& mesh) {
    auto sums = vertex_angle_sums(mesh);
    auto areas = mixed_vertex_areas(mesh);
    auto on_boundary = boundary_flags(mesh);
    SurfaceFunction K(mesh, 1);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        double deficit = (on_boundary[v] ? std::numbers::pi : 2 * std::numbers::pi) - sums[v];
        K.at(0, v) = areas[v] > 0 ? deficit / areas[v] : 0.0;
    }
    return K;
}

SurfaceFunction mean_curvature(const TriangleMesh& mesh) {
    const int V = mesh.vertex_count();
    // Cotangent Laplacian applied to positions: (Lx)_i =
    // 1/2 sum_j (cot a_ij + cot b_ij) (x_i - x_j); its norm over the mixed
    // area is 2H, so H = |Lx| / (2 A).
    std::vector<Eigen::Vector3d> lap(V, Eigen::Vector3d::Zero());
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            // Angle at corner k faces edge (k1, k2); it contributes
            // cot(ang_k)/2 to that edge's weight.
            int k1 = (k + 1) % 3, k2 = (k + 2) % 3;
            double w = 0.5 * cot(corner_angle(mesh, f, k));
            Eigen::Vector3d d = mesh.vertices[f[k1]] - mesh.vertices[f[k2]];
            lap[f[k1]] += w * d;
            lap[f[k2]] -= w * d;
        }
    }
    auto areas = mixed_vertex_areas(mesh);
    auto on_boundary = boundary_flags(mesh);
    SurfaceFunction H(mesh, 1);
    for (int v = 0; v < V; ++v) {
        // Boundary rows of the Laplacian miss their one-ring closure; report 0
        // there rather than a misleading magnitude.
        if (on_boundary[v] || areas[v] <= 0) {
            H.at(0, v) = 0.0;
            continue;
        }
        H.at(0, v) = 0.5 * lap[v].norm() / areas[v];
    }
    return H;
}

}  // namespace qcsurf
