#include "qcsurf/param.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace qcsurf {

namespace {

double signed_uv_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& c) {
    Eigen::Vector2d e1 = b - a, e2 = c - a;
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

}  // namespace

void UVMap::validate() const {
    if (!mesh) throw std::runtime_error("uv map: no mesh attached");
    if (static_cast<int>(uv.size()) != mesh->vertex_count())
        throw std::runtime_error("uv map: coordinate count mismatch");
    for (const auto& p : uv) {
        if (!p.allFinite() || p.x() < -1e-12 || p.x() > 1 + 1e-12 || p.y() < -1e-12 ||
            p.y() > 1 + 1e-12)
            throw std::runtime_error("uv map: coordinate outside the unit square");
    }
    for (int v : mesh->boundary) {
        const auto& p = uv[v];
        double d = std::min({p.x(), 1 - p.x(), p.y(), 1 - p.y()});
        if (d > 1e-9)
            throw std::runtime_error("uv map: boundary vertex off the square perimeter");
    }
    int flipped = 0;
    for (const auto& f : mesh->faces)
        if (signed_uv_area(uv[f[0]], uv[f[1]], uv[f[2]]) <= 0) ++flipped;
    if (flipped > 0)
        throw std::runtime_error("uv map: " + std::to_string(flipped) + " flipped uv triangles");
}

UVMap conformal_parameterize(const TriangleMesh& mesh) {
    const int V = mesh.vertex_count();
    if (mesh.boundary.empty())
        throw std::runtime_error("parameterize: mesh has no boundary loop (run validation)");
    const auto& loop = mesh.boundary;
    const int B = static_cast<int>(loop.size());
    if (B < 4) throw std::runtime_error("parameterize: boundary loop shorter than 4 vertices");

    // Cumulative arc length along the loop; cum[B] = total length.
    std::vector<double> cum(B + 1, 0.0);
    for (int i = 0; i < B; ++i) {
        const auto& a = mesh.vertices[loop[i]];
        const auto& b = mesh.vertices[loop[(i + 1) % B]];
        cum[i + 1] = cum[i] + (b - a).norm();
    }
    const double total = cum[B];
    if (total <= 0) throw std::runtime_error("parameterize: degenerate boundary");

    // A face whose three vertices are consecutive along the loop (an "ear",
    // e.g. a grid corner cut off by one diagonal) collapses to a segment in uv
    // unless its middle vertex is pinned to a square corner: the two straight
    // square sides meeting anywhere else leave all three points collinear.
    std::vector<int> pos(V, -1);
    for (int i = 0; i < B; ++i) pos[loop[i]] = i;
    std::vector<int> ears;
    for (const auto& f : mesh.faces) {
        int p[3] = {pos[f[0]], pos[f[1]], pos[f[2]]};
        if (p[0] < 0 || p[1] < 0 || p[2] < 0) continue;
        std::sort(p, p + 3);
        int mid = -1;
        if (p[2] - p[0] == 2) mid = p[1];
        else if (p[0] == 0 && p[1] == 1 && p[2] == B - 1) mid = 0;
        else if (p[0] == 0 && p[1] == B - 2 && p[2] == B - 1) mid = B - 1;
        if (mid >= 0) ears.push_back(mid);
    }
    std::sort(ears.begin(), ears.end());
    ears.erase(std::unique(ears.begin(), ears.end()), ears.end());

    // Corner 0 is loop[0] (the smallest boundary vertex index, fixed by
    // validation); ears claim the slot nearest their arc-length fraction, and
    // the remaining corners sit at the quarter-length points.
    std::array<int, 4> corner_pos = {0, -1, -1, -1};
    for (int e : ears) {
        if (e == 0) continue;
        int want = std::clamp(static_cast<int>(std::lround(4.0 * cum[e] / total)), 1, 3);
        int slot = -1;
        for (int probe = 0; probe < 3 && slot < 0; ++probe)
            for (int k : {want - probe, want + probe})
                if (k >= 1 && k <= 3 && corner_pos[k] < 0) { slot = k; break; }
        if (slot < 0)
            throw std::runtime_error("parameterize: more boundary ears than square corners");
        corner_pos[slot] = e;
    }
    for (int k = 1; k < 4; ++k) {
        if (corner_pos[k] >= 0) continue;
        double target = total * k / 4;
        int best = -1;
        double best_d = std::numeric_limits<double>::max();
        for (int i = 1; i < B; ++i) {
            bool taken = false;
            for (int k2 = 0; k2 < 4; ++k2) taken |= (corner_pos[k2] == i);
            if (taken) continue;
            double d = std::abs(cum[i] - target);
            if (d < best_d) { best_d = d; best = i; }
        }
        if (best < 0) throw std::runtime_error("parameterize: boundary too short for corners");
        corner_pos[k] = best;
    }
    if (!(corner_pos[0] < corner_pos[1] && corner_pos[1] < corner_pos[2] &&
          corner_pos[2] < corner_pos[3]))
        throw std::runtime_error("parameterize: corner ordering collapsed (boundary too coarse)");

    // Boundary positions: side s runs from corner s to corner s+1 with the
    // square traversed counterclockwise, proportional to arc length.
    UVMap out;
    out.mesh = &mesh;
    out.uv.assign(V, Eigen::Vector2d::Zero());
    for (int k = 0; k < 4; ++k) out.corner_indices[k] = loop[corner_pos[k]];

    auto side_point = [](int side, double t) -> Eigen::Vector2d {
        switch (side) {
            case 0: return {t, 0.0};
            case 1: return {1.0, t};
            case 2: return {1.0 - t, 1.0};
            default: return {0.0, 1.0 - t};
        }
    };
    for (int s = 0; s < 4; ++s) {
        int i0 = corner_pos[s];
        int i1 = s == 3 ? B : corner_pos[s + 1];
        double len = (s == 3 ? total : cum[i1]) - cum[i0];
        if (len <= 0) throw std::runtime_error("parameterize: empty boundary side");
        for (int i = i0; i < i1; ++i) {
            double t = (cum[i] - cum[i0]) / len;
            out.uv[loop[i]] = side_point(s, t);
        }
    }

    // Interior: cotangent-weight harmonic system, negative weights clamped.
    std::vector<char> on_boundary(V, 0);
    for (int v : loop) on_boundary[v] = 1;
    std::vector<int> interior_id(V, -1);
    std::vector<int> interior;
    for (int v = 0; v < V; ++v)
        if (!on_boundary[v]) {
            interior_id[v] = static_cast<int>(interior.size());
            interior.push_back(v);
        }

    if (!interior.empty()) {
        const int M = static_cast<int>(interior.size());
        // Accumulate per-edge weights, then clamp the summed weight.
        std::map<std::pair<int, int>, double> wsum;
        for (const auto& f : mesh.faces) {
            for (int k = 0; k < 3; ++k) {
                int a = f[(k + 1) % 3], b = f[(k + 2) % 3];
                const Eigen::Vector3d& p = mesh.vertices[f[k]];
                Eigen::Vector3d e1 = mesh.vertices[a] - p;
                Eigen::Vector3d e2 = mesh.vertices[b] - p;
                double cross = e1.cross(e2).norm();
                double cot = cross > 0 ? e1.dot(e2) / cross : 0.0;
                wsum[std::minmax(a, b)] += 0.5 * cot;
            }
        }
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(M, 2);
        std::vector<double> diag(M, 0.0);
        for (const auto& [edge, w_raw] : wsum) {
            double w = std::max(0.0, w_raw);
            auto [a, b] = edge;
            for (int pass = 0; pass < 2; ++pass) {
                int i = pass == 0 ? a : b;
                int j = pass == 0 ? b : a;
                if (on_boundary[i]) continue;
                int row = interior_id[i];
                diag[row] += w;
                if (on_boundary[j])
                    rhs.row(row) += w * out.uv[j].transpose();
                else
                    trip.emplace_back(row, interior_id[j], -w);
            }
        }
        for (int r = 0; r < M; ++r) {
            if (diag[r] <= 0)
                throw std::runtime_error("parameterize: singular system (isolated interior vertex)");
            trip.emplace_back(r, r, diag[r]);
        }
        Eigen::SparseMatrix<double> A(M, M);
        A.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
        solver.compute(A);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("parameterize: singular linear system");
        Eigen::MatrixX2d sol = solver.solve(rhs);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("parameterize: linear solve failed");
        for (int r = 0; r < M; ++r) {
            out.uv[interior[r]].x() = std::clamp(sol(r, 0), 0.0, 1.0);
            out.uv[interior[r]].y() = std::clamp(sol(r, 1), 0.0, 1.0);
        }
    }

    int flipped = 0;
    for (const auto& f : mesh.faces)
        if (signed_uv_area(out.uv[f[0]], out.uv[f[1]], out.uv[f[2]]) <= 0) ++flipped;
    if (flipped > 0)
        throw std::runtime_error("parameterize: " + std::to_string(flipped) +
                                 " flipped uv triangles after clamped-weight solve");
    return out;
}

RasterTable build_raster_table(const TriangleMesh& mesh, const UVMap& uv, int N) {
    if (N < 8) throw std::runtime_error("rasterize: resolution must be >= 8");
    uv.validate();
    RasterTable table;
    table.resolution = N;
    table.face.assign(static_cast<size_t>(N) * N, -1);
    table.bary.assign(static_cast<size_t>(N) * N, Eigen::Vector3d::Zero());
    const double scale = N - 1.0;
    const double eps = 1e-9;
    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Eigen::Vector2d& p0 = uv.uv[f[0]];
        const Eigen::Vector2d& p1 = uv.uv[f[1]];
        const Eigen::Vector2d& p2 = uv.uv[f[2]];
        double det = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
        if (det <= 0) continue;  // validated above; guards divide
        double lo_x = std::min({p0.x(), p1.x(), p2.x()}), hi_x = std::max({p0.x(), p1.x(), p2.x()});
        double lo_y = std::min({p0.y(), p1.y(), p2.y()}), hi_y = std::max({p0.y(), p1.y(), p2.y()});
        int ix0 = std::max(0, static_cast<int>(std::ceil(lo_x * scale - 1e-7)));
        int ix1 = std::min(N - 1, static_cast<int>(std::floor(hi_x * scale + 1e-7)));
        int iy0 = std::max(0, static_cast<int>(std::ceil(lo_y * scale - 1e-7)));
        int iy1 = std::min(N - 1, static_cast<int>(std::floor(hi_y * scale + 1e-7)));
        for (int iy = iy0; iy <= iy1; ++iy)
            for (int ix = ix0; ix <= ix1; ++ix) {
                size_t node = static_cast<size_t>(iy) * N + ix;
                if (table.face[node] >= 0) continue;
                Eigen::Vector2d q(node_coord(ix, N), node_coord(iy, N));
                double b1 = ((q - p0).x() * (p2 - p0).y() - (q - p0).y() * (p2 - p0).x()) / det;
                double b2 = ((p1 - p0).x() * (q - p0).y() - (p1 - p0).y() * (q - p0).x()) / det;
                double b0 = 1.0 - b1 - b2;
                if (b0 < -eps || b1 < -eps || b2 < -eps) continue;
                // Clamp edge-grazing negatives and renormalize so node values
                // interpolate exactly.
                Eigen::Vector3d b(std::max(0.0, b0), std::max(0.0, b1), std::max(0.0, b2));
                table.face[node] = fi;
                table.bary[node] = b / b.sum();
            }
    }
    return table;
}

FeatureGrid rasterize_with_table(const RasterTable& table, const TriangleMesh& mesh,
                                 const SurfaceFunction& h) {
    const int N = table.resolution;
    FeatureGrid grid(N, h.channel_count);
    for (size_t node = 0; node < table.face.size(); ++node)
        grid.mask[node] = table.face[node] >= 0 ? 1 : 0;
    for (int c = 0; c < h.channel_count; ++c) {
        double* plane = grid.plane(c);
        for (size_t node = 0; node < table.face.size(); ++node) {
            int fi = table.face[node];
            if (fi < 0) continue;
            const auto& f = mesh.faces[fi];
            const auto& b = table.bary[node];
            plane[node] = b[0] * h.at(c, f[0]) + b[1] * h.at(c, f[1]) + b[2] * h.at(c, f[2]);
        }
    }
    return grid;
}

FeatureGrid rasterize_pullback(const TriangleMesh& mesh, const UVMap& uv,
                               const SurfaceFunction& h, int N) {
    h.validate();
    if (h.mesh != &mesh) throw std::runtime_error("rasterize: function bound to another mesh");
    return rasterize_with_table(build_raster_table(mesh, uv, N), mesh, h);
}

FeatureGrid rasterize_pullback(const TriangleMesh& mesh, const UVMap& uv,
                               const std::vector<std::string>& channels, int N) {
    if (channels.empty()) throw std::runtime_error("rasterize: no channels requested");
    SurfaceFunction h(mesh, static_cast<int>(channels.size()));
    for (size_t c = 0; c < channels.size(); ++c) {
        const auto& vals = mesh.channel(channels[c]);  // throws if missing
        for (int v = 0; v < mesh.vertex_count(); ++v) h.at(static_cast<int>(c), v) = vals[v];
    }
    return rasterize_pullback(mesh, uv, h, N);
}

SurfaceFunction pushforward(const FeatureGrid& grid, const UVMap& uv,
                            const TriangleMesh& mesh) {
    uv.validate();
    if (uv.mesh != &mesh) throw std::runtime_error("pushforward: uv bound to another mesh");
    SurfaceFunction out(mesh, grid.channels);
    for (int c = 0; c < grid.channels; ++c)
        for (int v = 0; v < mesh.vertex_count(); ++v)
            out.at(c, v) = grid.bilinear(c, uv.uv[v].x(), uv.uv[v].y());
    return out;
}

}  // namespace qcsurf
