#include "qcsurf/conv.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qcsurf {

Kernel::Kernel(int k, std::vector<double> w) : size(k), weights(std::move(w)) { validate(); }

void Kernel::validate() const {
    if (size < 1 || size % 2 == 0) throw std::runtime_error("kernel: size must be odd");
    if (weights.size() != static_cast<size_t>(size) * size)
        throw std::runtime_error("kernel: weight count mismatch");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::runtime_error("kernel: non-finite weight");
}

double Kernel::eval(double dx, double dy, double h_cell) const {
    const int c0 = size / 2;
    double sx = dx / h_cell + c0;
    double sy = dy / h_cell + c0;
    if (sx < 0 || sx > size - 1 || sy < 0 || sy > size - 1) return 0.0;
    if (size == 1) return weights[0];
    BilinearCell c = bilinear_cell(sx, sy, size);
    const double* row0 = weights.data() + static_cast<size_t>(c.j0) * size + c.i0;
    const double* row1 = row0 + size;
    return bilerp(row0[0], row0[1], row1[0], row1[1], c.fx, c.fy);
}

FeatureGrid conv2d_plain(const FeatureGrid& grid, const Kernel& kernel) {
    grid.validate();
    kernel.validate();
    const int n = grid.resolution;
    const int k = kernel.size;
    if (k > n) throw std::runtime_error("conv2d: kernel larger than grid");
    const int c0 = k / 2;
    const double cell_area = 1.0 / ((n - 1.0) * (n - 1.0));
    FeatureGrid out(n, grid.channels);
    out.mask = grid.mask;
    for (int c = 0; c < grid.channels; ++c) {
        const double* in = grid.plane(c);
        double* dst = out.plane(c);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                double acc = 0;
                for (int b = 0; b < k; ++b) {
                    int jy = iy - (b - c0);
                    if (jy < 0 || jy >= n) continue;
                    const double* in_row = in + static_cast<size_t>(jy) * n;
                    const unsigned char* m_row = grid.mask.data() + static_cast<size_t>(jy) * n;
                    const double* w_row = kernel.weights.data() + static_cast<size_t>(b) * k;
                    for (int a = 0; a < k; ++a) {
                        int jx = ix - (a - c0);
                        if (jx < 0 || jx >= n) continue;
                        if (!m_row[jx]) continue;
                        acc += in_row[jx] * w_row[a];
                    }
                }
                dst[static_cast<size_t>(iy) * n + ix] = acc * cell_area;
            }
        }
    }
    return out;
}

namespace {

void check_context(const ConvContext& context) {
    if (!context.uv || !context.map) throw std::runtime_error("conv context: missing uv or map");
    if (context.resolution < 8) throw std::runtime_error("conv context: resolution must be >= 8");
    if (context.map->resolution != context.resolution)
        throw std::runtime_error("conv context: map resolution mismatch");
    BijectivityReport rep = certify_bijective(*context.map);
    if (!rep.certified)
        throw std::runtime_error(
            "conv context: map not certified bijective (max|mu| = " + std::to_string(rep.max_mu) +
            ", min Jacobian = " + std::to_string(rep.min_jacobian) + ")");
}

double signed_area2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                     const Eigen::Vector2d& c) {
    return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

}  // namespace

SurfaceFunction manifold_conv_oracle(const TriangleMesh& mesh, const SurfaceFunction& h,
                                     const Kernel& kernel, const ConvContext& context) {
    check_context(context);
    h.validate();
    if (h.mesh != &mesh) throw std::runtime_error("oracle: function bound to another mesh");
    const UVMap& uv = *context.uv;
    const int N = context.resolution;
    const double h_cell = 1.0 / (N - 1);
    const int V = mesh.vertex_count();
    const int F = mesh.face_count();
    const int C = h.channel_count;

    // Forward map f recovered from the stored backward map.
    GridMap fwd = invert_map(*context.map, 1e-6);

    // Per-face data under ψ = f ∘ uv: centroid image, area of the mapped
    // triangle, centroid channel values.
    std::vector<Eigen::Vector2d> psi_centroid(F);
    std::vector<double> area(F);
    std::vector<double> centroid_vals(static_cast<size_t>(F) * C);
    for (int fi = 0; fi < F; ++fi) {
        const auto& f = mesh.faces[fi];
        Eigen::Vector2d q0 = fwd.sample(uv.uv[f[0]].x(), uv.uv[f[0]].y());
        Eigen::Vector2d q1 = fwd.sample(uv.uv[f[1]].x(), uv.uv[f[1]].y());
        Eigen::Vector2d q2 = fwd.sample(uv.uv[f[2]].x(), uv.uv[f[2]].y());
        Eigen::Vector2d qc = (uv.uv[f[0]] + uv.uv[f[1]] + uv.uv[f[2]]) / 3.0;
        psi_centroid[fi] = fwd.sample(qc.x(), qc.y());
        area[fi] = signed_area2d(q0, q1, q2);
        for (int c = 0; c < C; ++c)
            centroid_vals[static_cast<size_t>(fi) * C + c] =
                (h.at(c, f[0]) + h.at(c, f[1]) + h.at(c, f[2])) / 3.0;
    }

    std::vector<Eigen::Vector2d> psi_vertex(V);
    for (int v = 0; v < V; ++v) psi_vertex[v] = fwd.sample(uv.uv[v].x(), uv.uv[v].y());

    const double radius = kernel.support_radius(h_cell);
    SurfaceFunction out(mesh, C);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int v = 0; v < V; ++v) {
        for (int fi = 0; fi < F; ++fi) {
            double dx = psi_vertex[v].x() - psi_centroid[fi].x();
            double dy = psi_vertex[v].y() - psi_centroid[fi].y();
            // Kernel is exactly zero outside its support box.
            if (std::abs(dx) > radius || std::abs(dy) > radius) continue;
            double kv = kernel.eval(dx, dy, h_cell);
            if (kv == 0) continue;
            double w = kv * area[fi];
            for (int c = 0; c < C; ++c)
                out.at(c, v) += centroid_vals[static_cast<size_t>(fi) * C + c] * w;
        }
    }
    return out;
}

SurfaceFunction parametrized_conv(const TriangleMesh& mesh, const SurfaceFunction& h,
                                  const Kernel& kernel, const UVMap& uv, int N) {
    FeatureGrid pulled = rasterize_pullback(mesh, uv, h, N);
    FeatureGrid conv = conv2d_plain(pulled, kernel);
    return pushforward(conv, uv, mesh);
}

SurfaceFunction qc_conv(const TriangleMesh& mesh, const SurfaceFunction& h,
                        const Kernel& kernel, const ConvContext& context) {
    check_context(context);
    const UVMap& uv = *context.uv;
    const GridMap& g = *context.map;
    const int N = context.resolution;

    FeatureGrid pulled = rasterize_pullback(mesh, uv, h, N);

    // Resample the pullback through the backward map: h#(x) = h̃(g(x)).
    FeatureGrid warped(N, pulled.channels);
    for (int iy = 0; iy < N; ++iy)
        for (int ix = 0; ix < N; ++ix) {
            Eigen::Vector2d y = g.sample(node_coord(ix, N), node_coord(iy, N));
            size_t node = static_cast<size_t>(iy) * N + ix;
            for (int c = 0; c < pulled.channels; ++c)
                warped.plane(c)[node] = pulled.bilinear(c, y.x(), y.y());
            int mx = std::clamp(static_cast<int>(std::lround(y.x() * (N - 1))), 0, N - 1);
            int my = std::clamp(static_cast<int>(std::lround(y.y() * (N - 1))), 0, N - 1);
            warped.mask[node] = pulled.mask[static_cast<size_t>(my) * N + mx];
        }

    FeatureGrid conv = conv2d_plain(warped, kernel);

    // Sample back at the forward image of each vertex's uv position.
    GridMap fwd = invert_map(g, 1e-6);
    SurfaceFunction out(mesh, conv.channels);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        Eigen::Vector2d w = fwd.sample(uv.uv[v].x(), uv.uv[v].y());
        for (int c = 0; c < conv.channels; ++c) out.at(c, v) = conv.bilinear(c, w.x(), w.y());
    }
    return out;
}

}  // namespace qcsurf
