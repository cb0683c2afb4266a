#include "qcsurf/data.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "qcsurf/lattice.hpp"

namespace qcsurf::data {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// splitmix64 finalizer; decorrelates per-sample seeds derived from one base.
uint64_t mix_seed(uint64_t base, uint64_t i) {
    uint64_t z = base + 0x9E3779B97F4A7C15ull * (i + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

TriangleMesh gen_simple_surface(const SurfaceSpec& spec) {
    const int g = spec.grid;
    Rng rng(spec.seed);
    const int p = 1 + static_cast<int>(rng() % 3);
    const int q = 1 + static_cast<int>(rng() % 3);
    const double s = urange(rng, 0.0, kTau);
    const double t = urange(rng, 0.0, kTau);
    const double a = urange(rng, 0.1, 0.2);
    std::vector<double> z(static_cast<size_t>(g) * g);
    for (int iy = 0; iy < g; ++iy)
        for (int ix = 0; ix < g; ++ix) {
            double x = node_coord(ix, g), y = node_coord(iy, g);
            z[static_cast<size_t>(iy) * g + ix] =
                a * std::sin(kTau * p * x + s) * std::cos(kTau * q * y + t);
        }
    return make_grid_mesh(g, g, z);
}

double BiharmonicSpline::eval(double x, double y) const {
    double z = 0;
    for (size_t j = 0; j < coeff.size(); ++j) {
        double dx = x - px[j], dy = y - py[j];
        double r2 = dx * dx + dy * dy;
        if (r2 > 0) z += coeff[j] * r2 * (0.5 * std::log(r2) - 1.0);  // r²(ln r − 1)
    }
    return z;
}

BiharmonicSpline solve_biharmonic(const std::vector<double>& px,
                                  const std::vector<double>& py,
                                  const std::vector<double>& heights) {
    const int m = static_cast<int>(px.size());
    if (py.size() != px.size() || heights.size() != px.size() || m == 0)
        throw std::runtime_error("biharmonic: control arrays must match and be nonempty");
    Eigen::MatrixXd phi(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double dx = px[i] - px[j], dy = py[i] - py[j];
            double r2 = dx * dx + dy * dy;
            phi(i, j) = r2 > 0 ? r2 * (0.5 * std::log(r2) - 1.0) : 0.0;
        }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(phi);
    if (!lu.isInvertible()) throw std::runtime_error("biharmonic: singular system");
    Eigen::VectorXd rhs(m);
    for (int i = 0; i < m; ++i) rhs(i) = heights[i];
    Eigen::VectorXd a = lu.solve(rhs);
    BiharmonicSpline out;
    out.px = px;
    out.py = py;
    out.heights = heights;
    out.coeff.assign(a.data(), a.data() + m);
    return out;
}

BiharmonicSpline draw_complex_spline(Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<double> px(24), py(24), h(24);
        for (int j = 0; j < 24; ++j) {
            px[j] = urange(rng, -0.2, 1.2);
            py[j] = urange(rng, -0.2, 1.2);
        }
        for (int j = 0; j < 24; ++j) h[j] = urange(rng, -0.4, 0.4);
        try {
            return solve_biharmonic(px, py, h);
        } catch (const std::runtime_error&) {
            continue;  // coincident points, vanishing probability
        }
    }
    throw std::runtime_error("biharmonic: no solvable draw in 100 attempts");
}

TriangleMesh gen_complex_surface(const SurfaceSpec& spec) {
    const int g = spec.grid;
    Rng rng(spec.seed);
    BiharmonicSpline spline = draw_complex_spline(rng);
    std::vector<double> z(static_cast<size_t>(g) * g);
    for (int iy = 0; iy < g; ++iy)
        for (int ix = 0; ix < g; ++ix)
            z[static_cast<size_t>(iy) * g + ix] =
                spline.eval(node_coord(ix, g), node_coord(iy, g));
    return make_grid_mesh(g, g, z);
}

SurfaceFunction digit_texture(const TriangleMesh& mesh,
                              const unsigned char* image, int rows, int cols) {
    if (rows < 2 || cols < 2 || rows != cols)
        throw std::runtime_error("digit texture: expected a square image, side >= 2");
    // Flip to y-up so the digit reads upright in the (x,y) square.
    std::vector<double> plane(static_cast<size_t>(rows) * cols);
    for (int iy = 0; iy < rows; ++iy)
        for (int ix = 0; ix < cols; ++ix)
            plane[static_cast<size_t>(iy) * cols + ix] =
                image[static_cast<size_t>(rows - 1 - iy) * cols + ix] / 255.0;
    SurfaceFunction f(mesh, 1);
    for (size_t v = 0; v < mesh.vertices.size(); ++v)
        f.at(0, static_cast<int>(v)) =
            sample_plane(plane.data(), rows, mesh.vertices[v].x(), mesh.vertices[v].y());
    return f;
}

LesionSample gen_lesion_sample(uint64_t sample_seed, int forced_blobs) {
    LesionSample out;
    SurfaceSpec spec;
    spec.kind = SurfaceSpec::Kind::Complex;
    spec.seed = sample_seed;
    out.mesh = gen_complex_surface(spec);

    Rng rng(mix_seed(sample_seed, 0x1e510));
    const int a = 1 + static_cast<int>(rng() % 2);
    const int b = 1 + static_cast<int>(rng() % 2);
    const double s = urange(rng, 0.0, kTau);
    const double t = urange(rng, 0.0, kTau);

    struct Blob {
        double cx, cy, r, contrast;
    };
    std::vector<Blob> blobs;
    const size_t nv = out.mesh.vertices.size();
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 100) throw std::runtime_error("lesion: blob draw failed to fit area bound");
        int k = forced_blobs >= 0 ? forced_blobs : 1 + static_cast<int>(rng() % 3);
        blobs.clear();
        for (int j = 0; j < k; ++j) {
            Blob bl;
            bl.cx = urange(rng, 0.15, 0.85);
            bl.cy = urange(rng, 0.15, 0.85);
            bl.r = urange(rng, 0.05, 0.15);
            bl.contrast = urange(rng, 0.3, 0.6);
            blobs.push_back(bl);
        }
        if (k == 0) break;
        size_t covered = 0;
        for (size_t v = 0; v < nv; ++v) {
            double x = out.mesh.vertices[v].x(), y = out.mesh.vertices[v].y();
            for (const Blob& bl : blobs) {
                double dx = x - bl.cx, dy = y - bl.cy;
                if (dx * dx + dy * dy <= bl.r * bl.r) {
                    ++covered;
                    break;
                }
            }
        }
        double fraction = static_cast<double>(covered) / static_cast<double>(nv);
        if (fraction <= 0.2) break;  // lower bound holds by the radius minimum
    }

    out.texture = SurfaceFunction(out.mesh, 1);
    out.mask = SurfaceFunction(out.mesh, 1);
    for (size_t v = 0; v < nv; ++v) {
        double x = out.mesh.vertices[v].x(), y = out.mesh.vertices[v].y();
        double val = 0.7 + 0.1 * std::sin(kTau * a * x + s) * std::cos(kTau * b * y + t);
        double inside = 0.0;
        for (const Blob& bl : blobs) {
            double dx = x - bl.cx, dy = y - bl.cy;
            double d2 = dx * dx + dy * dy;
            double sigma = 0.5 * bl.r;
            val -= bl.contrast * std::exp(-d2 / (2 * sigma * sigma));
            if (d2 <= bl.r * bl.r) inside = 1.0;
        }
        out.texture.at(0, static_cast<int>(v)) = std::min(1.0, std::max(0.0, val));
        out.mask.at(0, static_cast<int>(v)) = inside;
    }
    return out;
}

std::vector<LesionSample> gen_lesion_dataset(int n_samples, uint64_t seed) {
    if (n_samples < 1) throw std::runtime_error("lesion dataset: need n >= 1");
    std::vector<LesionSample> out;
    out.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i)
        out.push_back(gen_lesion_sample(mix_seed(seed, i)));
    return out;
}

}  // namespace qcsurf::data
