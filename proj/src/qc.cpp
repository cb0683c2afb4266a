#include "qcsurf/qc.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace qcsurf {

namespace {

// d/dx and d/dy of a row-major plane: central differences inside,
// second-order one-sided at the lattice edge.
void fd_partials(const std::vector<double>& p, int n, std::vector<double>& px,
                 std::vector<double>& py) {
    const double inv2h = 0.5 * (n - 1);
    px.resize(p.size());
    py.resize(p.size());
    for (int iy = 0; iy < n; ++iy) {
        const size_t row = static_cast<size_t>(iy) * n;
        for (int ix = 0; ix < n; ++ix) {
            if (ix == 0)
                px[row + ix] = (-3 * p[row] + 4 * p[row + 1] - p[row + 2]) * inv2h;
            else if (ix == n - 1)
                px[row + ix] = (3 * p[row + ix] - 4 * p[row + ix - 1] + p[row + ix - 2]) * inv2h;
            else
                px[row + ix] = (p[row + ix + 1] - p[row + ix - 1]) * inv2h;
        }
    }
    const size_t stride = n;
    for (int iy = 0; iy < n; ++iy) {
        const size_t row = static_cast<size_t>(iy) * n;
        for (int ix = 0; ix < n; ++ix) {
            size_t i = row + ix;
            if (iy == 0)
                py[i] = (-3 * p[i] + 4 * p[i + stride] - p[i + 2 * stride]) * inv2h;
            else if (iy == n - 1)
                py[i] = (3 * p[i] - 4 * p[i - stride] + p[i - 2 * stride]) * inv2h;
            else
                py[i] = (p[i + stride] - p[i - stride]) * inv2h;
        }
    }
}

std::complex<double> mu_from_partials(double ux, double uy, double vx, double vy,
                                      bool* degenerate = nullptr) {
    std::complex<double> fz(0.5 * (ux + vy), 0.5 * (vx - uy));
    std::complex<double> fzbar(0.5 * (ux - vy), 0.5 * (vx + uy));
    if (std::abs(fz) < 1e-12) {
        if (degenerate) *degenerate = true;
        return {0.0, 0.0};
    }
    if (degenerate) *degenerate = false;
    return fzbar / fz;
}

}  // namespace

GridMap GridMap::identity(int n) {
    if (n < 2) throw std::runtime_error("grid map: resolution must be >= 2");
    GridMap m;
    m.resolution = n;
    m.u.resize(static_cast<size_t>(n) * n);
    m.v.resize(static_cast<size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            m.u[static_cast<size_t>(iy) * n + ix] = node_coord(ix, n);
            m.v[static_cast<size_t>(iy) * n + ix] = node_coord(iy, n);
        }
    return m;
}

Eigen::Vector2d GridMap::sample(double x, double y) const {
    const int n = resolution;
    double sx = snap_lattice_coord(x * (n - 1), n);
    double sy = snap_lattice_coord(y * (n - 1), n);
    BilinearCell c = bilinear_cell(sx, sy, n);
    auto du = [&](int ix, int iy) { return at_u(ix, iy) - node_coord(ix, n); };
    auto dv = [&](int ix, int iy) { return at_v(ix, iy) - node_coord(iy, n); };
    double dx = bilerp(du(c.i0, c.j0), du(c.i0 + 1, c.j0), du(c.i0, c.j0 + 1),
                       du(c.i0 + 1, c.j0 + 1), c.fx, c.fy);
    double dy = bilerp(dv(c.i0, c.j0), dv(c.i0 + 1, c.j0), dv(c.i0, c.j0 + 1),
                       dv(c.i0 + 1, c.j0 + 1), c.fx, c.fy);
    return {x + dx, y + dy};
}

void GridMap::validate() const {
    const int n = resolution;
    if (n < 2) throw std::runtime_error("grid map: resolution must be >= 2");
    if (u.size() != static_cast<size_t>(n) * n || v.size() != u.size())
        throw std::runtime_error("grid map: array size mismatch");
    for (size_t i = 0; i < u.size(); ++i)
        if (!std::isfinite(u[i]) || !std::isfinite(v[i]))
            throw std::runtime_error("grid map: non-finite value");
    // Boundary-preserving self-map: boundary nodes land on the square
    // boundary within 1e−6.
    auto on_edge = [](double a) { return std::min(std::abs(a), std::abs(1 - a)) <= 1e-6; };
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            if (ix != 0 && ix != n - 1 && iy != 0 && iy != n - 1) continue;
            double uu = at_u(ix, iy), vv = at_v(ix, iy);
            bool inside = uu >= -1e-6 && uu <= 1 + 1e-6 && vv >= -1e-6 && vv <= 1 + 1e-6;
            if (!inside || (!on_edge(uu) && !on_edge(vv)))
                throw std::runtime_error("grid map: boundary node leaves the square boundary");
        }
}

double BeltramiField::max_abs() const {
    double m = 0;
    for (const auto& z : values) m = std::max(m, std::abs(z));
    return m;
}

ComplexDerivatives complex_derivatives(const GridMap& map) {
    const int n = map.resolution;
    if (n < 3) throw std::runtime_error("complex derivatives: resolution must be >= 3");
    std::vector<double> ux, uy, vx, vy;
    fd_partials(map.u, n, ux, uy);
    fd_partials(map.v, n, vx, vy);
    ComplexDerivatives d;
    d.resolution = n;
    d.fz.resize(ux.size());
    d.fzbar.resize(ux.size());
    for (size_t i = 0; i < ux.size(); ++i) {
        d.fz[i] = {0.5 * (ux[i] + vy[i]), 0.5 * (vx[i] - uy[i])};
        d.fzbar[i] = {0.5 * (ux[i] - vy[i]), 0.5 * (vx[i] + uy[i])};
    }
    return d;
}

BeltramiField beltrami_from_map(const GridMap& map, std::vector<int>* degenerate) {
    ComplexDerivatives d = complex_derivatives(map);
    BeltramiField mu;
    mu.resolution = d.resolution;
    mu.values.resize(d.fz.size());
    for (size_t i = 0; i < d.fz.size(); ++i) {
        if (std::abs(d.fz[i]) < 1e-12) {
            mu.values[i] = 0;
            if (degenerate) degenerate->push_back(static_cast<int>(i));
        } else {
            mu.values[i] = d.fzbar[i] / d.fz[i];
        }
    }
    return mu;
}

BeltramiField beltrami_per_face(const TriangleMesh& mesh, const UVMap& uv) {
    if (uv.mesh != &mesh) throw std::runtime_error("beltrami_per_face: uv bound to another mesh");
    BeltramiField mu;
    mu.resolution = 0;
    mu.values.resize(mesh.face_count());
    for (int fi = 0; fi < mesh.face_count(); ++fi) {
        const auto& f = mesh.faces[fi];
        Eigen::Vector3d e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        Eigen::Vector3d e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        double cross = e1.cross(e2).norm();
        double len1 = e1.norm();
        if (cross < 1e-14 || len1 < 1e-14)
            throw std::runtime_error("beltrami_per_face: degenerate 3D triangle " +
                                     std::to_string(fi));
        // Isometric frame of the triangle: x along e1, y in-plane orthogonal.
        double q1x = len1;
        double q2x = e1.dot(e2) / len1;
        double q2y = cross / len1;  // positive by construction
        // Affine partials of local -> uv: columns solve J [q1, q2] = [w1, w2].
        Eigen::Vector2d w1 = uv.uv[f[1]] - uv.uv[f[0]];
        Eigen::Vector2d w2 = uv.uv[f[2]] - uv.uv[f[0]];
        double ux = w1.x() / q1x;
        double vx = w1.y() / q1x;
        double uy = (w2.x() - ux * q2x) / q2y;
        double vy = (w2.y() - vx * q2x) / q2y;
        mu.values[fi] = mu_from_partials(ux, uy, vx, vy);
    }
    return mu;
}

double dilation(const BeltramiField& mu) {
    double m = mu.max_abs();
    if (m >= 1) throw std::runtime_error("dilation: max|mu| >= 1, not quasi-conformal");
    return (1 + m) / (1 - m);
}

BeltramiField compose_beltrami(const BeltramiField& mu_f,
                               const BeltramiField& mu_g_at_f,
                               const std::vector<std::complex<double>>& f_z) {
    if (mu_f.values.size() != mu_g_at_f.values.size() || mu_f.values.size() != f_z.size())
        throw std::runtime_error("compose_beltrami: grid size mismatch");
    BeltramiField out;
    out.resolution = mu_f.resolution;
    out.values.resize(mu_f.values.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        std::complex<double> r =
            std::abs(f_z[i]) > 1e-12 ? std::conj(f_z[i]) / f_z[i] : std::complex<double>(1, 0);
        std::complex<double> num = mu_f.values[i] + r * mu_g_at_f.values[i];
        std::complex<double> den = 1.0 + r * std::conj(mu_f.values[i]) * mu_g_at_f.values[i];
        if (std::abs(den) < 1e-12)
            throw std::runtime_error("compose_beltrami: vanishing denominator at node " +
                                     std::to_string(i));
        out.values[i] = num / den;
    }
    return out;
}

BijectivityReport certify_bijective(const GridMap& map) {
    const int n = map.resolution;
    std::vector<double> ux, uy, vx, vy;
    fd_partials(map.u, n, ux, uy);
    fd_partials(map.v, n, vx, vy);
    BijectivityReport rep;
    rep.min_jacobian = std::numeric_limits<double>::max();
    for (size_t i = 0; i < ux.size(); ++i) {
        rep.min_jacobian = std::min(rep.min_jacobian, ux[i] * vy[i] - uy[i] * vx[i]);
        bool degen = false;
        double m = std::abs(mu_from_partials(ux[i], uy[i], vx[i], vy[i], &degen));
        if (degen) {
            // |f_z| ~ 0 with |f_z̄| non-negligible means unbounded distortion.
            std::complex<double> fzbar(0.5 * (ux[i] - vy[i]), 0.5 * (vx[i] + uy[i]));
            if (std::abs(fzbar) >= 1e-12) m = std::numeric_limits<double>::infinity();
        }
        rep.max_mu = std::max(rep.max_mu, m);
    }
    rep.mu_bounded = rep.max_mu < 1;
    rep.certified = rep.mu_bounded && rep.min_jacobian > 0;
    return rep;
}

namespace {

// One Newton solve for f(y) = x on the bilinear interpolant, with step
// halving when the residual grows. Returns true when the final residual
// meets `tol`.
bool newton_invert(const GridMap& map, double x, double y, double& yu, double& yv,
                   double tol) {
    const int n = map.resolution;
    double cu = yu, cv = yv;
    Eigen::Vector2d r = map.sample(cu, cv) - Eigen::Vector2d(x, y);
    double err = r.lpNorm<Eigen::Infinity>();
    for (int iter = 0; iter < 50 && err > 1e-13; ++iter) {
        // Jacobian of the interpolant in the current cell.
        double sx = snap_lattice_coord(cu * (n - 1), n);
        double sy = snap_lattice_coord(cv * (n - 1), n);
        BilinearCell c = bilinear_cell(sx, sy, n);
        auto U = [&](int dx, int dy) { return map.at_u(c.i0 + dx, c.j0 + dy); };
        auto V = [&](int dx, int dy) { return map.at_v(c.i0 + dx, c.j0 + dy); };
        Eigen::Matrix2d J;
        J(0, 0) = ((1 - c.fy) * (U(1, 0) - U(0, 0)) + c.fy * (U(1, 1) - U(0, 1))) * (n - 1);
        J(0, 1) = ((1 - c.fx) * (U(0, 1) - U(0, 0)) + c.fx * (U(1, 1) - U(1, 0))) * (n - 1);
        J(1, 0) = ((1 - c.fy) * (V(1, 0) - V(0, 0)) + c.fy * (V(1, 1) - V(0, 1))) * (n - 1);
        J(1, 1) = ((1 - c.fx) * (V(0, 1) - V(0, 0)) + c.fx * (V(1, 1) - V(1, 0))) * (n - 1);
        double det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
        if (std::abs(det) < 1e-18) break;
        Eigen::Vector2d step = J.inverse() * r;
        double scale = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 6; ++halving, scale *= 0.5) {
            double nu = std::clamp(cu - scale * step.x(), 0.0, 1.0);
            double nv = std::clamp(cv - scale * step.y(), 0.0, 1.0);
            Eigen::Vector2d nr = map.sample(nu, nv) - Eigen::Vector2d(x, y);
            double nerr = nr.lpNorm<Eigen::Infinity>();
            if (nerr < err) {
                cu = nu; cv = nv; r = nr; err = nerr;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    if (err <= tol) {
        yu = cu;
        yv = cv;
        return true;
    }
    return false;
}

}  // namespace

GridMap invert_map(const GridMap& map, double tol) {
    map.validate();
    const int n = map.resolution;
    const size_t nn = static_cast<size_t>(n) * n;
    GridMap inv;
    inv.resolution = n;
    inv.u.assign(nn, 0.0);
    inv.v.assign(nn, 0.0);
    std::vector<char> done(nn, 0);
    std::vector<char> seeded(nn, 0);
    std::vector<double> seed_u(nn, 0.0), seed_v(nn, 0.0), seed_err(nn, 0.0);

    // Exact pass: a node whose own position already maps to itself (identity
    // regions) is its own inverse, bitwise.
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            double x = node_coord(ix, n), y = node_coord(iy, n);
            Eigen::Vector2d img = map.sample(x, y);
            if (img.x() == x && img.y() == y) {
                size_t i = static_cast<size_t>(iy) * n + ix;
                inv.u[i] = x;
                inv.v[i] = y;
                done[i] = 1;
            }
        }

    // Forward cell scan: invert each source cell's bilinear patch for the
    // lattice nodes inside its image's bounding box.
    for (int cy = 0; cy + 1 < n; ++cy)
        for (int cx = 0; cx + 1 < n; ++cx) {
            double pu[4] = {map.at_u(cx, cy), map.at_u(cx + 1, cy), map.at_u(cx, cy + 1),
                            map.at_u(cx + 1, cy + 1)};
            double pv[4] = {map.at_v(cx, cy), map.at_v(cx + 1, cy), map.at_v(cx, cy + 1),
                            map.at_v(cx + 1, cy + 1)};
            double lo_u = std::min({pu[0], pu[1], pu[2], pu[3]});
            double hi_u = std::max({pu[0], pu[1], pu[2], pu[3]});
            double lo_v = std::min({pv[0], pv[1], pv[2], pv[3]});
            double hi_v = std::max({pv[0], pv[1], pv[2], pv[3]});
            int jx0 = std::max(0, static_cast<int>(std::ceil(lo_u * (n - 1) - 1e-9)));
            int jx1 = std::min(n - 1, static_cast<int>(std::floor(hi_u * (n - 1) + 1e-9)));
            int jy0 = std::max(0, static_cast<int>(std::ceil(lo_v * (n - 1) - 1e-9)));
            int jy1 = std::min(n - 1, static_cast<int>(std::floor(hi_v * (n - 1) + 1e-9)));
            for (int jy = jy0; jy <= jy1; ++jy)
                for (int jx = jx0; jx <= jx1; ++jx) {
                    size_t node = static_cast<size_t>(jy) * n + jx;
                    if (done[node]) continue;
                    double X = node_coord(jx, n), Y = node_coord(jy, n);
                    // Local inverse in cell coordinates (a, b) ∈ [0,1]².
                    double a = 0.5, b = 0.5;
                    for (int it = 0; it < 15; ++it) {
                        double fu = bilerp(pu[0], pu[1], pu[2], pu[3], a, b) - X;
                        double fv = bilerp(pv[0], pv[1], pv[2], pv[3], a, b) - Y;
                        if (std::abs(fu) < 1e-14 && std::abs(fv) < 1e-14) break;
                        double ja = (1 - b) * (pu[1] - pu[0]) + b * (pu[3] - pu[2]);
                        double jb = (1 - a) * (pu[2] - pu[0]) + a * (pu[3] - pu[1]);
                        double jc = (1 - b) * (pv[1] - pv[0]) + b * (pv[3] - pv[2]);
                        double jd = (1 - a) * (pv[2] - pv[0]) + a * (pv[3] - pv[1]);
                        double det = ja * jd - jb * jc;
                        if (std::abs(det) < 1e-18) break;
                        a -= (jd * fu - jb * fv) / det;
                        b -= (-jc * fu + ja * fv) / det;
                        a = std::clamp(a, -0.5, 1.5);
                        b = std::clamp(b, -0.5, 1.5);
                    }
                    if (a < -1e-9 || a > 1 + 1e-9 || b < -1e-9 || b > 1 + 1e-9) continue;
                    double cand_u = std::clamp((cx + a) / (n - 1.0), 0.0, 1.0);
                    double cand_v = std::clamp((cy + b) / (n - 1.0), 0.0, 1.0);
                    Eigen::Vector2d res = map.sample(cand_u, cand_v) - Eigen::Vector2d(X, Y);
                    double err = res.lpNorm<Eigen::Infinity>();
                    if (!seeded[node] || err < seed_err[node]) {
                        seeded[node] = 1;
                        seed_u[node] = cand_u;
                        seed_v[node] = cand_v;
                        seed_err[node] = err;
                    }
                }
        }

    std::deque<size_t> frontier;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            size_t node = static_cast<size_t>(iy) * n + ix;
            if (done[node]) {
                frontier.push_back(node);
                continue;
            }
            if (!seeded[node]) continue;
            double yu = seed_u[node], yv = seed_v[node];
            if (newton_invert(map, node_coord(ix, n), node_coord(iy, n), yu, yv, tol)) {
                inv.u[node] = yu;
                inv.v[node] = yv;
                done[node] = 1;
                frontier.push_back(node);
            }
        }

    // Fill remaining nodes from converged neighbors.
    while (!frontier.empty()) {
        size_t node = frontier.front();
        frontier.pop_front();
        int ix = static_cast<int>(node % n), iy = static_cast<int>(node / n);
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int jx = ix + dx[k], jy = iy + dy[k];
            if (jx < 0 || jx >= n || jy < 0 || jy >= n) continue;
            size_t nb = static_cast<size_t>(jy) * n + jx;
            if (done[nb]) continue;
            double yu = inv.u[node], yv = inv.v[node];
            if (newton_invert(map, node_coord(jx, n), node_coord(jy, n), yu, yv, tol)) {
                inv.u[nb] = yu;
                inv.v[nb] = yv;
                done[nb] = 1;
                frontier.push_back(nb);
            }
        }
    }

    for (size_t i = 0; i < nn; ++i)
        if (!done[i])
            throw std::runtime_error("invert_map: Newton non-convergence at node " +
                                     std::to_string(i));
    return inv;
}

double laplacian_energy(const GridMap& map) {
    const int n = map.resolution;
    if (n < 3) throw std::runtime_error("laplacian energy: resolution must be >= 3");
    const double inv_h2 = static_cast<double>(n - 1) * (n - 1);
    double sum = 0;
    for (int iy = 1; iy < n - 1; ++iy)
        for (int ix = 1; ix < n - 1; ++ix) {
            auto du = [&](int jx, int jy) { return map.at_u(jx, jy) - node_coord(jx, n); };
            auto dv = [&](int jx, int jy) { return map.at_v(jx, jy) - node_coord(jy, n); };
            double lu = (du(ix + 1, iy) + du(ix - 1, iy) + du(ix, iy + 1) + du(ix, iy - 1) -
                         4 * du(ix, iy)) * inv_h2;
            double lv = (dv(ix + 1, iy) + dv(ix - 1, iy) + dv(ix, iy + 1) + dv(ix, iy - 1) -
                         4 * dv(ix, iy)) * inv_h2;
            sum += lu * lu + lv * lv;
        }
    const double m = static_cast<double>(n - 2) * (n - 2);
    return std::sqrt(sum / m);
}

FeatureGrid grid_from_map(const GridMap& map) {
    FeatureGrid g(map.resolution, 2);
    std::copy(map.u.begin(), map.u.end(), g.plane(0));
    std::copy(map.v.begin(), map.v.end(), g.plane(1));
    return g;
}

GridMap map_from_grid(const FeatureGrid& grid) {
    if (grid.channels != 2) throw std::runtime_error("map_from_grid: expected 2 channels");
    GridMap m;
    m.resolution = grid.resolution;
    m.u.assign(grid.plane(0), grid.plane(0) + grid.mask.size());
    m.v.assign(grid.plane(1), grid.plane(1) + grid.mask.size());
    m.validate();
    return m;
}

FeatureGrid grid_from_beltrami(const BeltramiField& mu) {
    if (mu.resolution < 8)
        throw std::runtime_error("grid_from_beltrami: per-face fields are not grid-exportable");
    FeatureGrid g(mu.resolution, 2);
    for (size_t i = 0; i < mu.values.size(); ++i) {
        g.plane(0)[i] = mu.values[i].real();
        g.plane(1)[i] = mu.values[i].imag();
    }
    return g;
}

}  // namespace qcsurf
