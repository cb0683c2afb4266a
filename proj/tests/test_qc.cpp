// Beltrami machinery against closed-form maps: derivative exactness, the
// analytic coefficient of polynomial maps, composition, inversion, and the
// bijectivity certificate.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <complex>
#include <random>

#include "qcsurf/lattice.hpp"
#include "qcsurf/qc.hpp"

using namespace qcsurf;
using cd = std::complex<double>;

namespace {

// Build a lattice map from w(z) acting on z = x + iy over [0,1]².
GridMap map_from_function(int n, const std::function<cd(cd)>& w) {
    GridMap m;
    m.resolution = n;
    m.u.resize(static_cast<size_t>(n) * n);
    m.v.resize(m.u.size());
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            cd z(node_coord(ix, n), node_coord(iy, n));
            cd img = w(z);
            m.at_u(ix, iy) = img.real();
            m.at_v(ix, iy) = img.imag();
        }
    return m;
}

double max_mu_error(const BeltramiField& mu, int n, const std::function<cd(cd)>& exact,
                    int margin = 0) {
    double worst = 0;
    for (int iy = margin; iy < n - margin; ++iy)
        for (int ix = margin; ix < n - margin; ++ix) {
            cd z(node_coord(ix, n), node_coord(iy, n));
            worst = std::max(worst,
                             std::abs(mu.values[static_cast<size_t>(iy) * n + ix] - exact(z)));
        }
    return worst;
}

}  // namespace

TEST_CASE("complex derivatives are exact on affine maps") {
    // w = 1.5 z + 0.5 conj(z), i.e. (u, v) = (2x, y): f_z = 1.5, f_zbar = 0.5.
    const int n = 33;
    GridMap m = map_from_function(n, [](cd z) { return 1.5 * z + 0.5 * std::conj(z); });
    ComplexDerivatives d = complex_derivatives(m);
    for (size_t i = 0; i < d.fz.size(); ++i) {
        CHECK(std::abs(d.fz[i] - cd(1.5, 0)) < 1e-12);      // edges included:
        CHECK(std::abs(d.fzbar[i] - cd(0.5, 0)) < 1e-12);   // one-sided stencils
    }                                                       // are exact on affine
    BeltramiField mu = beltrami_from_map(m);
    for (const cd& v : mu.values) CHECK(std::abs(v - cd(1.0 / 3.0, 0)) < 1e-12);
    CHECK(dilation(mu) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("quadratic map matches the analytic coefficient") {
    // w = z + 0.2 conj(z) + 0.1 z²: mu = 0.2 / (1 + 0.2 z). Second-order
    // stencils differentiate quadratics exactly, so the error is rounding.
    auto f = [](cd z) { return z + 0.2 * std::conj(z) + 0.1 * z * z; };
    auto mu_exact = [](cd z) { return 0.2 / (1.0 + 0.2 * z); };
    for (int n : {64, 128}) {
        GridMap m = map_from_function(n, f);
        BeltramiField mu = beltrami_from_map(m);
        CHECK(max_mu_error(mu, n, mu_exact) < 1e-3);
    }
}

TEST_CASE("cubic map error shrinks at second order") {
    // w = z + 0.2 conj(z) + 0.05 z³: mu = 0.2 / (1 + 0.15 z²). The cubic term
    // has a nonvanishing third derivative, so halving h divides the finite
    // difference error by about 4.
    auto f = [](cd z) { return z + 0.2 * std::conj(z) + 0.05 * z * z * z; };
    auto mu_exact = [](cd z) { return 0.2 / (1.0 + 0.15 * z * z); };
    GridMap m64 = map_from_function(64, f);
    GridMap m128 = map_from_function(128, f);
    double e64 = max_mu_error(beltrami_from_map(m64), 64, mu_exact);
    double e128 = max_mu_error(beltrami_from_map(m128), 128, mu_exact);
    CHECK(e64 < 1e-3);
    CHECK(e128 < 1e-3);
    CHECK(e128 > 1e-12);  // genuinely resolution-limited, not exact
    double ratio = e64 / e128;  // h ratio 127/63 -> expect ~(127/63)² = 4.06
    CHECK(ratio > 2.8);
    CHECK(ratio < 5.2);
}

TEST_CASE("analytic maps are conformal") {
    GridMap m = map_from_function(65, [](cd z) { return z + 0.1 * z * z; });
    CHECK(beltrami_from_map(m).max_abs() < 1e-12);
}

TEST_CASE("composition formula agrees with the composed map") {
    // f quadratic as above, g = w + 0.15 conj(w) (constant mu_g = 0.15, so no
    // resampling is needed to express mu_g at f(z)).
    const int n = 128;
    auto f = [](cd z) { return z + 0.2 * std::conj(z) + 0.1 * z * z; };
    auto g = [](cd w) { return w + 0.15 * std::conj(w); };
    GridMap mf = map_from_function(n, f);
    GridMap mgf = map_from_function(n, [&](cd z) { return g(f(z)); });

    BeltramiField mu_f = beltrami_from_map(mf);
    ComplexDerivatives df = complex_derivatives(mf);
    BeltramiField mu_g_at_f;
    mu_g_at_f.resolution = n;
    mu_g_at_f.values.assign(static_cast<size_t>(n) * n, cd(0.15, 0));

    BeltramiField composed = compose_beltrami(mu_f, mu_g_at_f, df.fz);
    BeltramiField direct = beltrami_from_map(mgf);
    double worst = 0;
    for (int iy = 1; iy < n - 1; ++iy)
        for (int ix = 1; ix < n - 1; ++ix) {
            size_t i = static_cast<size_t>(iy) * n + ix;
            worst = std::max(worst, std::abs(composed.values[i] - direct.values[i]));
        }
    CHECK(worst < 2e-2);
    CHECK(worst < 1e-6);  // both sides are smooth; agreement is FD-limited
}

TEST_CASE("composition rejects a vanishing denominator") {
    const int n = 8;
    BeltramiField a, b;
    a.resolution = b.resolution = n;
    a.values.assign(64, cd(1, 0));
    b.values.assign(64, cd(-1, 0));
    std::vector<cd> fz(64, cd(1, 0));  // r = 1, so 1 + conj(1)·(-1) = 0
    CHECK_THROWS(compose_beltrami(a, b, fz));
    BeltramiField short_field = a;
    short_field.values.pop_back();
    CHECK_THROWS(compose_beltrami(short_field, b, fz));
}

TEST_CASE("degenerate nodes are zeroed and reported") {
    const int n = 16;
    GridMap m = map_from_function(n, [](cd) { return cd(0.3, 0.4); });
    std::vector<int> degenerate;
    BeltramiField mu = beltrami_from_map(m, &degenerate);
    CHECK(degenerate.size() == static_cast<size_t>(n) * n);
    for (const cd& v : mu.values) CHECK(v == cd(0, 0));
}

TEST_CASE("bijectivity certificate") {
    SUBCASE("identity") {
        BijectivityReport r = certify_bijective(GridMap::identity(32));
        CHECK(r.certified);
        CHECK(r.mu_bounded);
        CHECK(r.max_mu < 1e-12);
        CHECK(r.min_jacobian == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("mild shear passes") {
        GridMap m = map_from_function(32, [](cd z) {
            return cd(z.real() + 0.2 * z.imag(), z.imag());
        });
        BijectivityReport r = certify_bijective(m);
        CHECK(r.certified);
        // u_x=1, u_y=0.2, v_x=0, v_y=1: |mu| = |0.1i| / |1 - 0.1i|.
        CHECK(r.max_mu == doctest::Approx(0.1 / std::hypot(1.0, 0.1)).epsilon(1e-10));
        CHECK(r.min_jacobian == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("fold is rejected") {
        GridMap m = map_from_function(33, [](cd z) {
            double x = z.real();
            return cd(4 * (x - 0.5) * (x - 0.5), z.imag());  // folds at x = 1/2
        });
        BijectivityReport r = certify_bijective(m);
        CHECK_FALSE(r.certified);
        CHECK(r.min_jacobian <= 0);
    }
}

TEST_CASE("dilation edge cases") {
    BeltramiField mu;
    mu.resolution = 8;
    mu.values.assign(64, cd(0, 0));
    CHECK(dilation(mu) == doctest::Approx(1.0).epsilon(1e-15));
    mu.values[10] = cd(0.5, 0);
    CHECK(mu.max_abs() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(dilation(mu) == doctest::Approx(3.0).epsilon(1e-12));
    mu.values[10] = cd(0, 1);  // |mu| = 1: not quasi-conformal
    CHECK_THROWS(dilation(mu));
}

// One-dimensional Moebius stretch f(x, y) = (x/(1.5 - 0.5x), y), a certified
// self-map with closed-form inverse x = 3x'/(2 + x').
static double moebius_fwd(double x) { return x / (1.5 - 0.5 * x); }
static double moebius_inv(double xp) { return 3 * xp / (2 + xp); }

TEST_CASE("inversion matches the analytic inverse") {
    const int n = 1025;
    GridMap m = map_from_function(n, [](cd z) { return cd(moebius_fwd(z.real()), z.imag()); });
    REQUIRE(certify_bijective(m).certified);
    GridMap inv = invert_map(m, 1e-8);

    SUBCASE("node positions") {
        double worst = 0;
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                double xp = node_coord(ix, n);
                worst = std::max(worst, std::abs(inv.at_u(ix, iy) - moebius_inv(xp)));
                worst = std::max(worst, std::abs(inv.at_v(ix, iy) - node_coord(iy, n)));
            }
        // Newton residual 1e-8 plus the bilinear interpolation gap of f.
        CHECK(worst < 1e-6);
    }
    SUBCASE("forward-of-inverse residual at nodes") {
        double worst = 0;
        for (int iy = 0; iy < n; iy += 7)
            for (int ix = 0; ix < n; ix += 7) {
                Eigen::Vector2d back = m.sample(inv.at_u(ix, iy), inv.at_v(ix, iy));
                worst = std::max(worst, std::abs(back.x() - node_coord(ix, n)));
                worst = std::max(worst, std::abs(back.y() - node_coord(iy, n)));
            }
        CHECK(worst < 2e-8);
    }
    SUBCASE("inverse distortion is the negated coefficient") {
        // mu of (phi(x), y) is (phi'-1)/(phi'+1); for the inverse, evaluated
        // anywhere, the same formula with psi' = d moebius_inv / dx'.
        BeltramiField mu_inv = beltrami_from_map(inv);
        double worst = 0;
        for (int iy = 1; iy < n - 1; ++iy)
            for (int ix = 1; ix < n - 1; ++ix) {
                double xp = node_coord(ix, n);
                double dpsi = 6.0 / ((2 + xp) * (2 + xp));
                cd expect((dpsi - 1) / (dpsi + 1), 0);
                worst = std::max(worst,
                                 std::abs(mu_inv.values[static_cast<size_t>(iy) * n + ix] -
                                          expect));
            }
        CHECK(worst < 1e-4);
        // Sign flip against the forward coefficient at the matching point.
        BeltramiField mu_f = beltrami_from_map(m);
        size_t mid = static_cast<size_t>(n / 2) * n + n / 4;  // x = 0.25 row mid
        double x = node_coord(n / 4, n);
        double dphi = 1.5 / ((1.5 - 0.5 * x) * (1.5 - 0.5 * x));
        CHECK(std::abs(mu_f.values[mid] - cd((dphi - 1) / (dphi + 1), 0)) < 1e-6);
    }
}

TEST_CASE("inverting the identity is exact") {
    GridMap id = GridMap::identity(65);
    GridMap inv = invert_map(id);
    CHECK(inv.u == id.u);
    CHECK(inv.v == id.v);
}

TEST_CASE("smoothness energy closed form") {
    SUBCASE("identity and affine displacements vanish") {
        CHECK(laplacian_energy(GridMap::identity(33)) == 0.0);
        GridMap aff = map_from_function(33, [](cd z) {
            return cd(1.02 * z.real(), z.imag() + 0.01 * z.real());
        });
        CHECK(laplacian_energy(aff) < 1e-12);
    }
    SUBCASE("separable sine displacement") {
        // d_u = a sin(2 pi x) sin(2 pi y): the 5-point Laplacian scales it by
        // 4 (cos(2 pi h) - 1)/h², and the interior mean of sin² sin² has the
        // closed form ((n-1)/(2(n-2)))².
        const int n = 256;
        const double a = 0.01, h = 1.0 / (n - 1);
        GridMap m = map_from_function(n, [&](cd z) {
            return z + cd(a * std::sin(2 * M_PI * z.real()) * std::sin(2 * M_PI * z.imag()), 0);
        });
        double symbol = 4 * (std::cos(2 * M_PI * h) - 1) / (h * h);
        double mean_sq = (n - 1.0) / (2.0 * (n - 2.0));
        double expect = std::abs(a * symbol) * mean_sq;
        CHECK(laplacian_energy(m) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("grid bridging round trips") {
    const int n = 32;
    // Boundary-preserving test map (map_from_grid re-validates).
    GridMap m = map_from_function(n, [](cd z) {
        double x = z.real(), y = z.imag();
        double s = 0.05 * std::sin(M_PI * x) * std::sin(M_PI * y);
        return cd(x + s, y - s);
    });
    FeatureGrid g = grid_from_map(m);
    CHECK(g.channels == 2);
    GridMap back = map_from_grid(g);
    CHECK(back.u == m.u);
    CHECK(back.v == m.v);

    FeatureGrid bad(n, 3);
    CHECK_THROWS(map_from_grid(bad));

    BeltramiField mu = beltrami_from_map(m);
    FeatureGrid gm = grid_from_beltrami(mu);
    for (size_t i = 0; i < mu.values.size(); ++i) {
        CHECK(gm.plane(0)[i] == mu.values[i].real());
        CHECK(gm.plane(1)[i] == mu.values[i].imag());
    }
    BeltramiField per_face;
    per_face.resolution = 0;
    per_face.values.assign(10, cd(0, 0));
    CHECK_THROWS(grid_from_beltrami(per_face));
}

TEST_CASE("face coefficients detect anisotropic stretch") {
    const int n = 9;
    TriangleMesh flat = make_grid_mesh(n, n);
    UVMap uv;
    uv.mesh = &flat;
    uv.uv.resize(flat.vertices.size());
    for (size_t i = 0; i < flat.vertices.size(); ++i)
        uv.uv[i] = flat.vertices[i].head<2>();

    SUBCASE("identity flattening is conformal") {
        BeltramiField mu = beltrami_per_face(flat, uv);
        CHECK(mu.values.size() == static_cast<size_t>(flat.face_count()));
        CHECK(mu.max_abs() < 1e-12);
    }
    SUBCASE("isotropic 3D scaling stays conformal") {
        TriangleMesh big = flat;
        for (auto& v : big.vertices) v *= 2.0;
        UVMap uv2 = uv;
        uv2.mesh = &big;
        CHECK(beltrami_per_face(big, uv2).max_abs() < 1e-12);
    }
    SUBCASE("2:1 stretch gives |mu| = 1/3 on every face") {
        TriangleMesh wide = flat;
        for (auto& v : wide.vertices) v.x() *= 2.0;
        UVMap uv2 = uv;
        uv2.mesh = &wide;
        BeltramiField mu = beltrami_per_face(wide, uv2);
        for (const cd& v : mu.values)
            CHECK(std::abs(v) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("uv bound to another mesh throws") {
        TriangleMesh other = make_grid_mesh(n, n);
        CHECK_THROWS(beltrami_per_face(other, uv));
    }
}

TEST_CASE("map validation rejects broken boundaries") {
    GridMap m = GridMap::identity(16);
    m.validate();
    GridMap off = m;
    off.at_u(0, 5) = 0.25;  // left-edge node pulled inside
    CHECK_THROWS(off.validate());
    GridMap nan = m;
    nan.at_v(3, 3) = std::nan("");
    CHECK_THROWS(nan.validate());
    GridMap inner = m;
    inner.at_u(5, 5) += 0.2;  // interior nodes may move freely
    inner.at_v(5, 5) -= 0.1;
    inner.validate();
    GridMap sheared = m;
    for (int iy = 1; iy < 15; ++iy)
        sheared.at_u(0, iy) = 0.0, sheared.at_v(0, iy) = node_coord(iy, 16) * 0.9;
    sheared.validate();  // sliding along an edge is still boundary-preserving
}

TEST_CASE("lattice sampling hits nodes exactly") {
    std::mt19937_64 rng(7);
    auto urand = [&] { return (rng() >> 11) * 0x1.0p-53; };
    SUBCASE("identity returns the query bitwise") {
        GridMap id = GridMap::identity(17);
        for (int t = 0; t < 200; ++t) {
            double x = urand(), y = urand();
            Eigen::Vector2d s = id.sample(x, y);
            CHECK(s.x() == x);
            CHECK(s.y() == y);
        }
    }
    SUBCASE("node queries return stored values") {
        const int n = 17;
        GridMap m = map_from_function(n, [](cd z) {
            double x = z.real(), y = z.imag();
            double s = 0.07 * std::sin(M_PI * x) * std::sin(M_PI * y);
            return cd(x + s, y + 0.5 * s);
        });
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                Eigen::Vector2d s = m.sample(node_coord(ix, n), node_coord(iy, n));
                CHECK(s.x() == doctest::Approx(m.at_u(ix, iy)).epsilon(1e-15));
                CHECK(s.y() == doctest::Approx(m.at_v(ix, iy)).epsilon(1e-15));
            }
    }
    SUBCASE("mid-cell sample matches a hand bilerp of displacements") {
        const int n = 5;
        GridMap m = GridMap::identity(n);
        m.at_u(2, 2) += 0.08;  // lone displaced node
        double x = (2 + 0.25) / 4.0, y = (2 + 0.5) / 4.0;
        Eigen::Vector2d s = m.sample(x, y);
        CHECK(s.x() == doctest::Approx(x + 0.08 * 0.75 * 0.5).epsilon(1e-14));
        CHECK(s.y() == doctest::Approx(y).epsilon(1e-14));
    }
}
