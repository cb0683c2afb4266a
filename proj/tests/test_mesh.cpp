// Mesh container, validation, grid construction and discrete curvature.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "qcsurf/mesh.hpp"

using namespace qcsurf;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Fan cone: apex 0 at the origin, m rim vertices on the circle of radius 1
// at height c. Slant length sqrt(1+c^2), rim chord 2 sin(pi/m).
TriangleMesh make_cone(int m, double c) {
    TriangleMesh mesh;
    mesh.vertices.push_back({0, 0, 0});
    for (int k = 0; k < m; ++k) {
        double t = 2 * kPi * k / m;
        mesh.vertices.push_back({std::cos(t), std::sin(t), c});
    }
    for (int k = 0; k < m; ++k)
        mesh.faces.push_back({0, 1 + k, 1 + (k + 1) % m});
    validate_mesh(mesh);
    return mesh;
}

std::vector<double> height_field(int n, double (*f)(double, double)) {
    std::vector<double> z(static_cast<size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix)
            z[static_cast<size_t>(iy) * n + ix] = f(double(ix) / (n - 1), double(iy) / (n - 1));
    return z;
}

std::vector<double> random_heights(int n, unsigned seed, double amp) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    std::vector<double> z(static_cast<size_t>(n) * n);
    for (auto& v : z) v = dist(rng);
    return z;
}

}  // namespace

TEST_CASE("grid mesh counts and boundary") {
    auto mesh = make_grid_mesh(7, 5);
    CHECK(mesh.vertex_count() == 35);
    CHECK(mesh.face_count() == 2 * 6 * 4);
    CHECK(static_cast<int>(mesh.boundary.size()) == 2 * (7 + 5) - 4);
    CHECK(mesh.boundary[0] == 0);

    auto flags = boundary_flags(mesh);
    int nb = 0;
    for (char f : flags) nb += f;
    CHECK(nb == static_cast<int>(mesh.boundary.size()));
}

TEST_CASE("flat grid areas") {
    int n = 9;
    auto mesh = make_grid_mesh(n, n);
    double h = 1.0 / (n - 1);
    double total = 0;
    for (int f = 0; f < mesh.face_count(); ++f) {
        CHECK(face_area(mesh, f) == doctest::Approx(h * h / 2).epsilon(1e-12));
        total += face_area(mesh, f);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixed vertex areas partition the surface") {
    auto mesh = make_grid_mesh(24, 24, random_heights(24, 99, 0.15));
    auto areas = mixed_vertex_areas(mesh);
    double total_faces = 0;
    for (int f = 0; f < mesh.face_count(); ++f) total_faces += face_area(mesh, f);
    double total_mixed = std::accumulate(areas.begin(), areas.end(), 0.0);
    CHECK(total_mixed == doctest::Approx(total_faces).epsilon(1e-10));
    for (double a : areas) CHECK(a > 0);
}

TEST_CASE("cone apex deficit matches closed form") {
    // Apex angle sum of the fan is m * 2*asin(sin(pi/m)/slant), which only
    // uses the isoceles-triangle geometry, independent of the mesh code.
    for (double c : {0.5, 1.0, 2.0}) {
        for (int m : {6, 12, 40}) {
            auto mesh = make_cone(m, c);
            double slant = std::sqrt(1 + c * c);
            double expect_sum = m * 2 * std::asin(std::sin(kPi / m) / slant);

            auto sums = vertex_angle_sums(mesh);
            CHECK(sums[0] == doctest::Approx(expect_sum).epsilon(1e-12));

            // K at the apex carries the whole deficit over the mixed area.
            auto areas = mixed_vertex_areas(mesh);
            auto K = gaussian_curvature(mesh);
            double deficit = 2 * kPi - expect_sum;
            CHECK(K.at(0, 0) * areas[0] == doctest::Approx(deficit).epsilon(1e-10));
        }
    }
}

TEST_CASE("combinatorial Gauss-Bonnet on a random disk") {
    // Sum of (2pi - angle sum) over interior plus (pi - angle sum) over
    // boundary vertices equals 2pi for any disk triangulation.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-0.2, 0.2);
    std::vector<double> z(17 * 13);
    for (auto& v : z) v = dist(rng);
    auto mesh = make_grid_mesh(17, 13, z);

    auto sums = vertex_angle_sums(mesh);
    auto flags = boundary_flags(mesh);
    double total = 0;
    for (int v = 0; v < mesh.vertex_count(); ++v)
        total += (flags[v] ? kPi : 2 * kPi) - sums[v];
    CHECK(total == doctest::Approx(2 * kPi).epsilon(1e-9));
}

TEST_CASE("sphere patch curvature") {
    // z = sqrt(R^2 - (x-.5)^2 - (y-.5)^2): K = 1/R^2, H = 1/R everywhere.
    const int n = 49;
    const double R = 2.0;
    auto z = height_field(n, [](double x, double y) {
        return std::sqrt(4.0 - (x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5));
    });
    auto mesh = make_grid_mesh(n, n, z);
    auto K = gaussian_curvature(mesh);
    auto H = mean_curvature(mesh);

    int checked = 0;
    for (int iy = 8; iy < n - 8; ++iy) {
        for (int ix = 8; ix < n - 8; ++ix) {
            int v = iy * n + ix;
            CHECK(K.at(0, v) == doctest::Approx(1.0 / (R * R)).epsilon(0.05));
            CHECK(H.at(0, v) == doctest::Approx(1.0 / R).epsilon(0.05));
            ++checked;
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("cylinder sheet curvature") {
    // z = sqrt(R^2 - (x-.5)^2): K = 0, H = 1/(2R) (one principal curvature).
    const int n = 49;
    const double R = 2.0;
    auto z = height_field(n, [](double x, double) {
        return std::sqrt(4.0 - (x - 0.5) * (x - 0.5));
    });
    auto mesh = make_grid_mesh(n, n, z);
    auto K = gaussian_curvature(mesh);
    auto H = mean_curvature(mesh);

    for (int iy = 8; iy < n - 8; ++iy) {
        for (int ix = 8; ix < n - 8; ++ix) {
            int v = iy * n + ix;
            CHECK(std::abs(K.at(0, v)) < 0.01);
            CHECK(H.at(0, v) == doctest::Approx(1.0 / (2 * R)).epsilon(0.05));
        }
    }
}

TEST_CASE("flat grid is curvature-free") {
    auto mesh = make_grid_mesh(15, 15);
    auto K = gaussian_curvature(mesh);
    auto H = mean_curvature(mesh);
    auto flags = boundary_flags(mesh);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        if (flags[v]) continue;
        CHECK(std::abs(K.at(0, v)) < 1e-10);
        CHECK(std::abs(H.at(0, v)) < 1e-10);
    }
}

TEST_CASE("curvature is rigid-motion invariant") {
    auto z = random_heights(20, 4242, 0.2);
    auto mesh = make_grid_mesh(20, 20, z);
    auto K0 = gaussian_curvature(mesh);
    auto H0 = mean_curvature(mesh);

    Eigen::Matrix3d rot =
        Eigen::AngleAxisd(0.83, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    TriangleMesh moved = mesh;
    for (auto& v : moved.vertices) v = rot * v + Eigen::Vector3d(5, -2, 1);
    validate_mesh(moved);
    auto K1 = gaussian_curvature(moved);
    auto H1 = mean_curvature(moved);

    for (int v = 0; v < mesh.vertex_count(); ++v) {
        CHECK(K1.at(0, v) == doctest::Approx(K0.at(0, v)).epsilon(1e-9));
        CHECK(H1.at(0, v) == doctest::Approx(H0.at(0, v)).epsilon(1e-9));
    }
}

TEST_CASE("validation rejects broken meshes") {
    SUBCASE("duplicate face") {
        auto mesh = make_grid_mesh(4, 4);
        mesh.faces.push_back(mesh.faces[0]);
        CHECK_THROWS(validate_mesh(mesh));
    }
    SUBCASE("inconsistent orientation") {
        auto mesh = make_grid_mesh(4, 4);
        std::swap(mesh.faces[3][0], mesh.faces[3][1]);
        CHECK_THROWS(validate_mesh(mesh));
    }
    SUBCASE("non-manifold edge") {
        auto mesh = make_grid_mesh(4, 4);
        int extra = mesh.vertex_count();
        mesh.vertices.push_back({0.5, 0.5, 2.0});
        auto f = mesh.faces[0];
        mesh.faces.push_back({f[0], f[1], extra});
        CHECK_THROWS(validate_mesh(mesh));
    }
    SUBCASE("interior hole") {
        auto mesh = make_grid_mesh(6, 6);
        // Removing one interior face opens a second boundary loop.
        mesh.faces.erase(mesh.faces.begin() + 24);
        CHECK_THROWS(validate_mesh(mesh));
    }
    SUBCASE("degenerate face") {
        auto mesh = make_grid_mesh(4, 4);
        mesh.vertices[5] = mesh.vertices[6];
        CHECK_THROWS(validate_mesh(mesh));
    }
    SUBCASE("vertex index out of range") {
        auto mesh = make_grid_mesh(4, 4);
        mesh.faces[0][2] = 99;
        CHECK_THROWS(validate_mesh(mesh));
    }
}

TEST_CASE("surface function storage and validation") {
    auto mesh = make_grid_mesh(5, 5);
    SurfaceFunction f(mesh, 2);
    CHECK(static_cast<int>(f.values.size()) == 2 * mesh.vertex_count());
    f.at(1, 7) = 3.5;
    CHECK(f.values[mesh.vertex_count() + 7] == 3.5);
    CHECK_NOTHROW(f.validate());
    f.values[3] = std::nan("");
    CHECK_THROWS(f.validate());
    SurfaceFunction g;
    g.mesh = &mesh;
    g.channel_count = 1;
    g.values.resize(7);
    CHECK_THROWS(g.validate());
}

TEST_CASE("channels attach and fetch") {
    auto mesh = make_grid_mesh(3, 3);
    std::vector<double> tex(9, 0.5);
    mesh.set_channel("texture", tex);
    CHECK(mesh.has_channel("texture"));
    CHECK(mesh.channel("texture")[4] == 0.5);
    CHECK_THROWS(mesh.channel("absent"));
    CHECK_THROWS(mesh.set_channel("bad", std::vector<double>(5, 1.0)));
}

TEST_CASE("obj round trip with channels") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "qcsurf_test_mesh";
    fs::create_directories(dir);
    auto obj = (dir / "grid.obj").string();
    auto csv = (dir / "grid.csv").string();

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    std::vector<double> z(30);
    for (auto& v : z) v = dist(rng);
    auto mesh = make_grid_mesh(6, 5, z);
    std::vector<double> tex(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) tex[v] = 0.01 * v;
    mesh.set_channel("texture", tex);

    save_obj(mesh, obj);
    save_channels_csv(mesh, csv);

    auto back = load_mesh(obj);
    REQUIRE(back.vertex_count() == mesh.vertex_count());
    REQUIRE(back.face_count() == mesh.face_count());
    for (int v = 0; v < mesh.vertex_count(); ++v)
        CHECK((back.vertices[v] - mesh.vertices[v]).norm() < 1e-9);
    for (int f = 0; f < mesh.face_count(); ++f)
        CHECK(back.faces[f] == mesh.faces[f]);

    load_channels_csv(back, csv);
    REQUIRE(back.has_channel("texture"));
    for (int v = 0; v < mesh.vertex_count(); ++v)
        CHECK(back.channel("texture")[v] == doctest::Approx(tex[v]).epsilon(1e-12));

    fs::remove_all(dir);
}

TEST_CASE("off reader") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "qcsurf_test_mesh_off";
    fs::create_directories(dir);
    auto path = (dir / "tri.off").string();
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n", f);
    std::fclose(f);
    auto mesh = load_mesh(path);
    CHECK(mesh.vertex_count() == 4);
    CHECK(mesh.face_count() == 2);
    CHECK(mesh.boundary.size() == 4);
    fs::remove_all(dir);
}
