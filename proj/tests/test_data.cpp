// Synthetic data generators: surface families, digit textures, the lesion
// segmentation set, and IDX corpus IO.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "qcsurf/data.hpp"
#include "qcsurf/mesh.hpp"

using namespace qcsurf;
namespace fs = std::filesystem;

namespace {

double z_range(const TriangleMesh& mesh) {
    double lo = 1e300, hi = -1e300;
    for (const auto& v : mesh.vertices) {
        lo = std::min(lo, v.z());
        hi = std::max(hi, v.z());
    }
    return hi - lo;
}

fs::path scratch_dir() {
    fs::path p = fs::temp_directory_path() / "qcsurf_test_data";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("simple surfaces respect the amplitude bound") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        data::SurfaceSpec spec;
        spec.kind = data::SurfaceSpec::Kind::Simple;
        spec.seed = seed;
        spec.grid = 24;
        TriangleMesh mesh = data::gen_simple_surface(spec);
        REQUIRE(mesh.vertex_count() == 24 * 24);
        double max_abs = 0;
        for (const auto& v : mesh.vertices) max_abs = std::max(max_abs, std::fabs(v.z()));
        CHECK(max_abs <= 0.2 + 1e-12);
        // Amplitude is at least 0.1 and the grid samples near the wave peaks.
        CHECK(max_abs > 0.05);
    }
}

TEST_CASE("surface generation is deterministic in the seed") {
    data::SurfaceSpec spec;
    spec.seed = 11;
    spec.grid = 16;
    TriangleMesh a = data::gen_simple_surface(spec);
    TriangleMesh b = data::gen_simple_surface(spec);
    REQUIRE(a.vertex_count() == b.vertex_count());
    for (int i = 0; i < a.vertex_count(); ++i)
        CHECK(a.vertices[i] == b.vertices[i]);

    spec.kind = data::SurfaceSpec::Kind::Complex;
    TriangleMesh c = data::gen_complex_surface(spec);
    TriangleMesh d = data::gen_complex_surface(spec);
    for (int i = 0; i < c.vertex_count(); ++i)
        CHECK(c.vertices[i] == d.vertices[i]);

    spec.seed = 12;
    TriangleMesh e = data::gen_complex_surface(spec);
    bool differs = false;
    for (int i = 0; i < c.vertex_count() && !differs; ++i)
        differs = c.vertices[i].z() != e.vertices[i].z();
    CHECK(differs);
}

TEST_CASE("biharmonic spline interpolates its control points") {
    std::vector<double> px = {0.0, 1.0, 0.0, 1.0, 0.4, 0.7};
    std::vector<double> py = {0.0, 0.0, 1.0, 1.0, 0.3, 0.8};
    std::vector<double> h = {0.1, -0.2, 0.3, 0.05, -0.15, 0.2};
    data::BiharmonicSpline s = data::solve_biharmonic(px, py, h);
    for (size_t j = 0; j < px.size(); ++j)
        CHECK(std::fabs(s.eval(px[j], py[j]) - h[j]) < 1e-8);

    SUBCASE("zero heights give the zero interpolant") {
        std::vector<double> zero(px.size(), 0.0);
        data::BiharmonicSpline z = data::solve_biharmonic(px, py, zero);
        for (double x = -0.1; x <= 1.1; x += 0.17)
            for (double y = -0.1; y <= 1.1; y += 0.17)
                CHECK(std::fabs(z.eval(x, y)) < 1e-12);
    }

    SUBCASE("coincident control points are rejected") {
        px.push_back(px[0]);
        py.push_back(py[0]);
        h.push_back(0.0);
        CHECK_THROWS(data::solve_biharmonic(px, py, h));
    }
}

TEST_CASE("complex surfaces carry more height variation than simple ones") {
    double sum_simple = 0, sum_complex = 0;
    const int trials = 40;
    for (uint64_t seed = 0; seed < trials; ++seed) {
        data::SurfaceSpec spec;
        spec.seed = seed;
        spec.grid = 24;
        spec.kind = data::SurfaceSpec::Kind::Simple;
        sum_simple += z_range(data::gen_simple_surface(spec));
        spec.kind = data::SurfaceSpec::Kind::Complex;
        TriangleMesh mesh = data::gen_complex_surface(spec);
        double r = z_range(mesh);
        sum_complex += r;
        CHECK(r < 10.0);  // interpolant overshoot stays tame
        CHECK(r > 0.05);
    }
    CHECK(sum_complex / trials > sum_simple / trials);
}

TEST_CASE("digit textures sample the image y-up") {
    // One bright pixel at the image's top-right corner must land at the
    // (x, y) = (1, 1) vertex after the flip to y-up.
    std::vector<unsigned char> img(28 * 28, 0);
    img[27] = 255;  // row 0 (top), col 27 (right)
    TriangleMesh mesh = make_grid_mesh(28, 28);
    SurfaceFunction f = data::digit_texture(mesh, img.data(), 28, 28);
    CHECK(f.at(0, 27 * 28 + 27) == 1.0);  // (x, y) = (1, 1)
    CHECK(f.at(0, 0) == 0.0);             // (0, 0) is far from the ink
    CHECK(f.at(0, 27) == 0.0);            // (1, 0): same column, flipped row

    double total = 0;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        CHECK(f.at(0, v) >= 0.0);
        CHECK(f.at(0, v) <= 1.0);
        total += f.at(0, v);
    }
    CHECK(total < 5.0);  // a single source pixel, bilinear support only

    CHECK_THROWS(data::digit_texture(mesh, img.data(), 28, 27));
}

TEST_CASE("lesion samples have binary masks with bounded coverage") {
    for (uint64_t seed = 0; seed < 15; ++seed) {
        data::LesionSample s = data::gen_lesion_sample(seed);
        const int nv = s.mesh.vertex_count();
        REQUIRE(s.mask.values.size() == static_cast<size_t>(nv));
        double covered = 0;
        for (int v = 0; v < nv; ++v) {
            double m = s.mask.at(0, v);
            CHECK((m == 0.0 || m == 1.0));
            covered += m;
            CHECK(s.texture.at(0, v) >= 0.0);
            CHECK(s.texture.at(0, v) <= 1.0);
        }
        double fraction = covered / nv;
        CHECK(fraction <= 0.2);
        // Smallest blob is a disk of radius 0.05 fully inside the square.
        CHECK(fraction > 0.002);
    }
}

TEST_CASE("forced blob count controls the lesion mask") {
    data::LesionSample none = data::gen_lesion_sample(3, 0);
    for (double m : none.mask.values) CHECK(m == 0.0);
    // Without blobs the texture is the smooth base band.
    for (double t : none.texture.values) {
        CHECK(t >= 0.6 - 1e-12);
        CHECK(t <= 0.8 + 1e-12);
    }

    data::LesionSample one = data::gen_lesion_sample(3, 1);
    double covered = 0;
    for (double m : one.mask.values) covered += m;
    CHECK(covered > 0);
}

TEST_CASE("lesion dataset is deterministic and varied") {
    std::vector<data::LesionSample> a = data::gen_lesion_dataset(4, 77);
    std::vector<data::LesionSample> b = data::gen_lesion_dataset(4, 77);
    REQUIRE(a.size() == 4);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t v = 0; v < a[i].texture.values.size(); ++v)
            CHECK(a[i].texture.values[v] == b[i].texture.values[v]);
    bool differs = false;
    for (size_t v = 0; v < a[0].texture.values.size() && !differs; ++v)
        differs = a[0].texture.values[v] != a[1].texture.values[v];
    CHECK(differs);
}

TEST_CASE("idx files round trip and validate their headers") {
    fs::path dir = scratch_dir();
    data::IdxImages imgs;
    imgs.count = 3;
    imgs.rows = 5;
    imgs.cols = 4;
    imgs.pixels.resize(3 * 5 * 4);
    for (size_t i = 0; i < imgs.pixels.size(); ++i)
        imgs.pixels[i] = static_cast<unsigned char>((i * 37 + 11) % 256);
    std::string ipath = (dir / "t-images.idx").string();
    data::save_idx_images(ipath, imgs);
    data::IdxImages loaded = data::load_idx_images(ipath);
    CHECK(loaded.count == 3);
    CHECK(loaded.rows == 5);
    CHECK(loaded.cols == 4);
    CHECK(loaded.pixels == imgs.pixels);

    std::vector<unsigned char> labels = {0, 9, 4, 4, 7};
    std::string lpath = (dir / "t-labels.idx").string();
    data::save_idx_labels(lpath, labels);
    CHECK(data::load_idx_labels(lpath) == labels);

    SUBCASE("magic numbers are enforced") {
        // Images and labels use distinct magics; crossing them must fail.
        CHECK_THROWS(data::load_idx_images(lpath));
        CHECK_THROWS(data::load_idx_labels(ipath));
        CHECK_THROWS(data::load_idx_images((dir / "absent.idx").string()));
    }

    SUBCASE("truncated data is rejected") {
        std::string tpath = (dir / "trunc.idx").string();
        {
            std::ifstream in(ipath, std::ios::binary);
            std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
            std::ofstream out(tpath, std::ios::binary | std::ios::trunc);
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
        }
        CHECK_THROWS(data::load_idx_images(tpath));
    }

    SUBCASE("save validates the pixel buffer size") {
        imgs.count = 4;  // pixels no longer match
        CHECK_THROWS(data::save_idx_images((dir / "bad.idx").string(), imgs));
    }
}

TEST_CASE("rendered digits are deterministic ink-on-background images") {
    data::Rng r1(42), r2(42);
    for (int d = 0; d < 10; ++d) {
        std::vector<unsigned char> a = data::render_digit(d, r1);
        std::vector<unsigned char> b = data::render_digit(d, r2);
        REQUIRE(a.size() == 28u * 28u);
        CHECK(a == b);
        int ink = 0, blank = 0;
        for (unsigned char px : a) {
            ink += px > 128;
            blank += px == 0;
        }
        CHECK(ink > 10);     // a visible stroke
        CHECK(blank > 300);  // most of the frame stays empty
    }
    CHECK_THROWS(data::render_digit(10, r1));
}

TEST_CASE("digit corpus is written once and reused") {
    fs::path dir = scratch_dir() / "corpus";
    data::DigitCorpusPaths p = data::ensure_digit_corpus(dir.string());

    data::IdxImages train = data::load_idx_images(p.train_images);
    data::IdxImages test = data::load_idx_images(p.test_images);
    CHECK(train.count == 12000);
    CHECK(test.count == 10000);
    CHECK(train.rows == 28);
    CHECK(train.cols == 28);

    std::vector<unsigned char> train_labels = data::load_idx_labels(p.train_labels);
    std::vector<unsigned char> test_labels = data::load_idx_labels(p.test_labels);
    REQUIRE(train_labels.size() == 12000u);
    REQUIRE(test_labels.size() == 10000u);
    std::set<int> seen;
    for (unsigned char l : train_labels) {
        CHECK(l <= 9);
        seen.insert(l);
    }
    CHECK(seen.size() == 10u);

    // A second call must reuse the files rather than regenerate them.
    auto stamp = fs::last_write_time(p.train_images);
    data::DigitCorpusPaths q = data::ensure_digit_corpus(dir.string());
    CHECK(q.train_images == p.train_images);
    CHECK(fs::last_write_time(p.train_images) == stamp);
}
