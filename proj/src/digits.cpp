// Rendered digit corpus. Each digit is a small set of polyline strokes in a
// unit glyph box (y up); rendering jitters the glyph with a random affine
// transform and draws anti-aliased strokes by distance to the segments.
// Written as standard IDX files so the corpus reads like any digit set.
#include <array>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "qcsurf/data.hpp"

namespace qcsurf::data {

namespace {

struct P {
    double x, y;
};
using Stroke = std::vector<P>;

// Glyph coordinates hand-placed in [0,1]²; legibility over calligraphy.
std::vector<Stroke> glyph(int digit) {
    auto ring = [](double cx, double cy, double rx, double ry, int m) {
        Stroke s;
        for (int i = 0; i <= m; ++i) {
            double a = 2 * 3.14159265358979323846 * i / m;
            s.push_back({cx + rx * std::sin(a), cy + ry * std::cos(a)});
        }
        return s;
    };
    switch (digit) {
        case 0:
            return {ring(0.5, 0.5, 0.30, 0.42, 12)};
        case 1:
            return {{{0.38, 0.72}, {0.55, 0.92}, {0.55, 0.08}}};
        case 2:
            return {{{0.22, 0.70},
                     {0.30, 0.86},
                     {0.50, 0.92},
                     {0.70, 0.84},
                     {0.75, 0.66},
                     {0.62, 0.46},
                     {0.24, 0.10},
                     {0.78, 0.10}}};
        case 3:
            return {{{0.24, 0.84},
                     {0.48, 0.92},
                     {0.70, 0.78},
                     {0.62, 0.58},
                     {0.42, 0.52},
                     {0.66, 0.44},
                     {0.72, 0.24},
                     {0.48, 0.08},
                     {0.22, 0.18}}};
        case 4:
            return {{{0.30, 0.92}, {0.20, 0.42}, {0.80, 0.42}}, {{0.62, 0.70}, {0.62, 0.06}}};
        case 5:
            return {{{0.74, 0.90},
                     {0.30, 0.90},
                     {0.27, 0.56},
                     {0.52, 0.62},
                     {0.74, 0.46},
                     {0.70, 0.20},
                     {0.44, 0.08},
                     {0.22, 0.18}}};
        case 6:
            return {{{0.68, 0.90},
                     {0.42, 0.66},
                     {0.29, 0.42},
                     {0.34, 0.16},
                     {0.58, 0.08},
                     {0.74, 0.24},
                     {0.68, 0.44},
                     {0.44, 0.48},
                     {0.31, 0.36}}};
        case 7:
            return {{{0.20, 0.90}, {0.78, 0.90}, {0.46, 0.08}}, {{0.34, 0.50}, {0.62, 0.50}}};
        case 8:
            return {ring(0.5, 0.71, 0.20, 0.20, 10), ring(0.5, 0.27, 0.25, 0.24, 10)};
        case 9:
            return {ring(0.52, 0.68, 0.21, 0.21, 10),
                    {{0.73, 0.68}, {0.69, 0.38}, {0.52, 0.08}}};
        default:
            throw std::runtime_error("digit renderer: digit out of range");
    }
}

double point_segment_dist(double x, double y, const P& a, const P& b) {
    double ux = b.x - a.x, uy = b.y - a.y;
    double len2 = ux * ux + uy * uy;
    double t = len2 > 0 ? ((x - a.x) * ux + (y - a.y) * uy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    double dx = x - (a.x + t * ux), dy = y - (a.y + t * uy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

std::vector<unsigned char> render_digit(int digit, Rng& rng) {
    const double angle = urange(rng, -0.25, 0.25);
    const double scale = urange(rng, 0.78, 1.05);
    const double aspect = urange(rng, 0.92, 1.08);
    const double shear = urange(rng, -0.15, 0.15);
    const double tx = urange(rng, -0.08, 0.08);
    const double ty = urange(rng, -0.08, 0.08);
    const double stroke_r = urange(rng, 0.6, 1.1);  // pixels
    const double bright = urange(rng, 0.85, 1.0);

    const double ca = std::cos(angle), sa = std::sin(angle);
    // Rotation ∘ shear ∘ anisotropic scale, about the glyph center; then the
    // unit box maps to the 20×20 core of the 28×28 frame (y up).
    auto map_pt = [&](const P& p) {
        double x = (p.x - 0.5) * scale * aspect, y = (p.y - 0.5) * scale / aspect;
        x += shear * y;
        double rx = ca * x - sa * y, ry = sa * x + ca * y;
        return P{4.0 + (rx + 0.5 + tx) * 20.0, 4.0 + (ry + 0.5 + ty) * 20.0};
    };

    std::vector<std::array<P, 2>> segs;
    for (const Stroke& s : glyph(digit))
        for (size_t i = 0; i + 1 < s.size(); ++i)
            segs.push_back({map_pt(s[i]), map_pt(s[i + 1])});

    std::vector<unsigned char> img(28 * 28, 0);
    for (int row = 0; row < 28; ++row)
        for (int col = 0; col < 28; ++col) {
            double x = col, y = 27.0 - row;  // IDX row 0 is the top
            double d = 1e9;
            for (const auto& sg : segs) d = std::min(d, point_segment_dist(x, y, sg[0], sg[1]));
            double v = std::min(1.0, std::max(0.0, (stroke_r - d) / 0.8 + 0.5));
            img[static_cast<size_t>(row) * 28 + col] =
                static_cast<unsigned char>(std::lround(255.0 * bright * v));
        }
    return img;
}

namespace {

bool usable_corpus(const DigitCorpusPaths& p) {
    try {
        IdxImages test = load_idx_images(p.test_images);
        if (test.count != 10000 || test.rows != 28 || test.cols != 28) return false;
        IdxImages train = load_idx_images(p.train_images);
        if (train.count < 2000 || train.rows != 28 || train.cols != 28) return false;
        if (load_idx_labels(p.train_labels).size() != static_cast<size_t>(train.count))
            return false;
        if (load_idx_labels(p.test_labels).size() != static_cast<size_t>(test.count))
            return false;
        return true;
    } catch (const std::runtime_error&) {
        return false;
    }
}

void write_split(const std::string& img_path, const std::string& lab_path, int count,
                 uint64_t seed) {
    IdxImages images;
    images.count = count;
    images.rows = images.cols = 28;
    images.pixels.resize(static_cast<size_t>(count) * 28 * 28);
    std::vector<unsigned char> labels(count);
    std::vector<uint64_t> substream(count);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {  // sequential draws keep the set thread-count independent
        labels[i] = static_cast<unsigned char>(rng() % 10);
        substream[i] = rng();
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) {
        Rng local(substream[i]);
        std::vector<unsigned char> img = render_digit(labels[i], local);
        std::copy(img.begin(), img.end(), images.pixels.begin() + static_cast<size_t>(i) * 28 * 28);
    }
    save_idx_images(img_path, images);
    save_idx_labels(lab_path, labels);
}

}  // namespace

DigitCorpusPaths ensure_digit_corpus(const std::string& dir) {
    DigitCorpusPaths p;
    p.train_images = dir + "/digits-train-images.idx";
    p.train_labels = dir + "/digits-train-labels.idx";
    p.test_images = dir + "/digits-test-images.idx";
    p.test_labels = dir + "/digits-test-labels.idx";
    if (usable_corpus(p)) return p;
    std::filesystem::create_directories(dir);
    write_split(p.train_images, p.train_labels, 12000, 0xd161u);
    write_split(p.test_images, p.test_labels, 10000, 0xd162u);
    return p;
}

}  // namespace qcsurf::data
