// data.hpp — synthetic dataset generation: random wavy and biharmonic-spline
// surfaces, digit textures lifted onto meshes, a blob-lesion segmentation
// set, and IDX image/label file IO with a generated digit corpus.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qcsurf/mesh.hpp"

namespace qcsurf::data {

using Rng = std::mt19937_64;

// Uniform draws built from raw engine output so results do not depend on the
// standard library's distribution implementations.
inline double urand(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double urange(Rng& rng, double lo, double hi) { return lo + (hi - lo) * urand(rng); }

struct SurfaceSpec {
    enum class Kind { Simple, Complex };
    Kind kind = Kind::Simple;
    uint64_t seed = 0;
    int grid = 64;  // vertices per side over [0,1]²
};

// z = a·sin(2π p x + s)·cos(2π q y + t), p,q ∈ {1,2,3}, a ∈ [0.1, 0.2],
// so |z| ≤ 0.2 by construction.
TriangleMesh gen_simple_surface(const SurfaceSpec& spec);

// Scattered-point interpolant with the 2D biharmonic kernel
// G(r) = r²(ln r − 1), G(0) = 0.
struct BiharmonicSpline {
    std::vector<double> px, py, heights, coeff;
    double eval(double x, double y) const;
};

// Solves the dense interpolation system; throws on a singular system
// (coincident control points).
BiharmonicSpline solve_biharmonic(const std::vector<double>& px,
                                  const std::vector<double>& py,
                                  const std::vector<double>& heights);

// 24 control points uniform in [−0.2,1.2]², heights uniform in [−0.4,0.4];
// redraws on a singular system.
BiharmonicSpline draw_complex_spline(Rng& rng);

// Spline surface restricted to the grid over [0,1]² (the fluctuating margin
// outside the unit square carries no vertices).
TriangleMesh gen_complex_surface(const SurfaceSpec& spec);

// Per-vertex bilinear sample of a 28×28 grayscale image (bytes, row 0 = top)
// over the mesh's (x,y) ∈ [0,1]² footprint; values scaled to [0,1].
SurfaceFunction digit_texture(const TriangleMesh& mesh,
                              const unsigned char* image, int rows, int cols);

// ---- lesion segmentation set ----------------------------------------------

struct LesionSample {
    TriangleMesh mesh;
    SurfaceFunction texture;  // smooth base darkened inside the blobs
    SurfaceFunction mask;     // blob indicator, values in {0,1}
};

// One sample: complex surface, 1–3 Gaussian-darkened blobs with radii in
// [0.05, 0.15] (in (x,y) units), disk-indicator mask covering a fraction of
// the square in [0.002, 0.2] (redraws the blob set above 0.2).
// forced_blobs ≥ 0 overrides the blob count (0 gives an all-zero mask).
LesionSample gen_lesion_sample(uint64_t sample_seed, int forced_blobs = -1);
std::vector<LesionSample> gen_lesion_dataset(int n_samples, uint64_t seed);

// ---- IDX files -------------------------------------------------------------

struct IdxImages {
    int count = 0, rows = 0, cols = 0;
    std::vector<unsigned char> pixels;  // count × rows × cols, row 0 = top
    const unsigned char* image(int i) const {
        return pixels.data() + static_cast<size_t>(i) * rows * cols;
    }
};

IdxImages load_idx_images(const std::string& path);       // magic 2051
std::vector<unsigned char> load_idx_labels(const std::string& path);  // magic 2049
void save_idx_images(const std::string& path, const IdxImages& images);
void save_idx_labels(const std::string& path, const std::vector<unsigned char>& labels);

// ---- generated digit corpus ------------------------------------------------

// Renders one 28×28 grayscale digit: stroke glyph with random rotation,
// scale, shear, translation, and stroke width.
std::vector<unsigned char> render_digit(int digit, Rng& rng);

struct DigitCorpusPaths {
    std::string train_images, train_labels, test_images, test_labels;
};

// Writes (once) a 12000-image train split and a 10000-image test split of
// rendered digits under `dir` and returns the four file paths. Existing
// files with valid headers are reused.
DigitCorpusPaths ensure_digit_corpus(const std::string& dir);

}  // namespace qcsurf::data
