// Evaluation metrics against hand-counted confusion tables, hand-built masks
// and known-distortion maps.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "qcsurf/lattice.hpp"
#include "qcsurf/metrics.hpp"

using namespace qcsurf;

namespace {

// Square-block mask helper on an n×n lattice: 1 on [x0,x1)×[y0,y1).
std::vector<double> block_mask(int n, int x0, int x1, int y0, int y1) {
    std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
    for (int iy = y0; iy < y1; ++iy)
        for (int ix = x0; ix < x1; ++ix) m[static_cast<size_t>(iy) * n + ix] = 1.0;
    return m;
}

std::vector<char> to_char(const std::vector<double>& m) {
    std::vector<char> c(m.size());
    for (size_t i = 0; i < m.size(); ++i) c[i] = m[i] > 0.5;
    return c;
}

GridMap affine_map(int n, double ax, double by) {
    GridMap m;
    m.resolution = n;
    m.u.resize(static_cast<size_t>(n) * n);
    m.v.resize(m.u.size());
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            m.at_u(ix, iy) = ax * node_coord(ix, n);
            m.at_v(ix, iy) = by * node_coord(iy, n);
        }
    return m;
}

}  // namespace

TEST_CASE("classification rates match a hand-counted confusion table") {
    // 3 classes, 8 samples. Per class one-vs-rest counts:
    //   class 0: tp=2 fp=1 fn=0 tn=5
    //   class 1: tp=1 fp=1 fn=2 tn=4
    //   class 2: tp=2 fp=1 fn=1 tn=4
    std::vector<int> truth = {0, 0, 1, 1, 1, 2, 2, 2};
    std::vector<int> pred = {0, 0, 1, 2, 0, 2, 2, 1};
    ClassificationReport r = classification_metrics(pred, truth, 3);

    CHECK(r.accuracy == doctest::Approx(5.0 / 8).epsilon(1e-12));
    double sens = (2.0 / 2 + 1.0 / 3 + 2.0 / 3) / 3;
    double prec = (2.0 / 3 + 1.0 / 2 + 2.0 / 3) / 3;
    double npv = (5.0 / 5 + 4.0 / 6 + 4.0 / 5) / 3;
    double spec = (5.0 / 6 + 4.0 / 5 + 4.0 / 5) / 3;
    CHECK(r.sensitivity == doctest::Approx(sens).epsilon(1e-12));
    CHECK(r.precision == doctest::Approx(prec).epsilon(1e-12));
    CHECK(r.npv == doctest::Approx(npv).epsilon(1e-12));
    CHECK(r.specificity == doctest::Approx(spec).epsilon(1e-12));
}

TEST_CASE("classification edge cases") {
    SUBCASE("perfect prediction scores 1 everywhere") {
        std::vector<int> y = {0, 1, 2, 1, 0};
        ClassificationReport r = classification_metrics(y, y, 3);
        CHECK(r.accuracy == 1.0);
        CHECK(r.sensitivity == 1.0);
        CHECK(r.precision == 1.0);
        CHECK(r.npv == 1.0);
        CHECK(r.specificity == 1.0);
    }

    SUBCASE("all-wrong two-class prediction zeroes the positive rates") {
        std::vector<int> truth = {0, 1, 0, 1};
        std::vector<int> pred = {1, 0, 1, 0};
        ClassificationReport r = classification_metrics(pred, truth, 2);
        CHECK(r.accuracy == 0.0);
        CHECK(r.sensitivity == 0.0);
        CHECK(r.precision == 0.0);
        CHECK(r.npv == 0.0);
        CHECK(r.specificity == 0.0);
    }

    SUBCASE("a class absent from truth and prediction contributes zero rates") {
        // Class 2 never occurs: tp=fn=fp=0 so sens/prec score 0 for it,
        // pulling the macro average down instead of inflating it.
        std::vector<int> y = {0, 1, 0, 1};
        ClassificationReport r = classification_metrics(y, y, 3);
        CHECK(r.sensitivity == doctest::Approx(2.0 / 3).epsilon(1e-12));
        CHECK(r.precision == doctest::Approx(2.0 / 3).epsilon(1e-12));
        // tn denominators stay positive, so npv/spec count the empty class.
        CHECK(r.npv == 1.0);
        CHECK(r.specificity == 1.0);
    }

    SUBCASE("size mismatch throws") {
        std::vector<int> a = {0, 1}, b = {0};
        CHECK_THROWS(classification_metrics(a, b, 2));
        CHECK_THROWS(classification_metrics({}, {}, 2));
    }
}

TEST_CASE("dice, iou and sensitivity match hand counts") {
    const int n = 8;
    // pred block 16 nodes, truth block 16 nodes, overlap 8 nodes.
    std::vector<double> pred = block_mask(n, 1, 5, 1, 5);
    std::vector<double> truth = block_mask(n, 3, 7, 1, 5);
    SegmentationReport r = segmentation_metrics(pred, truth, n, 1);
    double tp = 8, fp = 8, fn = 8;
    CHECK(r.dice == doctest::Approx(2 * tp / (2 * tp + fp + fn)).epsilon(1e-12));
    CHECK(r.iou == doctest::Approx(tp / (tp + fp + fn)).epsilon(1e-12));
    CHECK(r.sensitivity == doctest::Approx(tp / (tp + fn)).epsilon(1e-12));
    // 16 mismatched binary nodes out of 64.
    CHECK(r.mse == doctest::Approx(16.0 / 64).epsilon(1e-12));

    SUBCASE("soft values threshold at 0.5") {
        for (double& v : pred) v = v > 0.5 ? 0.9 : 0.2;
        SegmentationReport soft = segmentation_metrics(pred, truth, n, 1);
        CHECK(soft.dice == doctest::Approx(r.dice).epsilon(1e-12));
        CHECK(soft.iou == doctest::Approx(r.iou).epsilon(1e-12));
    }

    SUBCASE("per-sample means average over the batch") {
        std::vector<double> p2(pred.size() * 2), t2(truth.size() * 2);
        // Sample 0 as above, sample 1 perfect.
        std::copy(pred.begin(), pred.end(), p2.begin());
        std::copy(truth.begin(), truth.end(), t2.begin());
        std::copy(truth.begin(), truth.end(), p2.begin() + pred.size());
        std::copy(truth.begin(), truth.end(), t2.begin() + truth.size());
        SegmentationReport two = segmentation_metrics(p2, t2, n, 2);
        CHECK(two.dice == doctest::Approx(0.5 * (r.dice + 1.0)).epsilon(1e-12));
        CHECK(two.sensitivity == doctest::Approx(0.5 * (r.sensitivity + 1.0)).epsilon(1e-12));
    }

    SUBCASE("buffer size mismatch throws") {
        CHECK_THROWS(segmentation_metrics(pred, truth, n, 2));
        CHECK_THROWS(segmentation_metrics(pred, truth, n + 1, 1));
    }
}

TEST_CASE("empty-mask conventions") {
    const int n = 6;
    std::vector<double> empty(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> full = block_mask(n, 2, 4, 2, 4);

    SUBCASE("both empty scores perfect agreement") {
        SegmentationReport r = segmentation_metrics(empty, empty, n, 1);
        CHECK(r.dice == 1.0);
        CHECK(r.iou == 1.0);
        CHECK(r.sensitivity == 1.0);
        CHECK(r.hd95 == 0.0);
        CHECK(r.mse == 0.0);
    }

    SUBCASE("prediction on empty truth scores zero overlap") {
        SegmentationReport r = segmentation_metrics(full, empty, n, 1);
        CHECK(r.dice == 0.0);
        CHECK(r.iou == 0.0);
        CHECK(r.sensitivity == 0.0);
        CHECK(r.hd95 == doctest::Approx(std::sqrt(2.0) * (n - 1)).epsilon(1e-12));
    }

    SUBCASE("missed truth scores zero overlap and the diagonal distance") {
        SegmentationReport r = segmentation_metrics(empty, full, n, 1);
        CHECK(r.dice == 0.0);
        CHECK(r.sensitivity == 0.0);
        CHECK(r.hd95 == doctest::Approx(std::sqrt(2.0) * (n - 1)).epsilon(1e-12));
    }
}

TEST_CASE("hd95 on shifted blocks matches the shift") {
    const int n = 16;
    // Two 4×4 blocks offset horizontally by 6 cells: every boundary node of
    // one block is within 6 of the other, and at least 5% of the pooled
    // distances reach the full offset minus the block width.
    std::vector<char> a = to_char(block_mask(n, 2, 6, 6, 10));
    std::vector<char> b = to_char(block_mask(n, 8, 12, 6, 10));
    double d = hd95_masks(a, b, n);
    CHECK(d >= 2.0);  // blocks do not touch
    CHECK(d <= std::sqrt(6.0 * 6.0 + 1.0));

    SUBCASE("identical masks have zero distance") {
        CHECK(hd95_masks(a, a, n) == 0.0);
    }

    SUBCASE("symmetry") {
        CHECK(hd95_masks(a, b, n) == hd95_masks(b, a, n));
    }

    SUBCASE("single-node masks measure plain euclidean distance") {
        std::vector<char> p(static_cast<size_t>(n) * n, 0), q(p);
        p[3 * n + 2] = 1;  // (2, 3)
        q[7 * n + 5] = 1;  // (5, 7)
        CHECK(hd95_masks(p, q, n) == doctest::Approx(5.0).epsilon(1e-12));
    }
}

TEST_CASE("map statistics aggregate the bijectivity certificate") {
    const int n = 12;
    std::vector<GridMap> maps;
    maps.push_back(affine_map(n, 1.0, 1.0));  // identity, mu = 0
    maps.push_back(affine_map(n, 2.0, 1.0));  // mu = 1/3, orientation kept
    maps.push_back(affine_map(n, -0.5, 1.0)); // folded: mu = 3, negative jacobian

    MapStats s = map_statistics(maps);
    CHECK(s.count == 3);
    CHECK(s.violations == 1);
    CHECK(s.max_mu_max == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(s.min_jacobian < 0.0);

    SUBCASE("a pure reflection reports unbounded distortion") {
        // u = -x, v = y has vanishing f_z with f_zbar = -1.
        MapStats refl = map_statistics({affine_map(n, -1.0, 1.0)});
        CHECK(refl.violations == 1);
        CHECK(std::isinf(refl.max_mu_max));
    }

    SUBCASE("certified batch has no violations") {
        maps.pop_back();
        MapStats ok = map_statistics(maps);
        CHECK(ok.count == 2);
        CHECK(ok.violations == 0);
        CHECK(ok.min_jacobian > 0.0);
        CHECK(ok.max_mu_mean == doctest::Approx((0.0 + 1.0 / 3) / 2).epsilon(1e-9));
    }

    SUBCASE("empty batch") {
        MapStats none = map_statistics({});
        CHECK(none.count == 0);
        CHECK(none.violations == 0);
    }
}
