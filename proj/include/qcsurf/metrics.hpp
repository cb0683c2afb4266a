// metrics.hpp — evaluation reports: macro-averaged classification rates,
// segmentation overlap/boundary metrics on lattice masks, and bijectivity
// statistics over a batch of maps.
#pragma once

#include <vector>

#include "qcsurf/qc.hpp"

namespace qcsurf {

struct ClassificationReport {
    double accuracy = 0;
    double sensitivity = 0;  // macro-averaged one-vs-rest recall
    double precision = 0;
    double npv = 0;          // negative predictive value
    double specificity = 0;
};

// One-vs-rest rates per class, macro-averaged; empty denominators score 0.
ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth, int n_classes);

struct SegmentationReport {
    double mse = 0;          // over all soft values
    double dice = 0;         // per-sample means on masks thresholded at 0.5
    double iou = 0;
    double sensitivity = 0;
    double hd95 = 0;         // lattice-cell units
};

// pred/truth hold `samples` concatenated n×n soft masks. Empty-mask
// conventions: both masks empty → dice = iou = 1, hd95 = 0; exactly one
// empty → hd95 = the lattice diagonal; empty truth → sensitivity 1 if the
// prediction is empty too, else 0.
SegmentationReport segmentation_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& truth, int n, int samples);

// 95th-percentile (nearest-rank) of the symmetric boundary-node distance set
// between two binary masks on an n×n lattice, in cell units.
double hd95_masks(const std::vector<char>& a, const std::vector<char>& b, int n);

struct MapStats {
    int count = 0;
    int violations = 0;      // max|μ| ≥ 1 or min Jacobian ≤ 0
    double max_mu_max = 0;
    double max_mu_mean = 0;
    double min_jacobian = 0; // min over the batch
};

MapStats map_statistics(const std::vector<GridMap>& maps);

}  // namespace qcsurf
