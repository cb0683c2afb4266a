#include "qcsurf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace qcsurf {

namespace {

double rate(double num, double den) { return den > 0 ? num / den : 0.0; }

std::vector<std::array<int, 2>> boundary_nodes(const std::vector<char>& m, int n) {
    std::vector<std::array<int, 2>> out;
    auto inside = [&](int ix, int iy) {
        return ix >= 0 && iy >= 0 && ix < n && iy < n && m[static_cast<size_t>(iy) * n + ix];
    };
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            if (!m[static_cast<size_t>(iy) * n + ix]) continue;
            if (!inside(ix - 1, iy) || !inside(ix + 1, iy) || !inside(ix, iy - 1) ||
                !inside(ix, iy + 1))
                out.push_back({ix, iy});
        }
    return out;
}

void directed_distances(const std::vector<std::array<int, 2>>& from,
                        const std::vector<std::array<int, 2>>& to,
                        std::vector<double>& pool) {
    for (const auto& p : from) {
        double best = 1e300;
        for (const auto& q : to) {
            double dx = p[0] - q[0], dy = p[1] - q[1];
            best = std::min(best, dx * dx + dy * dy);
        }
        pool.push_back(std::sqrt(best));
    }
}

}  // namespace

ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth, int n_classes) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::runtime_error("metrics: prediction/truth size mismatch");
    const double total = static_cast<double>(pred.size());
    ClassificationReport r;
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) correct += (pred[i] == truth[i]);
    r.accuracy = correct / total;
    for (int c = 0; c < n_classes; ++c) {
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            bool p = pred[i] == c, t = truth[i] == c;
            tp += (p && t);
            fp += (p && !t);
            fn += (!p && t);
            tn += (!p && !t);
        }
        r.sensitivity += rate(tp, tp + fn);
        r.precision += rate(tp, tp + fp);
        r.npv += rate(tn, tn + fn);
        r.specificity += rate(tn, tn + fp);
    }
    r.sensitivity /= n_classes;
    r.precision /= n_classes;
    r.npv /= n_classes;
    r.specificity /= n_classes;
    return r;
}

double hd95_masks(const std::vector<char>& a, const std::vector<char>& b, int n) {
    auto ba = boundary_nodes(a, n);
    auto bb = boundary_nodes(b, n);
    if (ba.empty() && bb.empty()) return 0.0;
    if (ba.empty() || bb.empty()) return std::sqrt(2.0) * (n - 1);
    std::vector<double> pool;
    pool.reserve(ba.size() + bb.size());
    directed_distances(ba, bb, pool);
    directed_distances(bb, ba, pool);
    std::sort(pool.begin(), pool.end());
    size_t k = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(pool.size())));
    if (k == 0) k = 1;
    return pool[k - 1];
}

SegmentationReport segmentation_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& truth, int n, int samples) {
    const size_t plane = static_cast<size_t>(n) * n;
    if (pred.size() != truth.size() || pred.size() != plane * samples || samples <= 0)
        throw std::runtime_error("metrics: segmentation buffer size mismatch");
    SegmentationReport r;
    double mse = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - truth[i];
        mse += d * d;
    }
    r.mse = mse / static_cast<double>(pred.size());

    for (int s = 0; s < samples; ++s) {
        std::vector<char> p(plane), t(plane);
        for (size_t i = 0; i < plane; ++i) {
            p[i] = pred[s * plane + i] > 0.5;
            t[i] = truth[s * plane + i] > 0.5;
        }
        double tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < plane; ++i) {
            tp += (p[i] && t[i]);
            fp += (p[i] && !t[i]);
            fn += (!p[i] && t[i]);
        }
        r.dice += (tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 1.0;
        r.iou += (tp + fp + fn) > 0 ? tp / (tp + fp + fn) : 1.0;
        if (tp + fn > 0)
            r.sensitivity += tp / (tp + fn);
        else
            r.sensitivity += (tp + fp == 0) ? 1.0 : 0.0;
        r.hd95 += hd95_masks(p, t, n);
    }
    r.dice /= samples;
    r.iou /= samples;
    r.sensitivity /= samples;
    r.hd95 /= samples;
    return r;
}

MapStats map_statistics(const std::vector<GridMap>& maps) {
    MapStats s;
    s.count = static_cast<int>(maps.size());
    s.min_jacobian = 1e300;
    for (const GridMap& m : maps) {
        BijectivityReport r = certify_bijective(m);
        if (!r.certified) ++s.violations;
        s.max_mu_max = std::max(s.max_mu_max, r.max_mu);
        s.max_mu_mean += r.max_mu;
        s.min_jacobian = std::min(s.min_jacobian, r.min_jacobian);
    }
    if (s.count > 0) s.max_mu_mean /= s.count;
    return s;
}

}  // namespace qcsurf
