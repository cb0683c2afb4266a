// Training loop for the warped-head models. Phase A trains the head against
// the estimator's current (frozen) maps; phase B alternates fixed-length
// blocks of estimator-only and head-only epochs, estimator first. During
// head epochs the per-sample maps are cached and reused until the estimator
// changes again, so a head block costs one estimator forward per sample.
#include "qcsurf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qcsurf/qcgr.hpp"

namespace qcsurf::nn {

namespace {

bool estimator_turn(const Schedule& s, int epoch) {
    if (epoch < s.head_epochs) return false;
    return (((epoch - s.head_epochs) / s.period) % 2) == 0;
}

void sgd_step(const std::vector<Tensor*>& params, double lr) {
    for (Tensor* p : params)
        for (size_t i = 0; i < p->val.size(); ++i) p->val[i] -= lr * p->grad[i];
}

double dice_binary(const double* pred, const double* truth, size_t count) {
    size_t inter = 0, psum = 0, tsum = 0;
    for (size_t i = 0; i < count; ++i) {
        bool p = pred[i] > 0.5, t = truth[i] > 0.5;
        inter += (p && t);
        psum += p;
        tsum += t;
    }
    if (psum + tsum == 0) return 1.0;  // both empty: perfect agreement
    return 2.0 * static_cast<double>(inter) / static_cast<double>(psum + tsum);
}

struct MapCache {
    bool valid = false;
    std::vector<double> uv;  // 2*n*n, map channels for one sample
    double l_bc = 0, l_lap = 0, mu = 0;
};

}  // namespace

TrainResult train(QCE* estimator, Head& head, const Dataset& data, TaskKind task,
                  const Schedule& schedule, const LossWeights& weights,
                  const TrainOptions& opts) {
    const int total = static_cast<int>(data.samples.size());
    if (total == 0) throw std::runtime_error("train: empty dataset");
    if (opts.batch <= 0) throw std::runtime_error("train: batch must be positive");
    const int n = data.resolution;
    const size_t plane = static_cast<size_t>(n) * n;
    const size_t in_count = static_cast<size_t>(data.channels) * plane;
    for (const Sample& s : data.samples) {
        if (s.input.size() != in_count) throw std::runtime_error("train: sample size mismatch");
        if (task == TaskKind::Segment && s.mask.size() != plane)
            throw std::runtime_error("train: mask size mismatch");
    }

    Rng rng(opts.seed);
    std::vector<int> order(total);
    for (int i = 0; i < total; ++i) order[i] = i;

    std::vector<Tensor*> head_params = head.params();
    std::vector<Tensor*> est_params;
    if (estimator) est_params = estimator->params();

    std::vector<MapCache> cache(estimator ? total : 0);
    BilinearWarp warp;
    TrainResult result;

    for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
        for (int i = total - 1; i > 0; --i) {  // Fisher-Yates, stdlib-independent
            int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        const bool est_ep = estimator && estimator_turn(schedule, epoch);

        double sum_task = 0, sum_bc = 0, sum_lap = 0, metric_sum = 0, max_mu = 0;

        for (int start = 0; start < total; start += opts.batch) {
            const int b = std::min(opts.batch, total - start);
            Tensor x(b, data.channels, n, n);
            std::vector<int> labels(b);
            std::vector<double> target;
            if (task == TaskKind::Segment) target.resize(static_cast<size_t>(b) * plane);
            for (int k = 0; k < b; ++k) {
                const Sample& s = data.samples[order[start + k]];
                std::copy(s.input.begin(), s.input.end(), x.val.begin() + k * in_count);
                labels[k] = s.label;
                if (task == TaskKind::Segment)
                    std::copy(s.mask.begin(), s.mask.end(), target.begin() + k * plane);
            }

            for (Tensor* p : head_params) p->zero_grad();
            for (Tensor* p : est_params) p->zero_grad();

            Tensor map, pred;
            if (!estimator) {
                pred = head.forward(x);
            } else if (est_ep) {
                map = estimator->forward(x);
                MapLossValue bc = loss_bc(map, weights.bc);
                MapLossValue lap = loss_lap(map, weights.lap);
                for (int k = 0; k < b; ++k) {
                    sum_bc += bc.per_sample[k];
                    sum_lap += lap.per_sample[k];
                    max_mu = std::max(max_mu, bc.max_abs_mu[k]);
                }
                pred = head.forward(warp.forward(x, map));
            } else {
                bool stale = false;
                for (int k = 0; k < b; ++k)
                    if (!cache[order[start + k]].valid) stale = true;
                if (stale) {
                    Tensor fresh = estimator->forward(x);
                    MapLossValue bc = loss_bc(fresh, 0.0);
                    MapLossValue lap = loss_lap(fresh, 0.0);
                    for (int k = 0; k < b; ++k) {
                        MapCache& mc = cache[order[start + k]];
                        mc.uv.assign(fresh.val.begin() + k * 2 * plane,
                                     fresh.val.begin() + (k + 1) * 2 * plane);
                        mc.l_bc = bc.per_sample[k];
                        mc.l_lap = lap.per_sample[k];
                        mc.mu = bc.max_abs_mu[k];
                        mc.valid = true;
                    }
                }
                map = Tensor(b, 2, n, n);
                for (int k = 0; k < b; ++k) {
                    const MapCache& mc = cache[order[start + k]];
                    std::copy(mc.uv.begin(), mc.uv.end(), map.val.begin() + k * 2 * plane);
                    sum_bc += mc.l_bc;
                    sum_lap += mc.l_lap;
                    max_mu = std::max(max_mu, mc.mu);
                }
                pred = head.forward(warp.forward(x, map));
            }

            double task_value;
            if (task == TaskKind::Classify) {
                task_value = softmax_cross_entropy(pred, labels);
                if (weights.task != 1.0)
                    for (double& g : pred.grad) g *= weights.task;
                std::vector<int> am = argmax_rows(pred);
                for (int k = 0; k < b; ++k) metric_sum += (am[k] == labels[k]) ? 1.0 : 0.0;
            } else {
                task_value = mse_loss(pred, target, weights.task);
                for (int k = 0; k < b; ++k)
                    metric_sum += dice_binary(pred.val.data() + k * plane,
                                              target.data() + k * plane, plane);
            }
            sum_task += task_value * b;

            Tensor dhead_in = head.backward(pred);
            if (est_ep) {
                warp.backward(dhead_in, nullptr, &map);  // adds to the bc/lap grads
                estimator->backward(map);
                sgd_step(est_params, opts.estimator_lr());
            } else {
                sgd_step(head_params, opts.lr);
            }
        }

        if (est_ep)
            for (MapCache& mc : cache) mc.valid = false;

        EpochLog log;
        log.epoch = epoch;
        log.l_task = sum_task / total;
        log.l_bc = sum_bc / total;
        log.l_lap = sum_lap / total;
        log.l_total = weights.task * log.l_task + weights.bc * log.l_bc + weights.lap * log.l_lap;
        log.metric = metric_sum / total;
        log.max_mu = max_mu;
        if (!std::isfinite(log.l_total))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        result.log.push_back(log);
        if (opts.on_epoch) opts.on_epoch(log);
    }
    return result;
}

EvalBatch qccnn_forward(QCE* estimator, Head& head, const Tensor& input) {
    EvalBatch out;
    if (!estimator) {
        out.map = identity_map_tensor(input.b, input.w);
        out.pred = head.forward(input);
        return out;
    }
    out.map = estimator->forward(input);
    BilinearWarp warp;
    out.pred = head.forward(warp.forward(input, out.map));
    return out;
}

// ---- checkpoints -----------------------------------------------------------------

// One QCGR per parameter tensor (single channel, square, zero padded) plus a
// text manifest `name b c h w file`. Values narrow to float32 on disk.
void save_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor*>>& named) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ostringstream man;
    for (size_t i = 0; i < named.size(); ++i) {
        const Tensor* t = named[i].second;
        char file[32];
        std::snprintf(file, sizeof file, "p%04zu.qcgr", i);
        int side = 8;
        while (static_cast<size_t>(side) * side < t->val.size()) ++side;
        FeatureGrid g(side, 1);
        std::copy(t->val.begin(), t->val.end(), g.data.begin());
        save_qcgr(g, dir + "/" + file);
        man << named[i].first << ' ' << t->b << ' ' << t->c << ' ' << t->h << ' ' << t->w
            << ' ' << file << '\n';
    }
    const std::string path = dir + "/manifest.txt";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
        out << man.str();
    }
    fs::rename(tmp, path);
}

void load_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor*>>& named) {
    std::ifstream in(dir + "/manifest.txt");
    if (!in) throw std::runtime_error("checkpoint: cannot open " + dir + "/manifest.txt");
    struct Entry {
        int b, c, h, w;
        std::string file;
    };
    std::map<std::string, Entry> entries;
    std::string name;
    Entry e;
    while (in >> name >> e.b >> e.c >> e.h >> e.w >> e.file) entries[name] = e;
    for (const auto& [want, tensor] : named) {
        auto it = entries.find(want);
        if (it == entries.end())
            throw std::runtime_error("checkpoint: missing parameter " + want);
        const Entry& ent = it->second;
        if (ent.b != tensor->b || ent.c != tensor->c || ent.h != tensor->h || ent.w != tensor->w)
            throw std::runtime_error("checkpoint: shape mismatch for " + want);
        FeatureGrid g = load_qcgr(dir + "/" + ent.file);
        if (g.data.size() < tensor->val.size())
            throw std::runtime_error("checkpoint: payload too small for " + want);
        std::copy(g.data.begin(), g.data.begin() + tensor->val.size(), tensor->val.begin());
    }
}

}  // namespace qcsurf::nn
