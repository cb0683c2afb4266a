// nn.hpp — minimal differentiable-operator stack with manual backprop:
// tensors, conv/pool/upsample/linear layers, bilinear warp, map losses,
// the U-shaped mapping estimator, task heads, and the training loop.
//
// Every operator keeps the caches its backward pass needs; a model instance
// is therefore single-threaded with respect to forward/backward state.
// All arithmetic is double precision and loop order is fixed, so identical
// seeds give bit-identical runs.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qcsurf/lattice.hpp"
#include "qcsurf/qc.hpp"

namespace qcsurf::nn {

struct Tensor {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<double> val, grad;

    Tensor() = default;
    Tensor(int b_, int c_, int h_, int w_)
        : b(b_), c(c_), h(h_), w(w_),
          val(static_cast<size_t>(b_) * c_ * h_ * w_, 0.0),
          grad(static_cast<size_t>(b_) * c_ * h_ * w_, 0.0) {}

    size_t count() const { return val.size(); }
    size_t index(int bi, int ci, int yi, int xi) const {
        return ((static_cast<size_t>(bi) * c + ci) * h + yi) * w + xi;
    }
    double& at(int bi, int ci, int yi, int xi) { return val[index(bi, ci, yi, xi)]; }
    double at(int bi, int ci, int yi, int xi) const { return val[index(bi, ci, yi, xi)]; }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using Rng = std::mt19937_64;

// ---- layers -------------------------------------------------------------

struct Conv2D {
    int cin = 0, cout = 0, k = 3, pad = 1;
    Tensor W;     // (cout, cin, k, k)
    Tensor bias;  // (cout, 1, 1, 1)
    Tensor in_cache;

    Conv2D() = default;
    Conv2D(int cin_, int cout_, int k_, int pad_);
    void init_he(Rng& rng);
    void init_zero();
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);  // accumulates W/bias grads, returns dx
};

struct ReLU {
    std::vector<char> mask;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);
};

struct Sigmoid {
    std::vector<double> out_cache;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);
};

struct MaxPool2 {
    int in_h = 0, in_w = 0;
    std::vector<int> argmax;
    Tensor forward(const Tensor& x);  // requires even h, w
    Tensor backward(const Tensor& dout);
};

struct UpsampleNearest2 {
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);
};

struct Linear {
    int fin = 0, fout = 0;
    Tensor W;     // (fout, fin, 1, 1)
    Tensor bias;  // (fout, 1, 1, 1)
    Tensor in_cache;

    Linear() = default;
    Linear(int fin_, int fout_);
    void init_he(Rng& rng);
    Tensor forward(const Tensor& x);  // x viewed as (b, fin)
    Tensor backward(const Tensor& dout);
};

Tensor flatten(Tensor x);             // (b,c,h,w) -> (b, c*h*w, 1, 1)
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, Tensor& da, Tensor& db);

// ---- warp and map losses ------------------------------------------------

// out(x) = features sampled at map(x); map channels are (u, v) in [0,1]²
// (clamped). Exact lattice hits pass values through bitwise.
struct BilinearWarp {
    Tensor feat_cache, map_cache;
    Tensor forward(const Tensor& features, const Tensor& map);
    // Fills dfeatures/dmap (same shapes); either pointer may be null.
    void backward(const Tensor& dout, Tensor* dfeatures, Tensor* dmap);
};

struct MapLossValue {
    double value = 0;                  // batch mean
    std::vector<double> per_sample;    // per-sample loss
    std::vector<double> max_abs_mu;    // loss_bc only
};

// Differentiable RMS of |μ| over the lattice (μ from the same FD stencils as
// qc::beltrami_from_map; degenerate f_z nodes contribute 0 with zero
// gradient). `scale` premultiplies the gradient added into map.grad.
MapLossValue loss_bc(Tensor& map, double scale);
// Differentiable version of qc::laplacian_energy.
MapLossValue loss_lap(Tensor& map, double scale);

// ---- task losses ---------------------------------------------------------

// Mean cross-entropy; fills logits.grad with d(mean CE)/dlogits.
double softmax_cross_entropy(Tensor& logits, const std::vector<int>& labels);
std::vector<int> argmax_rows(const Tensor& logits);
// Mean squared error over all elements; fills pred.grad scaled by `scale`.
double mse_loss(Tensor& pred, const std::vector<double>& target, double scale);

// ---- estimator -----------------------------------------------------------

struct EstimatorConfig {
    int depth = 2;          // downsampling stages, 1..4
    int base_channels = 16; // channels at the first stage
    int in_channels = 3;    // texture + two curvature channels
};

struct DoubleConv {
    Conv2D c1, c2;
    ReLU r1, r2;
    DoubleConv() = default;
    DoubleConv(int cin, int cout);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);
    void collect(std::vector<Tensor*>& out);
};

// U-shaped encoder/decoder with skip concatenation; final 1×1 projection.
struct UNet {
    int depth = 0;
    std::vector<DoubleConv> enc;
    std::vector<MaxPool2> pool;
    DoubleConv bottleneck;
    std::vector<UpsampleNearest2> up;
    std::vector<DoubleConv> dec;
    Conv2D final1x1;
    std::vector<Tensor> skip_cache;

    UNet() = default;
    UNet(int in_ch, int out_ch, int depth_, int base, Rng& rng, bool zero_final);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dout);
    void collect(std::vector<Tensor*>& out);
};

// Mapping estimator: U-Net displacement plus the identity lattice. With the
// final layer zero-initialized the output starts as the exact identity map.
struct QCE {
    EstimatorConfig cfg;
    UNet net;
    QCE(const EstimatorConfig& cfg_, Rng& rng);
    Tensor forward(const Tensor& x);     // -> (b, 2, n, n) absolute coords
    Tensor backward(const Tensor& dmap); // -> dx
    std::vector<Tensor*> params();
    size_t param_count();
};

Tensor identity_map_tensor(int batch, int n);
GridMap map_from_tensor(const Tensor& map, int bi);

// ---- heads ----------------------------------------------------------------

struct Head {
    virtual ~Head() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dout) = 0;
    virtual void collect(std::vector<Tensor*>& out) = 0;
    std::vector<Tensor*> params();
    size_t param_count();
};

// conv3×3 → relu → pool2 → fully-connected logits.
struct ClassifierSmall : Head {
    Conv2D conv;
    ReLU relu;
    MaxPool2 pool;
    Linear fc;
    ClassifierSmall(int in_ch, int n, int n_classes, int conv_channels, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dout) override;
    void collect(std::vector<Tensor*>& out) override;
};

// two conv/pool stages, three fully-connected layers.
struct ClassifierWide : Head {
    Conv2D conv1, conv2;
    ReLU r1, r2, r3, r4;
    MaxPool2 pool1, pool2;
    Linear fc1, fc2, fc3;
    ClassifierWide(int in_ch, int n, int n_classes, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dout) override;
    void collect(std::vector<Tensor*>& out) override;
};

// U-Net with three downsampling stages and a sigmoid mask output.
struct Segmenter : Head {
    UNet net;
    Sigmoid sig;
    Segmenter(int in_ch, int base, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dout) override;
    void collect(std::vector<Tensor*>& out) override;
};

// ---- training --------------------------------------------------------------

enum class TaskKind { Classify, Segment };

struct LossWeights {
    double task = 1.0;
    double bc = 0.01;
    double lap = 1e-4;
};

struct Schedule {
    int head_epochs = 50;  // phase A: head only
    int period = 10;       // phase B: alternate estimator/head every period
    int total_epochs = 100;
};

struct Sample {
    std::vector<double> input;  // channels * n * n
    int label = -1;
    std::vector<double> mask;   // n * n, segmentation only
};

struct Dataset {
    int channels = 0, resolution = 0, n_classes = 0;
    std::vector<Sample> samples;
};

struct EpochLog {
    int epoch = 0;
    double l_task = 0, l_bc = 0, l_lap = 0, l_total = 0;
    double metric = 0;  // train accuracy or train Dice
    double max_mu = 0;  // max over samples of max|μ| of the epoch's maps
};

struct TrainOptions {
    double lr = 1e-5;
    // Estimator steps use their own rate when >= 0: gradients reaching the
    // map are amplified by the lattice scale (roughly N-1 per unit of map
    // displacement), so the estimator usually needs a much smaller step than
    // the head to stay in the bijective regime.
    double est_lr = -1;
    int batch = 64;
    uint64_t seed = 0;
    std::function<void(const EpochLog&)> on_epoch;  // optional progress hook

    double estimator_lr() const { return est_lr >= 0 ? est_lr : lr; }
};

struct TrainResult {
    std::vector<EpochLog> log;
};

// Optimizes λ_task·L_task + λ_bc·L_bc + λ_lap·L_lap with plain SGD.
// Phase A trains the head only; phase B alternates estimator/head blocks of
// `period` epochs, estimator first. A null estimator trains the head on the
// unwarped input every epoch (the frozen-identity baseline). Throws on
// non-finite loss.
TrainResult train(QCE* estimator, Head& head, const Dataset& data, TaskKind task,
                  const Schedule& schedule, const LossWeights& weights,
                  const TrainOptions& opts);

// Forward pass at evaluation time; map is the identity when estimator is
// null. Returns predictions for the batch and per-sample maps.
struct EvalBatch {
    Tensor pred;
    Tensor map;
};
EvalBatch qccnn_forward(QCE* estimator, Head& head, const Tensor& input);

// Checkpoints: one QCGR per parameter plus a text manifest (name shape file).
void save_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor*>>& named);
void load_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor*>>& named);

}  // namespace qcsurf::nn
