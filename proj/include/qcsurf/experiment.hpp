// experiment.hpp — end-to-end experiment plumbing: typed experiment
// configuration, dataset construction (digits on one shared surface, or
// per-sample lesion surfaces), model assembly, training, and evaluation.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qcsurf/config.hpp"
#include "qcsurf/data.hpp"
#include "qcsurf/metrics.hpp"
#include "qcsurf/nn.hpp"
#include "qcsurf/param.hpp"

namespace qcsurf {

struct ExperimentConfig {
    std::string task = "classify-simple";  // classify-simple | classify-complex | segment
    int n_train = 2000, n_test = 500;
    uint64_t data_seed = 1;
    uint64_t seed = 1;  // model init, shuffling
    int resolution = 64;
    int depth = 2;
    int base_channels = 8;
    double lambda_task = 1.0, lambda_bc = 0.01, lambda_lap = 1e-4;
    nn::Schedule schedule;  // head-only epochs, alternation period, total
    double lr = 1e-3;
    double est_lr = 1e-5;  // estimator step size; map gradients carry a lattice-scale factor
    int batch = 64;
    std::string model = "qccnn";  // qccnn | ccnn
    std::string out_dir = "out";
    std::string data_dir = "data";

    bool classification() const { return task != "segment"; }
    nn::TaskKind kind() const {
        return classification() ? nn::TaskKind::Classify : nn::TaskKind::Segment;
    }
    void validate() const;
};

// Reads the `key = value` form; unknown keys are rejected so typos fail loud.
ExperimentConfig experiment_from(const Config& cfg);

// Per-channel affine normalization fitted on the training set; application
// clamps to ±5 standard deviations.
struct Standardizer {
    std::vector<double> mean, stdev;
};
Standardizer fit_standardizer(const nn::Dataset& train);
void standardize(nn::Dataset& ds, const Standardizer& s);

struct ExperimentData {
    nn::Dataset train, test;
    TriangleMesh mesh;  // classification: the one shared surface
    UVMap uv;
    Standardizer scaler;
};

// Builds (and standardizes) train/test sets for the configured task. Input
// channels: texture, Gaussian curvature, mean curvature, each rasterized
// through the conformal flattening.
ExperimentData build_experiment_data(const ExperimentConfig& cfg);

struct Model {
    std::unique_ptr<nn::QCE> estimator;  // null for the frozen-identity baseline
    std::unique_ptr<nn::Head> head;
    int n_classes = 0;

    std::vector<std::pair<std::string, nn::Tensor*>> named_params();
    size_t estimator_param_count() const;
};

Model build_model(const ExperimentConfig& cfg, int n_classes);

nn::TrainResult run_training(Model& model, const ExperimentData& data,
                             const ExperimentConfig& cfg);

struct EvalResult {
    ClassificationReport cls;
    SegmentationReport seg;
    MapStats maps;             // empty (count 0) for the identity baseline
    std::vector<int> predictions;
    double headline = 0;       // accuracy (classification) or Dice (segmentation)
};

EvalResult evaluate(Model& model, const nn::Dataset& test, nn::TaskKind kind,
                    int batch = 64);

// ---- artifacts ---------------------------------------------------------------

void write_epoch_log_csv(const std::string& path, const std::vector<nn::EpochLog>& log);
void write_metrics_csv(const std::string& path, const EvalResult& result, nn::TaskKind kind);
// One line per artifact: path, config hash, seed.
void append_manifest(const std::string& out_dir, const std::string& artifact,
                     uint64_t cfg_hash, uint64_t seed);

}  // namespace qcsurf
