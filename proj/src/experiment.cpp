#include "qcsurf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qcsurf {

void ExperimentConfig::validate() const {
    if (task != "classify-simple" && task != "classify-complex" && task != "segment")
        throw std::runtime_error("config: unknown task '" + task + "'");
    if (model != "qccnn" && model != "ccnn")
        throw std::runtime_error("config: model must be qccnn or ccnn");
    if (n_train < 1 || n_test < 1) throw std::runtime_error("config: need positive sample counts");
    if (depth < 1 || depth > 4) throw std::runtime_error("config: depth must be in 1..4");
    if (resolution < 8 || resolution % (1 << std::max(depth, 2)) != 0)
        throw std::runtime_error("config: resolution must be divisible by 2^depth (and by 4)");
    if (lambda_task < 0 || lambda_bc < 0 || lambda_lap < 0)
        throw std::runtime_error("config: loss weights must be nonnegative");
    if (lr <= 0 || est_lr < 0 || batch < 1)
        throw std::runtime_error("config: bad lr or batch");
    if (schedule.head_epochs < 0 || schedule.period < 1 ||
        schedule.total_epochs < schedule.head_epochs)
        throw std::runtime_error("config: bad schedule");
    if (base_channels < 1) throw std::runtime_error("config: base_channels must be positive");
}

ExperimentConfig experiment_from(const Config& cfg) {
    static const std::set<std::string> known = {
        "task",       "train_samples", "test_samples", "data_seed",    "seed",
        "resolution", "depth",         "base_channels", "lambda_task", "lambda_bc",
        "lambda_lap", "head_epochs",   "period",        "total_epochs", "lr",
        "est_lr",
        "batch",      "model",         "out",           "data_dir"};
    for (const auto& [key, value] : cfg.values)
        if (!known.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");

    ExperimentConfig e;
    e.task = cfg.get("task", e.task);
    e.n_train = cfg.get_int("train_samples", e.n_train);
    e.n_test = cfg.get_int("test_samples", e.n_test);
    e.data_seed = cfg.get_u64("data_seed", e.data_seed);
    e.seed = cfg.get_u64("seed", e.seed);
    e.resolution = cfg.get_int("resolution", e.resolution);
    e.depth = cfg.get_int("depth", e.depth);
    e.base_channels = cfg.get_int("base_channels", e.base_channels);
    e.lambda_task = cfg.get_double("lambda_task", e.lambda_task);
    e.lambda_bc = cfg.get_double("lambda_bc", e.lambda_bc);
    e.lambda_lap = cfg.get_double("lambda_lap", e.lambda_lap);
    e.schedule.head_epochs = cfg.get_int("head_epochs", e.schedule.head_epochs);
    e.schedule.period = cfg.get_int("period", e.schedule.period);
    e.schedule.total_epochs = cfg.get_int("total_epochs", e.schedule.total_epochs);
    e.lr = cfg.get_double("lr", e.lr);
    e.est_lr = cfg.get_double("est_lr", e.est_lr);
    e.batch = cfg.get_int("batch", e.batch);
    e.model = cfg.get("model", e.model);
    e.out_dir = cfg.get("out", e.out_dir);
    e.data_dir = cfg.get("data_dir", e.data_dir);
    e.validate();
    return e;
}

Standardizer fit_standardizer(const nn::Dataset& train) {
    const size_t plane = static_cast<size_t>(train.resolution) * train.resolution;
    Standardizer s;
    s.mean.assign(train.channels, 0.0);
    s.stdev.assign(train.channels, 0.0);
    const double count = static_cast<double>(train.samples.size()) * plane;
    for (const nn::Sample& sm : train.samples)
        for (int c = 0; c < train.channels; ++c)
            for (size_t i = 0; i < plane; ++i) s.mean[c] += sm.input[c * plane + i];
    for (int c = 0; c < train.channels; ++c) s.mean[c] /= count;
    for (const nn::Sample& sm : train.samples)
        for (int c = 0; c < train.channels; ++c)
            for (size_t i = 0; i < plane; ++i) {
                double d = sm.input[c * plane + i] - s.mean[c];
                s.stdev[c] += d * d;
            }
    for (int c = 0; c < train.channels; ++c)
        s.stdev[c] = std::max(std::sqrt(s.stdev[c] / count), 1e-12);
    return s;
}

void standardize(nn::Dataset& ds, const Standardizer& s) {
    const size_t plane = static_cast<size_t>(ds.resolution) * ds.resolution;
    for (nn::Sample& sm : ds.samples)
        for (int c = 0; c < ds.channels; ++c)
            for (size_t i = 0; i < plane; ++i) {
                double v = (sm.input[c * plane + i] - s.mean[c]) / s.stdev[c];
                sm.input[c * plane + i] = std::min(5.0, std::max(-5.0, v));
            }
}

namespace {

// Input tensor channels for one sample: texture through the flattening plus
// the two curvature grids shared by every sample on the same surface.
std::vector<double> pack_input(const FeatureGrid& tex, const FeatureGrid& gauss,
                               const FeatureGrid& mean) {
    std::vector<double> input;
    input.reserve(tex.data.size() * 3);
    input.insert(input.end(), tex.data.begin(), tex.data.end());
    input.insert(input.end(), gauss.data.begin(), gauss.data.end());
    input.insert(input.end(), mean.data.begin(), mean.data.end());
    return input;
}

nn::Dataset build_digit_split(const TriangleMesh& mesh, const RasterTable& table,
                              const FeatureGrid& kgrid, const FeatureGrid& hgrid,
                              const data::IdxImages& images,
                              const std::vector<unsigned char>& labels, int count, int N) {
    if (images.count < count || static_cast<int>(labels.size()) < count)
        throw std::runtime_error("experiment: digit corpus smaller than requested split");
    nn::Dataset ds;
    ds.channels = 3;
    ds.resolution = N;
    ds.n_classes = 10;
    ds.samples.resize(count);
    for (int i = 0; i < count; ++i) {
        SurfaceFunction tex =
            data::digit_texture(mesh, images.image(i), images.rows, images.cols);
        FeatureGrid grid = rasterize_with_table(table, mesh, tex);
        ds.samples[i].input = pack_input(grid, kgrid, hgrid);
        ds.samples[i].label = labels[i];
    }
    return ds;
}

nn::Dataset build_lesion_split(const std::vector<data::LesionSample>& samples, int N) {
    nn::Dataset ds;
    ds.channels = 3;
    ds.resolution = N;
    ds.n_classes = 2;
    ds.samples.resize(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const data::LesionSample& ls = samples[i];
        UVMap uv = conformal_parameterize(ls.mesh);
        RasterTable table = build_raster_table(ls.mesh, uv, N);
        FeatureGrid tex = rasterize_with_table(table, ls.mesh, ls.texture);
        FeatureGrid kgrid = rasterize_with_table(table, ls.mesh, gaussian_curvature(ls.mesh));
        FeatureGrid hgrid = rasterize_with_table(table, ls.mesh, mean_curvature(ls.mesh));
        FeatureGrid mgrid = rasterize_with_table(table, ls.mesh, ls.mask);
        ds.samples[i].input = pack_input(tex, kgrid, hgrid);
        ds.samples[i].label = -1;
        ds.samples[i].mask.resize(mgrid.data.size());
        for (size_t j = 0; j < mgrid.data.size(); ++j)
            ds.samples[i].mask[j] = mgrid.data[j] > 0.5 ? 1.0 : 0.0;
    }
    return ds;
}

}  // namespace

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentData out;
    const int N = cfg.resolution;
    if (cfg.classification()) {
        data::SurfaceSpec spec;
        spec.kind = cfg.task == "classify-simple" ? data::SurfaceSpec::Kind::Simple
                                                  : data::SurfaceSpec::Kind::Complex;
        spec.seed = cfg.data_seed;
        out.mesh = spec.kind == data::SurfaceSpec::Kind::Simple
                       ? data::gen_simple_surface(spec)
                       : data::gen_complex_surface(spec);
        out.uv = conformal_parameterize(out.mesh);
        RasterTable table = build_raster_table(out.mesh, out.uv, N);
        FeatureGrid kgrid = rasterize_with_table(table, out.mesh, gaussian_curvature(out.mesh));
        FeatureGrid hgrid = rasterize_with_table(table, out.mesh, mean_curvature(out.mesh));

        data::DigitCorpusPaths corpus = data::ensure_digit_corpus(cfg.data_dir);
        data::IdxImages train_images = data::load_idx_images(corpus.train_images);
        std::vector<unsigned char> train_labels = data::load_idx_labels(corpus.train_labels);
        data::IdxImages test_images = data::load_idx_images(corpus.test_images);
        std::vector<unsigned char> test_labels = data::load_idx_labels(corpus.test_labels);

        out.train = build_digit_split(out.mesh, table, kgrid, hgrid, train_images, train_labels,
                                      cfg.n_train, N);
        out.test = build_digit_split(out.mesh, table, kgrid, hgrid, test_images, test_labels,
                                     cfg.n_test, N);
    } else {
        std::vector<data::LesionSample> train = data::gen_lesion_dataset(cfg.n_train, cfg.data_seed);
        std::vector<data::LesionSample> test =
            data::gen_lesion_dataset(cfg.n_test, cfg.data_seed + 1);
        out.train = build_lesion_split(train, N);
        out.test = build_lesion_split(test, N);
    }
    out.scaler = fit_standardizer(out.train);
    standardize(out.train, out.scaler);
    standardize(out.test, out.scaler);
    return out;
}

std::vector<std::pair<std::string, nn::Tensor*>> Model::named_params() {
    std::vector<std::pair<std::string, nn::Tensor*>> out;
    if (estimator) {
        std::vector<nn::Tensor*> ps = estimator->params();
        for (size_t i = 0; i < ps.size(); ++i)
            out.emplace_back("est.p" + std::to_string(i), ps[i]);
    }
    std::vector<nn::Tensor*> ps = head->params();
    for (size_t i = 0; i < ps.size(); ++i)
        out.emplace_back("head.p" + std::to_string(i), ps[i]);
    return out;
}

size_t Model::estimator_param_count() const {
    return estimator ? estimator->param_count() : 0;
}

Model build_model(const ExperimentConfig& cfg, int n_classes) {
    Model m;
    m.n_classes = n_classes;
    nn::Rng rng(cfg.seed);
    if (cfg.model == "qccnn") {
        nn::EstimatorConfig ec;
        ec.depth = cfg.depth;
        ec.base_channels = cfg.base_channels;
        ec.in_channels = 3;
        m.estimator = std::make_unique<nn::QCE>(ec, rng);
    }
    // Digit tasks use the single-conv head; its low capacity is what makes the
    // learned warp earn its keep, since a fixed chart distortion would
    // otherwise be absorbed by a larger stack.
    if (cfg.classification())
        m.head = std::make_unique<nn::ClassifierSmall>(3, cfg.resolution, n_classes, 8, rng);
    else
        m.head = std::make_unique<nn::Segmenter>(3, cfg.base_channels, rng);
    return m;
}

nn::TrainResult run_training(Model& model, const ExperimentData& data,
                             const ExperimentConfig& cfg) {
    nn::LossWeights w;
    w.task = cfg.lambda_task;
    w.bc = cfg.lambda_bc;
    w.lap = cfg.lambda_lap;
    nn::TrainOptions opts;
    opts.lr = cfg.lr;
    opts.est_lr = cfg.est_lr;
    opts.batch = cfg.batch;
    opts.seed = cfg.seed;
    return nn::train(model.estimator.get(), *model.head, data.train, cfg.kind(), cfg.schedule, w,
                     opts);
}

EvalResult evaluate(Model& model, const nn::Dataset& test, nn::TaskKind kind, int batch) {
    const int total = static_cast<int>(test.samples.size());
    if (total == 0) throw std::runtime_error("evaluate: empty test set");
    const int n = test.resolution;
    const size_t plane = static_cast<size_t>(n) * n;
    const size_t in_count = static_cast<size_t>(test.channels) * plane;

    EvalResult r;
    std::vector<int> truth;
    std::vector<double> soft, truth_soft;
    std::vector<GridMap> maps;

    for (int start = 0; start < total; start += batch) {
        const int b = std::min(batch, total - start);
        nn::Tensor x(b, test.channels, n, n);
        for (int k = 0; k < b; ++k)
            std::copy(test.samples[start + k].input.begin(), test.samples[start + k].input.end(),
                      x.val.begin() + k * in_count);
        nn::EvalBatch eb = nn::qccnn_forward(model.estimator.get(), *model.head, x);
        if (kind == nn::TaskKind::Classify) {
            std::vector<int> am = nn::argmax_rows(eb.pred);
            for (int k = 0; k < b; ++k) {
                r.predictions.push_back(am[k]);
                truth.push_back(test.samples[start + k].label);
            }
        } else {
            soft.insert(soft.end(), eb.pred.val.begin(), eb.pred.val.end());
            for (int k = 0; k < b; ++k)
                truth_soft.insert(truth_soft.end(), test.samples[start + k].mask.begin(),
                                  test.samples[start + k].mask.end());
        }
        if (model.estimator)
            for (int k = 0; k < b; ++k) maps.push_back(nn::map_from_tensor(eb.map, k));
    }

    if (kind == nn::TaskKind::Classify) {
        r.cls = classification_metrics(r.predictions, truth, model.n_classes);
        r.headline = r.cls.accuracy;
    } else {
        r.seg = segmentation_metrics(soft, truth_soft, n, total);
        r.headline = r.seg.dice;
    }
    if (model.estimator) r.maps = map_statistics(maps);
    return r;
}

// ---- artifacts ---------------------------------------------------------------

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void atomic_write(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("artifact: cannot write " + tmp);
        out << body;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_epoch_log_csv(const std::string& path, const std::vector<nn::EpochLog>& log) {
    std::ostringstream body;
    body << "epoch,l_task,l_bc,l_lap,metric,max_mu\n";
    for (const nn::EpochLog& e : log)
        body << e.epoch << ',' << fmt17(e.l_task) << ',' << fmt17(e.l_bc) << ',' << fmt17(e.l_lap)
             << ',' << fmt17(e.metric) << ',' << fmt17(e.max_mu)
             << '\n';
    atomic_write(path, body.str());
}

void write_metrics_csv(const std::string& path, const EvalResult& result, nn::TaskKind kind) {
    std::ostringstream body;
    if (kind == nn::TaskKind::Classify) {
        body << "accuracy,sensitivity,precision,npv,specificity,max_mu_max,max_mu_mean,"
                "map_violations,map_count\n";
        body << fmt17(result.cls.accuracy) << ',' << fmt17(result.cls.sensitivity) << ','
             << fmt17(result.cls.precision) << ',' << fmt17(result.cls.npv) << ','
             << fmt17(result.cls.specificity) << ',';
    } else {
        body << "mse,dice,iou,sensitivity,hd95,max_mu_max,max_mu_mean,"
                "map_violations,map_count\n";
        body << fmt17(result.seg.mse) << ',' << fmt17(result.seg.dice) << ','
             << fmt17(result.seg.iou) << ',' << fmt17(result.seg.sensitivity) << ','
             << fmt17(result.seg.hd95) << ',';
    }
    body << fmt17(result.maps.max_mu_max) << ',' << fmt17(result.maps.max_mu_mean) << ','
         << result.maps.violations << ',' << result.maps.count << '\n';
    atomic_write(path, body.str());
}

void append_manifest(const std::string& out_dir, const std::string& artifact,
                     uint64_t cfg_hash, uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/MANIFEST.txt", std::ios::app);
    if (!out) throw std::runtime_error("artifact: cannot append manifest in " + out_dir);
    char line[512];
    std::snprintf(line, sizeof line, "%s  config=%016llx  seed=%llu\n", artifact.c_str(),
                  static_cast<unsigned long long>(cfg_hash),
                  static_cast<unsigned long long>(seed));
    out << line;
}

}  // namespace qcsurf
