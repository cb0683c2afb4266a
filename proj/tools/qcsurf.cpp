// qcsurf — command-line frontend. Every command is a deterministic function
// of (config file + flag overrides); artifacts land in the configured output
// directory with a manifest line recording the config hash and seed.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qcsurf/conv.hpp"
#include "qcsurf/experiment.hpp"
#include "qcsurf/qcgr.hpp"

namespace {

using namespace qcsurf;

struct CommonFlags {
    std::string config_path, out, model, baseline;
    uint64_t seed = 0;
    int resolution = 0, depth = 0;
    double lambda_bc = 0, est_lr = 0;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config_path, "config file, `key = value` lines");
    sub->add_option("--seed", f.seed, "override model/shuffle seed");
    sub->add_option("--out", f.out, "override output directory");
    sub->add_option("--model", f.model, "qccnn | ccnn")
        ->check(CLI::IsMember({"qccnn", "ccnn"}));
    sub->add_option("--resolution", f.resolution, "override lattice resolution");
    sub->add_option("--lambda-bc", f.lambda_bc, "override the conformality loss weight");
    sub->add_option("--depth", f.depth, "override estimator downsampling depth");
    sub->add_option("--est-lr", f.est_lr, "override the estimator learning rate");
}

bool flag_given(CLI::App* sub, const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt && opt->count() > 0;
}

Config build_config(CLI::App* sub, const CommonFlags& f) {
    Config cfg = f.config_path.empty() ? Config{} : load_config(f.config_path);
    if (flag_given(sub, "--seed")) cfg.set("seed", std::to_string(f.seed));
    if (flag_given(sub, "--out")) cfg.set("out", f.out);
    if (flag_given(sub, "--model")) cfg.set("model", f.model);
    if (flag_given(sub, "--baseline")) cfg.set("model", f.baseline);
    if (flag_given(sub, "--resolution")) cfg.set("resolution", std::to_string(f.resolution));
    if (flag_given(sub, "--depth")) cfg.set("depth", std::to_string(f.depth));
    if (flag_given(sub, "--lambda-bc")) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", f.lambda_bc);
        cfg.set("lambda_bc", buf);
    }
    if (flag_given(sub, "--est-lr")) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", f.est_lr);
        cfg.set("est_lr", buf);
    }
    return cfg;
}

// The inspection commands work on the surface the configured task would use.
TriangleMesh task_surface(const ExperimentConfig& e) {
    if (e.task == "segment") return data::gen_lesion_sample(e.data_seed).mesh;
    data::SurfaceSpec spec;
    spec.kind = e.task == "classify-simple" ? data::SurfaceSpec::Kind::Simple
                                            : data::SurfaceSpec::Kind::Complex;
    spec.seed = e.data_seed;
    return spec.kind == data::SurfaceSpec::Kind::Simple ? data::gen_simple_surface(spec)
                                                        : data::gen_complex_surface(spec);
}

SurfaceFunction two_channel_curvature(const TriangleMesh& mesh) {
    SurfaceFunction gauss = gaussian_curvature(mesh);
    SurfaceFunction mean = mean_curvature(mesh);
    SurfaceFunction both(mesh, 2);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        both.at(0, v) = gauss.at(0, v);
        both.at(1, v) = mean.at(0, v);
    }
    return both;
}

FeatureGrid grid_from_plane(const std::vector<double>& vals, int n) {
    FeatureGrid g(n, 1);
    std::copy(vals.begin(), vals.begin() + static_cast<size_t>(n) * n, g.data.begin());
    return g;
}

int cmd_gen(const Config& cfg) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    TriangleMesh mesh = task_surface(e);
    double zmin = 1e300, zmax = -1e300;
    for (const auto& v : mesh.vertices) {
        zmin = std::min(zmin, v.z());
        zmax = std::max(zmax, v.z());
    }
    if (e.task == "segment") {
        data::LesionSample sample = data::gen_lesion_sample(e.data_seed);
        sample.mesh.channels["texture"] = sample.texture.values;
        sample.mesh.channels["mask"] = sample.mask.values;
        save_obj(sample.mesh, e.out_dir + "/surface.obj");
        save_channels_csv(sample.mesh, e.out_dir + "/surface_channels.csv");
        append_manifest(e.out_dir, "surface_channels.csv", config_hash(cfg), e.data_seed);
    } else {
        save_obj(mesh, e.out_dir + "/surface.obj");
    }
    append_manifest(e.out_dir, "surface.obj", config_hash(cfg), e.data_seed);
    std::printf("surface: %d vertices, %d faces, z in [%.6f, %.6f]\n", mesh.vertex_count(),
                mesh.face_count(), zmin, zmax);
    return 0;
}

int cmd_param(const Config& cfg) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    TriangleMesh mesh = task_surface(e);
    UVMap uv = conformal_parameterize(mesh);
    uv.validate();
    save_obj(mesh, e.out_dir + "/flattened.obj", &uv.uv);
    FeatureGrid pullback = rasterize_pullback(mesh, uv, two_channel_curvature(mesh), e.resolution);
    save_qcgr(pullback, e.out_dir + "/pullback.qcgr");
    save_pgm(pullback, 0, e.out_dir + "/pullback.pgm");
    append_manifest(e.out_dir, "flattened.obj", config_hash(cfg), e.data_seed);
    append_manifest(e.out_dir, "pullback.qcgr", config_hash(cfg), e.data_seed);
    size_t covered = 0;
    for (unsigned char m : pullback.mask) covered += m;
    std::printf("flattening: corners v%d v%d v%d v%d, %zu/%zu lattice nodes covered\n",
                uv.corner_indices[0], uv.corner_indices[1], uv.corner_indices[2],
                uv.corner_indices[3], covered, pullback.mask.size());
    return 0;
}

int cmd_mu(const Config& cfg, const std::string& map_path) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    GridMap map = map_path.empty() ? GridMap::identity(e.resolution)
                                   : map_from_grid(load_qcgr(map_path));
    BeltramiField mu = beltrami_from_map(map);
    save_qcgr(grid_from_beltrami(mu), e.out_dir + "/mu.qcgr");
    append_manifest(e.out_dir, "mu.qcgr", config_hash(cfg), e.seed);
    BijectivityReport rep = certify_bijective(map);
    std::printf("max|mu| = %.6g, min Jacobian = %.6g, %s\n", rep.max_mu, rep.min_jacobian,
                rep.certified ? "certified bijective" : "NOT certified");
    if (rep.mu_bounded) std::printf("dilation K = %.6g\n", dilation(mu));
    return 0;
}

int cmd_conv(const Config& cfg, const std::string& map_path, int kernel_size) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    TriangleMesh mesh = task_surface(e);
    UVMap uv = conformal_parameterize(mesh);

    SurfaceFunction h(mesh, 1);
    if (e.task == "segment") {
        h = data::gen_lesion_sample(e.data_seed).texture;
    } else {
        data::DigitCorpusPaths corpus = data::ensure_digit_corpus(e.data_dir);
        data::IdxImages imgs = data::load_idx_images(corpus.test_images);
        h = data::digit_texture(mesh, imgs.image(0), imgs.rows, imgs.cols);
    }

    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw std::runtime_error("conv: kernel size must be odd and positive");
    std::vector<double> w(static_cast<size_t>(kernel_size) * kernel_size);
    const int c0 = kernel_size / 2;
    double sum = 0;
    for (int b = 0; b < kernel_size; ++b)
        for (int a = 0; a < kernel_size; ++a) {
            double dx = a - c0, dy = b - c0;
            double sigma = std::max(1.0, kernel_size / 4.0);
            w[static_cast<size_t>(b) * kernel_size + a] =
                std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            sum += w[static_cast<size_t>(b) * kernel_size + a];
        }
    for (double& x : w) x /= sum;
    Kernel kernel(kernel_size, w);

    auto t0 = std::chrono::steady_clock::now();
    SurfaceFunction result(mesh, 1);
    if (map_path.empty()) {
        result = parametrized_conv(mesh, h, kernel, uv, e.resolution);
    } else {
        GridMap map = map_from_grid(load_qcgr(map_path));
        ConvContext ctx{&uv, &map, e.resolution};
        result = qc_conv(mesh, h, kernel, ctx);
    }
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    FeatureGrid out_grid = rasterize_pullback(mesh, uv, result, e.resolution);
    save_qcgr(out_grid, e.out_dir + "/conv.qcgr");
    save_pgm(out_grid, 0, e.out_dir + "/conv.pgm");
    append_manifest(e.out_dir, "conv.qcgr", config_hash(cfg), e.data_seed);
    std::printf("%s convolution, kernel %dx%d, %.3fs\n",
                map_path.empty() ? "parametrized" : "quasi-conformal", kernel_size, kernel_size,
                dt);
    return 0;
}

int cmd_train(const Config& cfg) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    std::printf("building %s data (%d train / %d test, N=%d)...\n", e.task.c_str(), e.n_train,
                e.n_test, e.resolution);
    ExperimentData data = build_experiment_data(e);
    Model model = build_model(e, data.train.n_classes);
    std::printf("model %s: estimator %zu params, head %zu params\n", e.model.c_str(),
                model.estimator_param_count(), model.head->param_count());

    nn::TrainResult result;
    {
        nn::LossWeights w;
        w.task = e.lambda_task;
        w.bc = e.lambda_bc;
        w.lap = e.lambda_lap;
        nn::TrainOptions opts;
        opts.lr = e.lr;
        opts.est_lr = e.est_lr;
        opts.batch = e.batch;
        opts.seed = e.seed;
        auto last = std::chrono::steady_clock::now();
        opts.on_epoch = [&last](const nn::EpochLog& l) {
            auto now = std::chrono::steady_clock::now();
            double secs = std::chrono::duration<double>(now - last).count();
            last = now;
            std::printf(
                "epoch %3d  task %.5f  bc %.5f  lap %.5f  metric %.4f  max|mu| %.3f  (%.1fs)\n",
                l.epoch, l.l_task, l.l_bc, l.l_lap, l.metric, l.max_mu, secs);
            std::fflush(stdout);
        };
        result = nn::train(model.estimator.get(), *model.head, data.train, e.kind(), e.schedule,
                           w, opts);
    }

    write_epoch_log_csv(e.out_dir + "/train_log.csv", result.log);
    save_checkpoint(e.out_dir + "/checkpoint", model.named_params());
    append_manifest(e.out_dir, "train_log.csv", config_hash(cfg), e.seed);
    append_manifest(e.out_dir, "checkpoint", config_hash(cfg), e.seed);
    if (!result.log.empty())
        std::printf("final train metric %.4f, log at %s/train_log.csv\n",
                    result.log.back().metric, e.out_dir.c_str());
    return 0;
}

int cmd_eval(const Config& cfg, std::string checkpoint) {
    ExperimentConfig e = experiment_from(cfg);
    std::filesystem::create_directories(e.out_dir);
    if (checkpoint.empty()) checkpoint = e.out_dir + "/checkpoint";
    ExperimentData data = build_experiment_data(e);
    Model model = build_model(e, data.train.n_classes);
    load_checkpoint(checkpoint, model.named_params());
    EvalResult result = evaluate(model, data.test, e.kind(), e.batch);

    write_metrics_csv(e.out_dir + "/metrics.csv", result, e.kind());
    append_manifest(e.out_dir, "metrics.csv", config_hash(cfg), e.seed);

    const int n = e.resolution;
    save_pgm(grid_from_plane(data.test.samples[0].input, n), 0, e.out_dir + "/eval_input0.pgm");
    if (e.kind() == nn::TaskKind::Segment) {
        nn::Tensor x(1, data.test.channels, n, n);
        std::copy(data.test.samples[0].input.begin(), data.test.samples[0].input.end(),
                  x.val.begin());
        nn::EvalBatch eb = nn::qccnn_forward(model.estimator.get(), *model.head, x);
        save_pgm(grid_from_plane(eb.pred.val, n), 0, e.out_dir + "/eval_pred0.pgm");
        save_pgm(grid_from_plane(data.test.samples[0].mask, n), 0, e.out_dir + "/eval_truth0.pgm");
        std::printf("dice %.4f  iou %.4f  mse %.5f  sens %.4f  hd95 %.3f\n", result.seg.dice,
                    result.seg.iou, result.seg.mse, result.seg.sensitivity, result.seg.hd95);
    } else {
        std::printf("accuracy %.4f  sens %.4f  prec %.4f  npv %.4f  spec %.4f\n",
                    result.cls.accuracy, result.cls.sensitivity, result.cls.precision,
                    result.cls.npv, result.cls.specificity);
    }
    if (model.estimator)
        std::printf("maps: %d evaluated, %d violations, max|mu| %.4f (mean %.4f)\n",
                    result.maps.count, result.maps.violations, result.maps.max_mu_max,
                    result.maps.max_mu_mean);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-conformal convolution on surfaces"};
    app.require_subcommand(1);

    CommonFlags fgen, fparam, fmu, fconv, ftrain, feval;
    std::string mu_map, conv_map, eval_checkpoint;
    int conv_kernel = 5;

    CLI::App* gen = app.add_subcommand("gen", "generate the configured surface");
    add_common(gen, fgen);
    CLI::App* param = app.add_subcommand("param", "conformally flatten and rasterize");
    add_common(param, fparam);
    CLI::App* mu = app.add_subcommand("mu", "Beltrami coefficient of a stored map");
    add_common(mu, fmu);
    mu->add_option("--map", mu_map, "QCGR file with map channels (u, v)");
    CLI::App* conv = app.add_subcommand("conv", "convolve a texture on the surface");
    add_common(conv, fconv);
    conv->add_option("--map", conv_map, "QCGR self-map for the warped variant");
    conv->add_option("--kernel-size", conv_kernel, "odd kernel size");
    CLI::App* train = app.add_subcommand("train", "train the configured model");
    add_common(train, ftrain);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval, feval);
    eval->add_option("--baseline", feval.baseline, "evaluate the frozen-identity baseline")
        ->check(CLI::IsMember({"qccnn", "ccnn"}));
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(build_config(gen, fgen));
        if (*param) return cmd_param(build_config(param, fparam));
        if (*mu) return cmd_mu(build_config(mu, fmu), mu_map);
        if (*conv) return cmd_conv(build_config(conv, fconv), conv_map, conv_kernel);
        if (*train) return cmd_train(build_config(train, ftrain));
        if (*eval) return cmd_eval(build_config(eval, feval), eval_checkpoint);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
