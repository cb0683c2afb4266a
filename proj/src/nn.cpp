#include "qcsurf/nn.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace qcsurf::nn {

namespace {

// Training churns through multi-hundred-MB buffers every batch; with default
// glibc settings those go through mmap/munmap each time and the kernel page
// traffic dominates wall time. Raising the thresholds keeps freed blocks on
// the heap free lists for reuse.
#if defined(__GLIBC__)
const bool g_alloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
}();
#endif

using MatrixXdC = Eigen::MatrixXd;  // column-major

void check_4d(const Tensor& t) {
    if (t.b < 1 || t.c < 1 || t.h < 1 || t.w < 1)
        throw std::runtime_error("tensor: empty dimension");
    if (t.val.size() != static_cast<size_t>(t.b) * t.c * t.h * t.w ||
        t.grad.size() != t.val.size())
        throw std::runtime_error("tensor: storage size mismatch");
}

// im2col for one batch sample of a stride-1 same convolution: column
// j = y*w + x holds the receptive field of output pixel (y, x), rows ordered
// (ci, dy, dx). Per-sample tiles keep the buffer cache-resident; a whole-batch
// matrix at training sizes runs to hundreds of MB and turns the following
// GEMM memory-bound.
void im2col_sample(const Tensor& x, int bi, int k, int pad, MatrixXdC& col) {
    const int rows = x.c * k * k;
    col.resize(rows, static_cast<Eigen::Index>(x.h) * x.w);
    for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
            Eigen::Index j = static_cast<Eigen::Index>(y) * x.w + xx;
            double* dst = col.data() + static_cast<size_t>(j) * rows;
            for (int ci = 0; ci < x.c; ++ci) {
                const double* plane = x.val.data() + (static_cast<size_t>(bi) * x.c + ci) * x.h * x.w;
                for (int dy = 0; dy < k; ++dy) {
                    int sy = y + dy - pad;
                    for (int dx = 0; dx < k; ++dx, ++dst) {
                        int sx = xx + dx - pad;
                        *dst = (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w)
                                   ? 0.0
                                   : plane[static_cast<size_t>(sy) * x.w + sx];
                    }
                }
            }
        }
}

// Transpose of im2col_sample: scatter-add columns back into one image sample.
void col2im_add_sample(const MatrixXdC& col, int bi, int k, int pad, Tensor& dx) {
    for (int y = 0; y < dx.h; ++y)
        for (int xx = 0; xx < dx.w; ++xx) {
            Eigen::Index j = static_cast<Eigen::Index>(y) * dx.w + xx;
            const double* src = col.data() + static_cast<size_t>(j) * col.rows();
            for (int ci = 0; ci < dx.c; ++ci) {
                double* plane = dx.grad.data() + (static_cast<size_t>(bi) * dx.c + ci) * dx.h * dx.w;
                for (int dy = 0; dy < k; ++dy) {
                    int sy = y + dy - pad;
                    for (int dx2 = 0; dx2 < k; ++dx2, ++src) {
                        int sx = xx + dx2 - pad;
                        if (sy < 0 || sy >= dx.h || sx < 0 || sx >= dx.w) continue;
                        plane[static_cast<size_t>(sy) * dx.w + sx] += *src;
                    }
                }
            }
        }
}

}  // namespace

// ---- Conv2D ---------------------------------------------------------------

Conv2D::Conv2D(int cin_, int cout_, int k_, int pad_)
    : cin(cin_), cout(cout_), k(k_), pad(pad_),
      W(cout_, cin_, k_, k_), bias(cout_, 1, 1, 1) {}

void Conv2D::init_he(Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * k * k)));
    for (auto& w : W.val) w = dist(rng);
    std::fill(bias.val.begin(), bias.val.end(), 0.0);
}

void Conv2D::init_zero() {
    std::fill(W.val.begin(), W.val.end(), 0.0);
    std::fill(bias.val.begin(), bias.val.end(), 0.0);
}

// Scratch matrices shared across calls: the im2col buffer alone reaches
// hundreds of MB at training batch sizes, and a fresh allocation per call
// turns into mmap/munmap round trips that dominate wall time on small boxes.
static MatrixXdC& conv_scratch(int which) {
    thread_local MatrixXdC s[3];
    return s[which];
}


Tensor Conv2D::forward(const Tensor& x) {
    check_4d(x);
    if (x.c != cin) throw std::runtime_error("conv2d: channel mismatch");
    in_cache = x;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wm(W.val.data(), cout, cin * k * k);
    Tensor out(x.b, cout, x.h, x.w);
    const size_t hw = static_cast<size_t>(x.h) * x.w;
    MatrixXdC& col = conv_scratch(0);
    MatrixXdC& out_mat = conv_scratch(1);  // (cout, h*w) one sample at a time
    for (int bi = 0; bi < x.b; ++bi) {
        im2col_sample(x, bi, k, pad, col);
        out_mat.noalias() = Wm * col;
        for (int co = 0; co < cout; ++co) {
            double* dst = out.val.data() + (static_cast<size_t>(bi) * cout + co) * hw;
            const double b0 = bias.val[co];
            for (size_t i = 0; i < hw; ++i)
                dst[i] = out_mat(co, static_cast<Eigen::Index>(i)) + b0;
        }
    }
    return out;
}

Tensor Conv2D::backward(const Tensor& dout) {
    const Tensor& x = in_cache;
    const size_t hw = static_cast<size_t>(x.h) * x.w;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wg(W.grad.data(), cout, cin * k * k);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wm(W.val.data(), cout, cin * k * k);
    Tensor dx(x.b, x.c, x.h, x.w);
    MatrixXdC& col = conv_scratch(0);
    MatrixXdC& dcol = conv_scratch(2);
    for (int bi = 0; bi < x.b; ++bi) {
        // Per-sample dout is already contiguous (cout, h*w) row-major.
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            dout_mat(dout.grad.data() + static_cast<size_t>(bi) * cout * hw, cout,
                     static_cast<Eigen::Index>(hw));
        im2col_sample(x, bi, k, pad, col);
        Wg.noalias() += dout_mat * col.transpose();  // (cout, cin*k*k)
        // Fixed-order accumulation: vectorized reductions peel to the buffer's
        // alignment, which varies run to run and breaks bit reproducibility.
        for (int co = 0; co < cout; ++co) {
            const double* g = dout.grad.data() + (static_cast<size_t>(bi) * cout + co) * hw;
            double s = 0;
            for (size_t i = 0; i < hw; ++i) s += g[i];
            bias.grad[co] += s;
        }
        dcol.noalias() = Wm.transpose() * dout_mat;  // (cin*k*k, h*w)
        col2im_add_sample(dcol, bi, k, pad, dx);
    }
    return dx;
}

// ---- elementwise ------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
    mask.assign(x.val.size(), 0);
    Tensor out = x;
    for (size_t i = 0; i < x.val.size(); ++i) {
        if (x.val[i] > 0) {
            mask[i] = 1;
        } else {
            out.val[i] = 0;
        }
    }
    return out;
}

Tensor ReLU::backward(const Tensor& dout) {
    Tensor dx = dout;
    for (size_t i = 0; i < dx.grad.size(); ++i)
        if (!mask[i]) dx.grad[i] = 0;
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor out = x;
    out_cache.resize(x.val.size());
    for (size_t i = 0; i < x.val.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x.val[i]));
        out.val[i] = s;
        out_cache[i] = s;
    }
    return out;
}

Tensor Sigmoid::backward(const Tensor& dout) {
    Tensor dx = dout;
    for (size_t i = 0; i < dx.grad.size(); ++i)
        dx.grad[i] = dout.grad[i] * out_cache[i] * (1 - out_cache[i]);
    return dx;
}

// ---- pooling / upsampling ---------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x) {
    if (x.h % 2 || x.w % 2) throw std::runtime_error("maxpool2: odd input size");
    in_h = x.h;
    in_w = x.w;
    Tensor out(x.b, x.c, x.h / 2, x.w / 2);
    argmax.assign(out.val.size(), 0);
    for (int bi = 0; bi < x.b; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx) {
                    size_t best = x.index(bi, ci, 2 * y, 2 * xx);
                    double bv = x.val[best];
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            size_t i = x.index(bi, ci, 2 * y + dy, 2 * xx + dx);
                            if (x.val[i] > bv) { bv = x.val[i]; best = i; }
                        }
                    size_t o = out.index(bi, ci, y, xx);
                    out.val[o] = bv;
                    argmax[o] = static_cast<int>(best - x.index(bi, ci, 0, 0));
                }
    return out;
}

Tensor MaxPool2::backward(const Tensor& dout) {
    Tensor dx(dout.b, dout.c, in_h, in_w);
    for (int bi = 0; bi < dout.b; ++bi)
        for (int ci = 0; ci < dout.c; ++ci) {
            size_t base = dx.index(bi, ci, 0, 0);
            for (int y = 0; y < dout.h; ++y)
                for (int xx = 0; xx < dout.w; ++xx) {
                    size_t o = dout.index(bi, ci, y, xx);
                    dx.grad[base + argmax[o]] += dout.grad[o];
                }
        }
    return dx;
}

Tensor UpsampleNearest2::forward(const Tensor& x) {
    Tensor out(x.b, x.c, x.h * 2, x.w * 2);
    for (int bi = 0; bi < x.b; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(bi, ci, y, xx) = x.at(bi, ci, y / 2, xx / 2);
    return out;
}

Tensor UpsampleNearest2::backward(const Tensor& dout) {
    Tensor dx(dout.b, dout.c, dout.h / 2, dout.w / 2);
    for (int bi = 0; bi < dout.b; ++bi)
        for (int ci = 0; ci < dout.c; ++ci)
            for (int y = 0; y < dout.h; ++y)
                for (int xx = 0; xx < dout.w; ++xx)
                    dx.grad[dx.index(bi, ci, y / 2, xx / 2)] += dout.grad[dout.index(bi, ci, y, xx)];
    return dx;
}

// ---- linear -----------------------------------------------------------------

Linear::Linear(int fin_, int fout_)
    : fin(fin_), fout(fout_), W(fout_, fin_, 1, 1), bias(fout_, 1, 1, 1) {}

void Linear::init_he(Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fin));
    for (auto& w : W.val) w = dist(rng);
    std::fill(bias.val.begin(), bias.val.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.c * x.h * x.w != fin) throw std::runtime_error("linear: feature size mismatch");
    in_cache = x;
    Eigen::Map<const MatrixXdC> X(x.val.data(), fin, x.b);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wm(W.val.data(), fout, fin);
    Tensor out(x.b, fout, 1, 1);
    Eigen::Map<MatrixXdC> O(out.val.data(), fout, x.b);
    O = Wm * X;
    for (int bi = 0; bi < x.b; ++bi)
        for (int f = 0; f < fout; ++f) out.val[static_cast<size_t>(bi) * fout + f] += bias.val[f];
    return out;
}

Tensor Linear::backward(const Tensor& dout) {
    const Tensor& x = in_cache;
    Eigen::Map<const MatrixXdC> X(x.val.data(), fin, x.b);
    Eigen::Map<const MatrixXdC> dO(dout.grad.data(), fout, x.b);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wg(W.grad.data(), fout, fin);
    Wg += dO * X.transpose();
    for (int f = 0; f < fout; ++f) {  // fixed-order sum, see Conv2D::backward
        double s = 0;
        for (int bi = 0; bi < x.b; ++bi) s += dout.grad[static_cast<size_t>(bi) * fout + f];
        bias.grad[f] += s;
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Wm(W.val.data(), fout, fin);
    Tensor dx(x.b, x.c, x.h, x.w);
    Eigen::Map<MatrixXdC> dX(dx.grad.data(), fin, x.b);
    dX = Wm.transpose() * dO;
    return dx;
}

Tensor flatten(Tensor x) {
    x.c = x.c * x.h * x.w;
    x.h = 1;
    x.w = 1;
    return x;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.b != b.b || a.h != b.h || a.w != b.w)
        throw std::runtime_error("concat: shape mismatch");
    Tensor out(a.b, a.c + b.c, a.h, a.w);
    const size_t hw = static_cast<size_t>(a.h) * a.w;
    for (int bi = 0; bi < a.b; ++bi) {
        std::copy(a.val.begin() + static_cast<size_t>(bi) * a.c * hw,
                  a.val.begin() + static_cast<size_t>(bi + 1) * a.c * hw,
                  out.val.begin() + static_cast<size_t>(bi) * out.c * hw);
        std::copy(b.val.begin() + static_cast<size_t>(bi) * b.c * hw,
                  b.val.begin() + static_cast<size_t>(bi + 1) * b.c * hw,
                  out.val.begin() + (static_cast<size_t>(bi) * out.c + a.c) * hw);
    }
    return out;
}

void split_channels(const Tensor& d, Tensor& da, Tensor& db) {
    const size_t hw = static_cast<size_t>(d.h) * d.w;
    for (int bi = 0; bi < d.b; ++bi) {
        std::copy(d.grad.begin() + static_cast<size_t>(bi) * d.c * hw,
                  d.grad.begin() + (static_cast<size_t>(bi) * d.c + da.c) * hw,
                  da.grad.begin() + static_cast<size_t>(bi) * da.c * hw);
        std::copy(d.grad.begin() + (static_cast<size_t>(bi) * d.c + da.c) * hw,
                  d.grad.begin() + static_cast<size_t>(bi + 1) * d.c * hw,
                  db.grad.begin() + static_cast<size_t>(bi) * db.c * hw);
    }
}

// ---- bilinear warp -----------------------------------------------------------

Tensor BilinearWarp::forward(const Tensor& features, const Tensor& map) {
    check_4d(features);
    if (map.b != features.b || map.c != 2 || map.h != features.h || map.w != features.w)
        throw std::runtime_error("warp: map shape mismatch");
    feat_cache = features;
    map_cache = map;
    const int n = features.w;
    if (features.h != n) throw std::runtime_error("warp: expected square features");
    Tensor out(features.b, features.c, n, n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int bi = 0; bi < features.b; ++bi)
        for (int y = 0; y < n; ++y)
            for (int xx = 0; xx < n; ++xx) {
                double u = map.at(bi, 0, y, xx);
                double v = map.at(bi, 1, y, xx);
                double sx = snap_lattice_coord(u * (n - 1), n);
                double sy = snap_lattice_coord(v * (n - 1), n);
                BilinearCell cell = bilinear_cell(sx, sy, n);
                for (int ci = 0; ci < features.c; ++ci) {
                    const double* plane =
                        features.val.data() +
                        (static_cast<size_t>(bi) * features.c + ci) * n * n;
                    const double* r0 = plane + static_cast<size_t>(cell.j0) * n + cell.i0;
                    const double* r1 = r0 + n;
                    out.at(bi, ci, y, xx) = bilerp(r0[0], r0[1], r1[0], r1[1], cell.fx, cell.fy);
                }
            }
    return out;
}

void BilinearWarp::backward(const Tensor& dout, Tensor* dfeatures, Tensor* dmap) {
    const Tensor& features = feat_cache;
    const Tensor& map = map_cache;
    const int n = features.w;
    for (int bi = 0; bi < features.b; ++bi)
        for (int y = 0; y < n; ++y)
            for (int xx = 0; xx < n; ++xx) {
                double u = map.at(bi, 0, y, xx);
                double v = map.at(bi, 1, y, xx);
                double su = u * (n - 1), sv = v * (n - 1);
                bool live_u = su > 0 && su < n - 1;  // clamp kills the gradient
                bool live_v = sv > 0 && sv < n - 1;
                double sx = snap_lattice_coord(su, n);
                double sy = snap_lattice_coord(sv, n);
                BilinearCell cell = bilinear_cell(sx, sy, n);
                double du_acc = 0, dv_acc = 0;
                for (int ci = 0; ci < features.c; ++ci) {
                    double g = dout.grad[dout.index(bi, ci, y, xx)];
                    if (g == 0) continue;
                    size_t base = (static_cast<size_t>(bi) * features.c + ci) * n * n;
                    size_t i00 = base + static_cast<size_t>(cell.j0) * n + cell.i0;
                    if (dfeatures) {
                        dfeatures->grad[i00] += g * (1 - cell.fx) * (1 - cell.fy);
                        dfeatures->grad[i00 + 1] += g * cell.fx * (1 - cell.fy);
                        dfeatures->grad[i00 + n] += g * (1 - cell.fx) * cell.fy;
                        dfeatures->grad[i00 + n + 1] += g * cell.fx * cell.fy;
                    }
                    if (dmap) {
                        const double* p = features.val.data();
                        double v00 = p[i00], v10 = p[i00 + 1], v01 = p[i00 + n], v11 = p[i00 + n + 1];
                        double dsx = (1 - cell.fy) * (v10 - v00) + cell.fy * (v11 - v01);
                        double dsy = (1 - cell.fx) * (v01 - v00) + cell.fx * (v11 - v10);
                        du_acc += g * dsx;
                        dv_acc += g * dsy;
                    }
                }
                if (dmap) {
                    if (live_u) dmap->grad[dmap->index(bi, 0, y, xx)] += du_acc * (n - 1);
                    if (live_v) dmap->grad[dmap->index(bi, 1, y, xx)] += dv_acc * (n - 1);
                }
            }
}

// ---- map losses ----------------------------------------------------------------

namespace {

constexpr double kRmsEps = 1e-30;

// Forward FD stencils matching qc::complex_derivatives; `plane` is one
// channel of one batch item.
void partials_plane(const double* p, int n, std::vector<double>& px, std::vector<double>& py) {
    const double inv2h = 0.5 * (n - 1);
    px.assign(static_cast<size_t>(n) * n, 0.0);
    py.assign(static_cast<size_t>(n) * n, 0.0);
    for (int iy = 0; iy < n; ++iy) {
        const size_t row = static_cast<size_t>(iy) * n;
        for (int ix = 0; ix < n; ++ix) {
            if (ix == 0)
                px[row] = (-3 * p[row] + 4 * p[row + 1] - p[row + 2]) * inv2h;
            else if (ix == n - 1)
                px[row + ix] = (3 * p[row + ix] - 4 * p[row + ix - 1] + p[row + ix - 2]) * inv2h;
            else
                px[row + ix] = (p[row + ix + 1] - p[row + ix - 1]) * inv2h;
        }
    }
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            size_t i = static_cast<size_t>(iy) * n + ix;
            if (iy == 0)
                py[i] = (-3 * p[i] + 4 * p[i + n] - p[i + 2 * n]) * inv2h;
            else if (iy == n - 1)
                py[i] = (3 * p[i] - 4 * p[i - n] + p[i - 2 * n]) * inv2h;
            else
                py[i] = (p[i + n] - p[i - n]) * inv2h;
        }
}

// Adjoint of partials_plane in x: scatter dL/dpx into dL/dplane.
void partials_adjoint_x(const std::vector<double>& gpx, int n, double* dp) {
    const double inv2h = 0.5 * (n - 1);
    for (int iy = 0; iy < n; ++iy) {
        const size_t row = static_cast<size_t>(iy) * n;
        for (int ix = 0; ix < n; ++ix) {
            double g = gpx[row + ix] * inv2h;
            if (g == 0) continue;
            if (ix == 0) {
                dp[row] += -3 * g;
                dp[row + 1] += 4 * g;
                dp[row + 2] += -g;
            } else if (ix == n - 1) {
                dp[row + ix] += 3 * g;
                dp[row + ix - 1] += -4 * g;
                dp[row + ix - 2] += g;
            } else {
                dp[row + ix + 1] += g;
                dp[row + ix - 1] += -g;
            }
        }
    }
}

void partials_adjoint_y(const std::vector<double>& gpy, int n, double* dp) {
    const double inv2h = 0.5 * (n - 1);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            size_t i = static_cast<size_t>(iy) * n + ix;
            double g = gpy[i] * inv2h;
            if (g == 0) continue;
            if (iy == 0) {
                dp[i] += -3 * g;
                dp[i + n] += 4 * g;
                dp[i + 2 * n] += -g;
            } else if (iy == n - 1) {
                dp[i] += 3 * g;
                dp[i - n] += -4 * g;
                dp[i - 2 * n] += g;
            } else {
                dp[i + n] += g;
                dp[i - n] += -g;
            }
        }
}

}  // namespace

MapLossValue loss_bc(Tensor& map, double scale) {
    if (map.c != 2 || map.h != map.w || map.h < 3)
        throw std::runtime_error("loss_bc: expected (b,2,n,n) map with n >= 3");
    const int n = map.h;
    const size_t nn = static_cast<size_t>(n) * n;
    MapLossValue out;
    out.per_sample.resize(map.b);
    out.max_abs_mu.resize(map.b);
    std::vector<double> ux, uy, vx, vy, gux(nn), guy(nn), gvx(nn), gvy(nn);
    for (int bi = 0; bi < map.b; ++bi) {
        const double* up = map.val.data() + map.index(bi, 0, 0, 0);
        const double* vp = map.val.data() + map.index(bi, 1, 0, 0);
        partials_plane(up, n, ux, uy);
        partials_plane(vp, n, vx, vy);
        double sum = 0, max_mu = 0;
        std::vector<double> m2(nn, 0.0);
        std::vector<char> live(nn, 0);
        for (size_t i = 0; i < nn; ++i) {
            double A = 0.5 * (ux[i] + vy[i]);
            double B = 0.5 * (vx[i] - uy[i]);
            double C = 0.5 * (ux[i] - vy[i]);
            double D = 0.5 * (vx[i] + uy[i]);
            double den = A * A + B * B;
            if (den < 1e-24) continue;  // degenerate node: μ := 0, no gradient
            m2[i] = (C * C + D * D) / den;
            live[i] = 1;
            sum += m2[i];
            max_mu = std::max(max_mu, std::sqrt(m2[i]));
        }
        double L = std::sqrt(sum / static_cast<double>(nn) + kRmsEps);
        out.per_sample[bi] = L;
        out.max_abs_mu[bi] = max_mu;

        double gL = scale / map.b;              // d(batch mean)/dL_sample
        double gS = gL / (2 * L);               // L = sqrt(S + eps)
        double gm2_base = gS / static_cast<double>(nn);
        std::fill(gux.begin(), gux.end(), 0.0);
        std::fill(guy.begin(), guy.end(), 0.0);
        std::fill(gvx.begin(), gvx.end(), 0.0);
        std::fill(gvy.begin(), gvy.end(), 0.0);
        for (size_t i = 0; i < nn; ++i) {
            if (!live[i]) continue;
            double A = 0.5 * (ux[i] + vy[i]);
            double B = 0.5 * (vx[i] - uy[i]);
            double C = 0.5 * (ux[i] - vy[i]);
            double D = 0.5 * (vx[i] + uy[i]);
            double den = A * A + B * B;
            double gA = gm2_base * (-2 * A * m2[i] / den);
            double gB = gm2_base * (-2 * B * m2[i] / den);
            double gC = gm2_base * (2 * C / den);
            double gD = gm2_base * (2 * D / den);
            gux[i] += 0.5 * (gA + gC);
            gvy[i] += 0.5 * (gA - gC);
            gvx[i] += 0.5 * (gB + gD);
            guy[i] += 0.5 * (gD - gB);
        }
        double* gu = map.grad.data() + map.index(bi, 0, 0, 0);
        double* gv = map.grad.data() + map.index(bi, 1, 0, 0);
        partials_adjoint_x(gux, n, gu);
        partials_adjoint_y(guy, n, gu);
        partials_adjoint_x(gvx, n, gv);
        partials_adjoint_y(gvy, n, gv);
    }
    double total = 0;
    for (double v : out.per_sample) total += v;
    out.value = total / map.b;
    return out;
}

MapLossValue loss_lap(Tensor& map, double scale) {
    if (map.c != 2 || map.h != map.w || map.h < 3)
        throw std::runtime_error("loss_lap: expected (b,2,n,n) map with n >= 3");
    const int n = map.h;
    const double inv_h2 = static_cast<double>(n - 1) * (n - 1);
    const double m_int = static_cast<double>(n - 2) * (n - 2);
    MapLossValue out;
    out.per_sample.resize(map.b);
    for (int bi = 0; bi < map.b; ++bi) {
        const double* up = map.val.data() + map.index(bi, 0, 0, 0);
        const double* vp = map.val.data() + map.index(bi, 1, 0, 0);
        auto du = [&](int ix, int iy) { return up[static_cast<size_t>(iy) * n + ix] - node_coord(ix, n); };
        auto dv = [&](int ix, int iy) { return vp[static_cast<size_t>(iy) * n + ix] - node_coord(iy, n); };
        double sum = 0;
        std::vector<double> lu(static_cast<size_t>(n) * n, 0.0), lv(lu);
        for (int iy = 1; iy < n - 1; ++iy)
            for (int ix = 1; ix < n - 1; ++ix) {
                size_t i = static_cast<size_t>(iy) * n + ix;
                lu[i] = (du(ix + 1, iy) + du(ix - 1, iy) + du(ix, iy + 1) + du(ix, iy - 1) -
                         4 * du(ix, iy)) * inv_h2;
                lv[i] = (dv(ix + 1, iy) + dv(ix - 1, iy) + dv(ix, iy + 1) + dv(ix, iy - 1) -
                         4 * dv(ix, iy)) * inv_h2;
                sum += lu[i] * lu[i] + lv[i] * lv[i];
            }
        double L = std::sqrt(sum / m_int + kRmsEps);
        out.per_sample[bi] = L;

        double gL = scale / map.b;
        double gS = gL / (2 * L);
        double* gu = map.grad.data() + map.index(bi, 0, 0, 0);
        double* gv = map.grad.data() + map.index(bi, 1, 0, 0);
        for (int iy = 1; iy < n - 1; ++iy)
            for (int ix = 1; ix < n - 1; ++ix) {
                size_t i = static_cast<size_t>(iy) * n + ix;
                double glu = gS * 2 * lu[i] / m_int * inv_h2;
                double glv = gS * 2 * lv[i] / m_int * inv_h2;
                gu[i + 1] += glu;
                gu[i - 1] += glu;
                gu[i + n] += glu;
                gu[i - n] += glu;
                gu[i] += -4 * glu;
                gv[i + 1] += glv;
                gv[i - 1] += glv;
                gv[i + n] += glv;
                gv[i - n] += glv;
                gv[i] += -4 * glv;
            }
    }
    double total = 0;
    for (double v : out.per_sample) total += v;
    out.value = total / map.b;
    return out;
}

// ---- task losses -----------------------------------------------------------------

double softmax_cross_entropy(Tensor& logits, const std::vector<int>& labels) {
    const int nc = logits.c;
    if (static_cast<int>(labels.size()) != logits.b)
        throw std::runtime_error("cross entropy: label count mismatch");
    double loss = 0;
    for (int bi = 0; bi < logits.b; ++bi) {
        double* row = logits.val.data() + static_cast<size_t>(bi) * nc;
        double* grow = logits.grad.data() + static_cast<size_t>(bi) * nc;
        double m = row[0];
        for (int c = 0; c < nc; ++c) m = std::max(m, row[c]);
        double z = 0;
        for (int c = 0; c < nc; ++c) z += std::exp(row[c] - m);
        int y = labels[bi];
        if (y < 0 || y >= nc) throw std::runtime_error("cross entropy: label out of range");
        loss += -(row[y] - m - std::log(z));
        for (int c = 0; c < nc; ++c) {
            double p = std::exp(row[c] - m) / z;
            grow[c] += (p - (c == y ? 1.0 : 0.0)) / logits.b;
        }
    }
    return loss / logits.b;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.b);
    for (int bi = 0; bi < logits.b; ++bi) {
        const double* row = logits.val.data() + static_cast<size_t>(bi) * logits.c;
        int best = 0;
        for (int c = 1; c < logits.c; ++c)
            if (row[c] > row[best]) best = c;
        out[bi] = best;
    }
    return out;
}

double mse_loss(Tensor& pred, const std::vector<double>& target, double scale) {
    if (target.size() != pred.val.size())
        throw std::runtime_error("mse: target size mismatch");
    double sum = 0;
    const double inv = 1.0 / pred.val.size();
    for (size_t i = 0; i < pred.val.size(); ++i) {
        double d = pred.val[i] - target[i];
        sum += d * d;
        pred.grad[i] += scale * 2 * d * inv;
    }
    return sum * inv;
}

// ---- misc -----------------------------------------------------------------------

Tensor identity_map_tensor(int batch, int n) {
    Tensor t(batch, 2, n, n);
    for (int bi = 0; bi < batch; ++bi)
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                t.at(bi, 0, iy, ix) = node_coord(ix, n);
                t.at(bi, 1, iy, ix) = node_coord(iy, n);
            }
    return t;
}

GridMap map_from_tensor(const Tensor& map, int bi) {
    GridMap g;
    g.resolution = map.h;
    const size_t nn = static_cast<size_t>(map.h) * map.w;
    g.u.assign(map.val.begin() + map.index(bi, 0, 0, 0),
               map.val.begin() + map.index(bi, 0, 0, 0) + nn);
    g.v.assign(map.val.begin() + map.index(bi, 1, 0, 0),
               map.val.begin() + map.index(bi, 1, 0, 0) + nn);
    return g;
}

std::vector<Tensor*> Head::params() {
    std::vector<Tensor*> out;
    collect(out);
    return out;
}

size_t Head::param_count() {
    size_t n = 0;
    for (Tensor* t : params()) n += t->val.size();
    return n;
}

}  // namespace qcsurf::nn
