#include "qcsurf/nn.hpp"

#include <stdexcept>

namespace qcsurf::nn {

DoubleConv::DoubleConv(int cin, int cout)
    : c1(cin, cout, 3, 1), c2(cout, cout, 3, 1) {}

Tensor DoubleConv::forward(const Tensor& x) {
    return r2.forward(c2.forward(r1.forward(c1.forward(x))));
}

Tensor DoubleConv::backward(const Tensor& dout) {
    return c1.backward(r1.backward(c2.backward(r2.backward(dout))));
}

void DoubleConv::collect(std::vector<Tensor*>& out) {
    out.push_back(&c1.W);
    out.push_back(&c1.bias);
    out.push_back(&c2.W);
    out.push_back(&c2.bias);
}

UNet::UNet(int in_ch, int out_ch, int depth_, int base, Rng& rng, bool zero_final)
    : depth(depth_) {
    if (depth < 1 || depth > 4) throw std::runtime_error("unet: depth must be in 1..4");
    if (base < 1) throw std::runtime_error("unet: base channels must be positive");
    enc.reserve(depth);
    for (int d = 0; d < depth; ++d)
        enc.emplace_back(d == 0 ? in_ch : base << (d - 1), base << d);
    pool.resize(depth);
    bottleneck = DoubleConv(base << (depth - 1), base << depth);
    up.resize(depth);
    dec.reserve(depth);
    for (int d = 0; d < depth; ++d)
        dec.emplace_back((base << d) + (base << (d + 1)), base << d);
    final1x1 = Conv2D(base, out_ch, 1, 0);
    for (auto& e : enc) {
        e.c1.init_he(rng);
        e.c2.init_he(rng);
    }
    bottleneck.c1.init_he(rng);
    bottleneck.c2.init_he(rng);
    for (auto& d : dec) {
        d.c1.init_he(rng);
        d.c2.init_he(rng);
    }
    if (zero_final)
        final1x1.init_zero();
    else
        final1x1.init_he(rng);
}

Tensor UNet::forward(const Tensor& x) {
    if (x.h % (1 << depth) || x.w % (1 << depth))
        throw std::runtime_error("unet: resolution not divisible by 2^depth");
    skip_cache.assign(depth, Tensor());
    Tensor cur = x;
    for (int d = 0; d < depth; ++d) {
        skip_cache[d] = enc[d].forward(cur);
        cur = pool[d].forward(skip_cache[d]);
    }
    cur = bottleneck.forward(cur);
    for (int d = depth - 1; d >= 0; --d) {
        Tensor upper = up[d].forward(cur);
        cur = dec[d].forward(concat_channels(skip_cache[d], upper));
    }
    return final1x1.forward(cur);
}

Tensor UNet::backward(const Tensor& dout) {
    Tensor dcur = final1x1.backward(dout);
    std::vector<Tensor> dskip(depth);
    for (int d = 0; d < depth; ++d) {
        Tensor dconcat = dec[d].backward(dcur);
        const Tensor& s = skip_cache[d];
        Tensor ds(s.b, s.c, s.h, s.w);
        Tensor dup(s.b, dconcat.c - s.c, s.h, s.w);
        split_channels(dconcat, ds, dup);
        dskip[d] = std::move(ds);
        dcur = up[d].backward(dup);
    }
    dcur = bottleneck.backward(dcur);
    for (int d = depth - 1; d >= 0; --d) {
        Tensor dpool = pool[d].backward(dcur);
        for (size_t i = 0; i < dpool.grad.size(); ++i) dpool.grad[i] += dskip[d].grad[i];
        dcur = enc[d].backward(dpool);
    }
    return dcur;
}

void UNet::collect(std::vector<Tensor*>& out) {
    for (auto& e : enc) e.collect(out);
    bottleneck.collect(out);
    for (auto& d : dec) d.collect(out);
    out.push_back(&final1x1.W);
    out.push_back(&final1x1.bias);
}

QCE::QCE(const EstimatorConfig& cfg_, Rng& rng)
    : cfg(cfg_),
      net(cfg_.in_channels, 2, cfg_.depth, cfg_.base_channels, rng, /*zero_final=*/true) {
    if (cfg.depth < 1 || cfg.depth > 4)
        throw std::runtime_error("estimator: depth must be in 1..4");
}

Tensor QCE::forward(const Tensor& x) {
    Tensor disp = net.forward(x);
    Tensor id = identity_map_tensor(x.b, x.w);
    for (size_t i = 0; i < disp.val.size(); ++i) disp.val[i] += id.val[i];
    return disp;
}

Tensor QCE::backward(const Tensor& dmap) { return net.backward(dmap); }

std::vector<Tensor*> QCE::params() {
    std::vector<Tensor*> out;
    net.collect(out);
    return out;
}

size_t QCE::param_count() {
    size_t n = 0;
    for (Tensor* t : params()) n += t->val.size();
    return n;
}

}  // namespace qcsurf::nn
