#include "qcsurf/nn.hpp"

#include <stdexcept>

namespace qcsurf::nn {

ClassifierSmall::ClassifierSmall(int in_ch, int n, int n_classes, int conv_channels, Rng& rng)
    : conv(in_ch, conv_channels, 3, 1),
      fc(conv_channels * (n / 2) * (n / 2), n_classes) {
    if (n % 2) throw std::runtime_error("classifier: resolution must be even");
    conv.init_he(rng);
    fc.init_he(rng);
}

Tensor ClassifierSmall::forward(const Tensor& x) {
    return fc.forward(flatten(pool.forward(relu.forward(conv.forward(x)))));
}

Tensor ClassifierSmall::backward(const Tensor& dout) {
    Tensor d = fc.backward(dout);
    // Undo the flatten: restore the pooled spatial shape.
    d.c = conv.cout;
    d.h = pool.in_h / 2;
    d.w = pool.in_w / 2;
    return conv.backward(relu.backward(pool.backward(d)));
}

void ClassifierSmall::collect(std::vector<Tensor*>& out) {
    out.push_back(&conv.W);
    out.push_back(&conv.bias);
    out.push_back(&fc.W);
    out.push_back(&fc.bias);
}

ClassifierWide::ClassifierWide(int in_ch, int n, int n_classes, Rng& rng)
    : conv1(in_ch, 8, 3, 1), conv2(8, 16, 3, 1),
      fc1(16 * (n / 4) * (n / 4), 64), fc2(64, 32), fc3(32, n_classes) {
    if (n % 4) throw std::runtime_error("classifier: resolution must be divisible by 4");
    conv1.init_he(rng);
    conv2.init_he(rng);
    fc1.init_he(rng);
    fc2.init_he(rng);
    fc3.init_he(rng);
}

Tensor ClassifierWide::forward(const Tensor& x) {
    Tensor t = pool1.forward(r1.forward(conv1.forward(x)));
    t = pool2.forward(r2.forward(conv2.forward(t)));
    t = r3.forward(fc1.forward(flatten(std::move(t))));
    t = r4.forward(fc2.forward(t));
    return fc3.forward(t);
}

Tensor ClassifierWide::backward(const Tensor& dout) {
    Tensor d = fc3.backward(dout);
    d = fc2.backward(r4.backward(d));
    d = fc1.backward(r3.backward(d));
    d.c = conv2.cout;
    d.h = pool2.in_h / 2;
    d.w = pool2.in_w / 2;
    d = conv2.backward(r2.backward(pool2.backward(d)));
    return conv1.backward(r1.backward(pool1.backward(d)));
}

void ClassifierWide::collect(std::vector<Tensor*>& out) {
    out.push_back(&conv1.W);
    out.push_back(&conv1.bias);
    out.push_back(&conv2.W);
    out.push_back(&conv2.bias);
    out.push_back(&fc1.W);
    out.push_back(&fc1.bias);
    out.push_back(&fc2.W);
    out.push_back(&fc2.bias);
    out.push_back(&fc3.W);
    out.push_back(&fc3.bias);
}

Segmenter::Segmenter(int in_ch, int base, Rng& rng)
    : net(in_ch, 1, 3, base, rng, /*zero_final=*/false) {}

Tensor Segmenter::forward(const Tensor& x) { return sig.forward(net.forward(x)); }

Tensor Segmenter::backward(const Tensor& dout) { return net.backward(sig.backward(dout)); }

void Segmenter::collect(std::vector<Tensor*>& out) { net.collect(out); }

}  // namespace qcsurf::nn
