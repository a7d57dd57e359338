#include <cmath>
#include <vector>

#include "doctest.h"
#include "stseg/conv.hpp"
#include "stseg/gradcheck.hpp"
#include "stseg/ops.hpp"
#include "stseg/optim.hpp"

using namespace stseg;

namespace {

// Straight five-loop reference convolutions, kept deliberately independent
// of the library kernels.
std::vector<double> naive_conv2d(const std::vector<double>& in, int N, int C, int H, int W,
                                 const std::vector<double>& w, const std::vector<double>& b, int Co, int Ky,
                                 int Kx, int stride, int pad, int Ho, int Wo) {
    std::vector<double> out(static_cast<size_t>(N) * Co * Ho * Wo, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Co; ++o)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b[o];
                    for (int i = 0; i < C; ++i)
                        for (int ky = 0; ky < Ky; ++ky)
                            for (int kx = 0; kx < Kx; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += in[((static_cast<size_t>(n) * C + i) * H + iy) * W + ix] *
                                       w[((static_cast<size_t>(o) * C + i) * Ky + ky) * Kx + kx];
                            }
                    out[((static_cast<size_t>(n) * Co + o) * Ho + oy) * Wo + ox] = acc;
                }
    return out;
}

std::vector<double> naive_conv3d(const std::vector<double>& in, int N, int C, int T, int H, int W,
                                 const std::vector<double>& w, const std::vector<double>& b, int Co, int Ky,
                                 int Kx, int Kt, int dil_t, int pad_t, int pad_y, int pad_x, int To, int Ho,
                                 int Wo) {
    std::vector<double> out(static_cast<size_t>(N) * Co * To * Ho * Wo, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Co; ++o)
            for (int ot = 0; ot < To; ++ot)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        double acc = b[o];
                        for (int i = 0; i < C; ++i)
                            for (int ky = 0; ky < Ky; ++ky)
                                for (int kx = 0; kx < Kx; ++kx)
                                    for (int kt = 0; kt < Kt; ++kt) {
                                        const int it = ot + kt * dil_t - pad_t;
                                        const int iy = oy + ky - pad_y;
                                        const int ix = ox + kx - pad_x;
                                        if (it < 0 || it >= T || iy < 0 || iy >= H || ix < 0 || ix >= W)
                                            continue;
                                        acc += in[(((static_cast<size_t>(n) * C + i) * T + it) * H + iy) * W +
                                                  ix] *
                                               w[(((static_cast<size_t>(o) * C + i) * Ky + ky) * Kx + kx) * Kt +
                                                 kt];
                                    }
                        out[(((static_cast<size_t>(n) * Co + o) * To + ot) * Ho + oy) * Wo + ox] = acc;
                    }
    return out;
}

std::vector<double> to_vec(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("conv2d matches the naive reference over strides and paddings") {
    Rng rng(11);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1, 2}) {
            const int N = 2, C = 3, H = 7, W = 6, Co = 4, K = 3;
            if ((H + 2 * pad - K) / stride < 0) continue;
            Tensor<double> x = Tensor<double>::randn({N, C, H, W}, rng);
            Tensor<double> w = Tensor<double>::randn({Co, C, K, K}, rng);
            Tensor<double> b = Tensor<double>::randn({Co}, rng);
            Conv2dKernel<double> k{w, b, stride, pad};
            Tensor<double> y = conv2d(x, k);
            auto ref = naive_conv2d(to_vec(x), N, C, H, W, to_vec(w), to_vec(b), Co, K, K, stride, pad,
                                    y.dim(2), y.dim(3));
            REQUIRE(y.numel() == ref.size());
            for (size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d rejects configurations with an empty output") {
    Rng rng(3);
    Tensor<double> x = Tensor<double>::randn({1, 1, 2, 2}, rng);
    Tensor<double> w = Tensor<double>::randn({1, 1, 5, 5}, rng);
    Tensor<double> b = Tensor<double>::zeros({1});
    Conv2dKernel<double> k{w, b, 1, 0};
    CHECK_THROWS_AS(conv2d(x, k), std::invalid_argument);
}

TEST_CASE("conv3d with temporal dilation matches the naive reference") {
    Rng rng(19);
    for (int dil : {1, 2, 4}) {
        const int N = 1, C = 2, T = 9, H = 4, W = 5, Co = 3, K = 3;
        const int pad_t = same_pad_t(3, dil);
        Tensor<double> x = Tensor<double>::randn({N, C, T, H, W}, rng);
        Tensor<double> w = Tensor<double>::randn({Co, C, K, K, 3}, rng);
        Tensor<double> b = Tensor<double>::randn({Co}, rng);
        Conv3dKernel<double> k{w, b, dil, pad_t, 1, 1};
        Tensor<double> y = conv3d(x, k);
        CHECK(y.dim(2) == T);  // same-length in time
        auto ref = naive_conv3d(to_vec(x), N, C, T, H, W, to_vec(w), to_vec(b), Co, K, K, 3, dil, pad_t, 1, 1,
                                y.dim(2), y.dim(3), y.dim(4));
        REQUIRE(y.numel() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("convolution is linear in its input") {
    Rng rng(23);
    Tensor<double> x1 = Tensor<double>::randn({1, 2, 5, 5}, rng);
    Tensor<double> x2 = Tensor<double>::randn({1, 2, 5, 5}, rng);
    Tensor<double> w = Tensor<double>::randn({2, 2, 3, 3}, rng);
    Tensor<double> zero_b = Tensor<double>::zeros({2});
    Conv2dKernel<double> k{w, zero_b, 1, 1};
    Tensor<double> lhs = conv2d(add(x1, scale(x2, 2.5)), k);
    Tensor<double> r1 = conv2d(x1, k);
    Tensor<double> r2 = conv2d(x2, k);
    for (size_t i = 0; i < lhs.numel(); ++i)
        CHECK(lhs.data()[i] == doctest::Approx(r1.data()[i] + 2.5 * r2.data()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d translation equivariance at stride 1") {
    // shifting the input one pixel right shifts the interior of the output
    Rng rng(29);
    const int H = 6, W = 6;
    Tensor<double> x = Tensor<double>::zeros({1, 1, H, W});
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W - 1; ++xx) x.data()[y * W + xx] = rng.normal();
    Tensor<double> xs = Tensor<double>::zeros({1, 1, H, W});
    for (int y = 0; y < H; ++y)
        for (int xx = 1; xx < W; ++xx) xs.data()[y * W + xx] = x.data()[y * W + xx - 1];
    Tensor<double> w = Tensor<double>::randn({1, 1, 3, 3}, rng);
    Tensor<double> b = Tensor<double>::zeros({1});
    Conv2dKernel<double> k{w, b, 1, 1};
    Tensor<double> y0 = conv2d(x, k);
    Tensor<double> y1 = conv2d(xs, k);
    for (int y = 1; y < H - 1; ++y)
        for (int xx = 2; xx < W - 1; ++xx)
            CHECK(y1.data()[y * W + xx] == doctest::Approx(y0.data()[y * W + xx - 1]).epsilon(1e-12));
}

TEST_CASE("autodiff composes add, mul, scale and sum correctly") {
    Tensor<double> a = Tensor<double>::from_data({3}, {1.0, -2.0, 3.0}, true);
    Tensor<double> b = Tensor<double>::from_data({3}, {4.0, 5.0, -6.0}, true);
    // L = sum(a * b + 2a) => dL/da = b + 2, dL/db = a
    Tensor<double> loss = sum_all(add(mul(a, b), scale(a, 2.0)));
    loss.backward();
    CHECK(loss.value() == doctest::Approx(1 * 4 + (-2) * 5 + 3 * (-6) + 2 * (1 - 2 + 3)));
    CHECK(a.grad()[0] == doctest::Approx(6.0));
    CHECK(a.grad()[1] == doctest::Approx(7.0));
    CHECK(a.grad()[2] == doctest::Approx(-4.0));
    CHECK(b.grad()[0] == doctest::Approx(1.0));
    CHECK(b.grad()[1] == doctest::Approx(-2.0));
    CHECK(b.grad()[2] == doctest::Approx(3.0));
}

TEST_CASE("backward accumulates when a tensor feeds several consumers") {
    Tensor<double> a = Tensor<double>::from_data({2}, {3.0, -1.0}, true);
    Tensor<double> loss = sum_all(add(mul(a, a), a));  // d/da = 2a + 1
    loss.backward();
    CHECK(a.grad()[0] == doctest::Approx(7.0));
    CHECK(a.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("NoGradGuard detaches results from the graph") {
    Tensor<double> a = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    {
        NoGradGuard ng;
        Tensor<double> y = mul(a, a);
        CHECK_FALSE(y.requires_grad());
    }
    Tensor<double> y2 = mul(a, a);
    CHECK(y2.requires_grad());
}

TEST_CASE("softmax normalizes and matches a hand-computed case") {
    Tensor<double> x = Tensor<double>::from_data({1, 3, 1, 1}, {1.0, 2.0, 3.0});
    Tensor<double> y = softmax(x, 1);
    const double e1 = std::exp(1.0 - 3.0), e2 = std::exp(2.0 - 3.0), e3 = 1.0;
    const double z = e1 + e2 + e3;
    CHECK(y.data()[0] == doctest::Approx(e1 / z).epsilon(1e-14));
    CHECK(y.data()[1] == doctest::Approx(e2 / z).epsilon(1e-14));
    CHECK(y.data()[2] == doctest::Approx(e3 / z).epsilon(1e-14));

    Rng rng(31);
    Tensor<double> r = Tensor<double>::randn({2, 5, 3, 2}, rng);
    Tensor<double> s = softmax(r, 1);
    for (int n = 0; n < 2; ++n)
        for (int j = 0; j < 6; ++j) {
            double sum = 0.0;
            for (int c = 0; c < 5; ++c) sum += s.data()[(n * 5 + c) * 6 + j];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("softmax is invariant to a constant shift of the logits") {
    Rng rng(37);
    Tensor<double> x = Tensor<double>::randn({1, 4, 2, 2}, rng);
    Tensor<double> shifted = add(x, Tensor<double>::filled(x.shape(), 7.5));
    Tensor<double> a = softmax(x, 1);
    Tensor<double> b = softmax(shifted, 1);
    for (size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("batch_norm training statistics and running updates") {
    Rng rng(41);
    const int N = 4, C = 3, H = 5, W = 5;
    Tensor<double> x = Tensor<double>::randn({N, C, H, W}, rng, 2.0);
    for (double& v : x.data()) v += 0.7;
    Tensor<double> gamma = Tensor<double>::filled({C}, 1.0);
    Tensor<double> beta = Tensor<double>::zeros({C});
    Tensor<double> rm = Tensor<double>::zeros({C});
    Tensor<double> rv = Tensor<double>::filled({C}, 1.0);
    Tensor<double> y = batch_norm(x, gamma, beta, rm, rv, true);

    const size_t per_c = static_cast<size_t>(N) * H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0, batch_mean = 0.0, batch_var = 0.0;
        for (int n = 0; n < N; ++n)
            for (size_t j = 0; j < static_cast<size_t>(H) * W; ++j) {
                mean += y.data()[(n * C + c) * H * W + j];
                batch_mean += x.data()[(n * C + c) * H * W + j];
            }
        mean /= static_cast<double>(per_c);
        batch_mean /= static_cast<double>(per_c);
        for (int n = 0; n < N; ++n)
            for (size_t j = 0; j < static_cast<size_t>(H) * W; ++j) {
                var += std::pow(y.data()[(n * C + c) * H * W + j] - mean, 2);
                batch_var += std::pow(x.data()[(n * C + c) * H * W + j] - batch_mean, 2);
            }
        var /= static_cast<double>(per_c);
        // normalized output: zero mean, unit variance up to the eps term
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-4);
        // running stats: momentum 0.1, unbiased variance
        const double unbiased = batch_var / static_cast<double>(per_c - 1);
        CHECK(rm.data()[c] == doctest::Approx(0.1 * batch_mean).epsilon(1e-10));
        CHECK(rv.data()[c] == doctest::Approx(0.9 * 1.0 + 0.1 * unbiased).epsilon(1e-10));
    }
}

TEST_CASE("batch_norm eval mode applies the running statistics elementwise") {
    Tensor<double> x = Tensor<double>::from_data({1, 2, 1, 2}, {1.0, 3.0, -2.0, 4.0});
    Tensor<double> gamma = Tensor<double>::from_data({2}, {2.0, 0.5});
    Tensor<double> beta = Tensor<double>::from_data({2}, {1.0, -1.0});
    Tensor<double> rm = Tensor<double>::from_data({2}, {1.0, 2.0});
    Tensor<double> rv = Tensor<double>::from_data({2}, {4.0, 0.25});
    Tensor<double> y = batch_norm(x, gamma, beta, rm, rv, false);
    const double eps = 1e-5;
    CHECK(y.data()[0] == doctest::Approx(2.0 * (1.0 - 1.0) / std::sqrt(4.0 + eps) + 1.0));
    CHECK(y.data()[1] == doctest::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + eps) + 1.0));
    CHECK(y.data()[2] == doctest::Approx(0.5 * (-2.0 - 2.0) / std::sqrt(0.25 + eps) - 1.0));
    CHECK(y.data()[3] == doctest::Approx(0.5 * (4.0 - 2.0) / std::sqrt(0.25 + eps) - 1.0));
    // eval mode must not touch the running buffers
    CHECK(rm.data()[0] == 1.0);
    CHECK(rv.data()[1] == 0.25);
}

TEST_CASE("weight_norm rescales each output slice to its magnitude") {
    Rng rng(43);
    Tensor<double> v = Tensor<double>::randn({3, 2, 2, 2, 2}, rng);
    Tensor<double> g = Tensor<double>::from_data({3}, {2.0, 0.5, 1.5});
    Tensor<double> w = weight_norm(v, g);
    const size_t slice = v.numel() / 3;
    for (int o = 0; o < 3; ++o) {
        double norm = 0.0;
        for (size_t j = 0; j < slice; ++j) norm += w.data()[o * slice + j] * w.data()[o * slice + j];
        CHECK(std::sqrt(norm) == doctest::Approx(g.data()[o]).epsilon(1e-12));
    }

    // forward is invariant to the scale of the direction
    Tensor<double> v2 = scale(v, 3.0);
    Tensor<double> w2 = weight_norm(v2, g);
    for (size_t i = 0; i < w.numel(); ++i) CHECK(w.data()[i] == doctest::Approx(w2.data()[i]).epsilon(1e-12));
}

TEST_CASE("weight_norm rejects a zero direction slice") {
    Tensor<double> v = Tensor<double>::zeros({2, 3});
    v.data()[3] = 1.0;  // second row non-zero, first row zero
    Tensor<double> g = Tensor<double>::filled({2}, 1.0);
    CHECK_THROWS_AS(weight_norm(v, g), std::domain_error);
}

TEST_CASE("cross_entropy of uniform logits is ln(num_classes)") {
    const int C = 5, T = 2, H = 3, W = 3;
    Tensor<double> logits = Tensor<double>::filled({1, C, T, H, W}, 0.37);
    std::vector<int> labels(static_cast<size_t>(T) * H * W, 2);
    std::vector<double> fw = {1.0, 1.0};
    Tensor<double> loss = cross_entropy(logits, labels, fw);
    CHECK(loss.value() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy matches a hand-computed two-pixel case") {
    // logits for 2 classes over 2 pixels (T=1): p0=(1,0), p1=(0,2)
    Tensor<double> logits = Tensor<double>::from_data({1, 2, 1, 1, 2}, {1.0, 0.0, 0.0, 2.0});
    std::vector<int> labels = {0, 1};
    std::vector<double> fw = {1.0};
    Tensor<double> loss = cross_entropy(logits, labels, fw);
    const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    const double l1 = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(loss.value() == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-12));
}

TEST_CASE("cross_entropy leaves zero-weight frames with exactly zero gradient") {
    Rng rng(47);
    const int C = 3, T = 4, H = 2, W = 2;
    Tensor<double> logits = Tensor<double>::randn({1, C, T, H, W}, rng);
    logits.set_requires_grad(true);
    std::vector<int> labels(static_cast<size_t>(T) * H * W, 1);
    std::vector<double> fw = {0.0, 1.0, 0.0, 0.5};
    Tensor<double> loss = cross_entropy(logits, labels, fw);
    loss.backward();
    const size_t plane = H * W;
    const size_t tstride = T * plane;
    for (int c = 0; c < C; ++c)
        for (int t : {0, 2})
            for (size_t j = 0; j < plane; ++j)
                CHECK(logits.grad()[c * tstride + t * plane + j] == 0.0);
    // weighted frames do receive gradient
    double sum_abs = 0.0;
    for (size_t j = 0; j < plane; ++j) sum_abs += std::abs(logits.grad()[0 * tstride + 1 * plane + j]);
    CHECK(sum_abs > 0.0);
}

TEST_CASE("cross_entropy validates labels and weights") {
    Tensor<double> logits = Tensor<double>::zeros({1, 2, 1, 1, 1});
    CHECK_THROWS_AS(cross_entropy(logits, {5}, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(logits, {0}, std::vector<double>{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy(logits, {0, 0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("bilinear_upsample2d factor 2 matches the closed form on a 2x2 grid") {
    // align_corners=false: output pixel centers sample at (o+0.5)/2-0.5
    Tensor<double> x = Tensor<double>::from_data({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    Tensor<double> y = bilinear_upsample2d(x, 2);
    REQUIRE(y.dim(2) == 4);
    REQUIRE(y.dim(3) == 4);
    const double expected[16] = {0.0,  0.25, 0.75, 1.0,  0.5,  0.75, 1.25, 1.5,
                                 1.5,  1.75, 2.25, 2.5,  2.0,  2.25, 2.75, 3.0};
    for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("bilinear_upsample2d factor 1 is the identity") {
    Rng rng(53);
    Tensor<double> x = Tensor<double>::randn({2, 3, 4, 5}, rng);
    Tensor<double> y = bilinear_upsample2d(x, 1);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("adam matches two hand-computed steps on a single weight") {
    Tensor<double> p = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Tensor<double>> params = {p};
    Adam<double> opt;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    p.grad()[0] = 0.5;
    opt.step(params, lr);
    double m = 0.1 * 0.5, v = 0.001 * 0.25;
    double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    double expect = 1.0 - lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-12));

    p.grad()[0] = -0.25;
    opt.step(params, lr);
    m = b1 * m + (1 - b1) * (-0.25);
    v = b2 * v + (1 - b2) * 0.0625;
    mhat = m / (1 - std::pow(b1, 2.0));
    vhat = v / (1 - std::pow(b2, 2.0));
    expect -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam guards its inputs") {
    Tensor<double> p = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Tensor<double>> params = {p};
    Adam<double> opt;
    CHECK_THROWS_AS(opt.step(params, 0.0), std::invalid_argument);
    p.grad()[0] = 1.0;
    opt.step(params, 0.1);
    std::vector<Tensor<double>> two = {p, p};
    CHECK_THROWS_AS(opt.step(two, 0.1), std::invalid_argument);
}

TEST_CASE("onecycle schedule endpoints and peak") {
    const double max_lr = 2e-3;
    const int64_t total = 400;
    CHECK(onecycle_lr(0, total, max_lr) == doctest::Approx(max_lr / 25.0).epsilon(1e-12));
    const int64_t peak = std::llround(0.3 * total);
    CHECK(onecycle_lr(peak, total, max_lr) == doctest::Approx(max_lr).epsilon(1e-12));
    CHECK(onecycle_lr(total - 1, total, max_lr) == doctest::Approx(max_lr / 1e4).epsilon(1e-2));
    // monotone rise to the peak
    for (int64_t s = 1; s <= peak; ++s) CHECK(onecycle_lr(s, total, max_lr) >= onecycle_lr(s - 1, total, max_lr));
    CHECK_THROWS_AS(onecycle_lr(total, total, max_lr), std::invalid_argument);
    CHECK_THROWS_AS(onecycle_lr(-1, total, max_lr), std::invalid_argument);
}

TEST_CASE("grad_check validates a known-correct and detects a broken gradient") {
    Rng rng(59);
    // quadratic: exact gradients
    double ok = grad_check<double>(
        [](const Tensor<double>& t) { return sum_all(mul(t, t)); }, Tensor<double>::randn({6}, rng));
    CHECK(ok < 1e-8);

    // deliberately wrong backward: y = 2x claimed, x*x computed
    auto broken = [](const Tensor<double>& t) {
        auto n = t.node();
        Tensor<double> out = Tensor<double>::make_result({1}, {n}, [n](Tensor<double>::Node& self) {
            for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += self.grad[0] * 1.0;  // wrong by design
        });
        double s = 0.0;
        for (size_t i = 0; i < n->data.size(); ++i) s += n->data[i] * n->data[i];
        out.data()[0] = s;
        return out;
    };
    double bad = grad_check<double>(broken, Tensor<double>::randn({4}, rng));
    CHECK(bad > 1e-2);
}

TEST_CASE("permute moves data as a strided transpose") {
    Tensor<double> x = Tensor<double>::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor<double> y = permute(x, {1, 0});
    REQUIRE(y.shape() == Shape{3, 2});
    CHECK(y.data()[0] == 0);
    CHECK(y.data()[1] == 3);
    CHECK(y.data()[2] == 1);
    CHECK(y.data()[3] == 4);
    CHECK(y.data()[4] == 2);
    CHECK(y.data()[5] == 5);
}

TEST_CASE("reshape preserves data and rejects element-count changes") {
    Tensor<double> x = Tensor<double>::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor<double> y = reshape(x, {3, 2});
    for (int i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
    CHECK_THROWS_AS(reshape(x, {4, 2}), std::invalid_argument);
}
