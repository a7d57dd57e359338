#pragma once

#include <stdexcept>
#include <string>

#include "stseg/tensor.hpp"

namespace stseg {

// 2D convolution kernel. Weight layout (C_out, C_in, k_h, k_w).
template <typename T>
struct Conv2dKernel {
    Tensor<T> weight;
    Tensor<T> bias;
    int stride = 1;
    int pad = 0;
};

// 3D convolution kernel for (N, C, T, H, W) inputs. Weight layout
// (C_out, C_in, k_h, k_w, k_t); dilation applies to the temporal axis only,
// spatial stride is 1.
template <typename T>
struct Conv3dKernel {
    Tensor<T> weight;
    Tensor<T> bias;
    int dilation_t = 1;
    int pad_t = 0;
    int pad_y = 0;
    int pad_x = 0;
};

namespace detail {

// Output index range [lo, hi) such that lo*stride + tap - pad lands inside
// [0, in_size) for every index in the range.
inline void conv_range(int tap, int pad, int stride, int in_size, int out_size, int& lo, int& hi) {
    int num = pad - tap;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    int top = in_size - 1 + pad - tap;
    if (top < 0) {
        hi = lo;  // empty
        return;
    }
    hi = std::min(out_size - 1, top / stride) + 1;
    if (hi < lo) hi = lo;
}

inline int conv_out_dim(int in, int pad, int k, int dilation, int stride, const char* axis) {
    int span = dilation * (k - 1) + 1;
    int out = (in + 2 * pad - span) / stride + 1;
    if (in + 2 * pad < span || out < 1)
        throw std::invalid_argument(std::string("convolution produces empty output on ") + axis + " axis (input " +
                                    std::to_string(in) + ", kernel span " + std::to_string(span) + ", pad " +
                                    std::to_string(pad) + ")");
    return out;
}

}  // namespace detail

// out[n,o,y,x] = bias[o] + sum_{i,ky,kx} in[n,i,y*s+ky-p,x*s+kx-p] * w[o,i,ky,kx]
// with out-of-range input treated as zero.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Conv2dKernel<T>& k) {
    if (input.ndim() != 4)
        throw std::invalid_argument("conv2d: input must be (N,C,H,W), got " + shape_str(input.shape()));
    if (k.weight.ndim() != 4)
        throw std::invalid_argument("conv2d: weight must be (Co,Ci,Kh,Kw), got " + shape_str(k.weight.shape()));
    const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Co = k.weight.dim(0), Ky = k.weight.dim(2), Kx = k.weight.dim(3);
    if (k.weight.dim(1) != Ci)
        throw std::invalid_argument("conv2d: input has " + std::to_string(Ci) + " channels but kernel expects " +
                                    std::to_string(k.weight.dim(1)));
    if (k.bias.defined() && (k.bias.ndim() != 1 || k.bias.dim(0) != Co))
        throw std::invalid_argument("conv2d: bias must be (Co)");
    if (k.stride < 1 || k.pad < 0) throw std::invalid_argument("conv2d: stride must be >=1 and pad >=0");
    const int s = k.stride, p = k.pad;
    const int Ho = detail::conv_out_dim(H, p, Ky, 1, s, "height");
    const int Wo = detail::conv_out_dim(W, p, Kx, 1, s, "width");

    auto xw = input.node();
    auto ww = k.weight.node();
    auto bw = k.bias.defined() ? k.bias.node() : nullptr;

    auto run_forward = [=](const T* in, const T* wgt, const T* bias, T* out) {
        for (int n = 0; n < N; ++n) {
            for (int o = 0; o < Co; ++o) {
                T* out_plane = out + (static_cast<size_t>(n) * Co + o) * Ho * Wo;
                T bv = bias ? bias[o] : T(0);
                for (int j = 0; j < Ho * Wo; ++j) out_plane[j] = bv;
                for (int i = 0; i < Ci; ++i) {
                    const T* in_plane = in + (static_cast<size_t>(n) * Ci + i) * H * W;
                    const T* wslice = wgt + (static_cast<size_t>(o) * Ci + i) * Ky * Kx;
                    for (int ky = 0; ky < Ky; ++ky) {
                        int y0, y1;
                        detail::conv_range(ky, p, s, H, Ho, y0, y1);
                        for (int kx = 0; kx < Kx; ++kx) {
                            const T wv = wslice[ky * Kx + kx];
                            int x0, x1;
                            detail::conv_range(kx, p, s, W, Wo, x0, x1);
                            for (int y = y0; y < y1; ++y) {
                                const T* src = in_plane + (y * s + ky - p) * W + (x0 * s + kx - p);
                                T* dst = out_plane + y * Wo + x0;
                                const int len = x1 - x0;
                                for (int x = 0; x < len; ++x) dst[x] += wv * src[x * s];
                            }
                        }
                    }
                }
            }
        }
    };

    auto backward = [=](typename Tensor<T>::Node& self) {
        const T* go = self.grad.data();
        const T* in = xw->data.data();
        const T* wgt = ww->data.data();
        if (xw->requires_grad) {
            T* gi = xw->grad.data();
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < Ci; ++i) {
                    T* gi_plane = gi + (static_cast<size_t>(n) * Ci + i) * H * W;
                    for (int o = 0; o < Co; ++o) {
                        const T* go_plane = go + (static_cast<size_t>(n) * Co + o) * Ho * Wo;
                        const T* wslice = wgt + (static_cast<size_t>(o) * Ci + i) * Ky * Kx;
                        for (int ky = 0; ky < Ky; ++ky) {
                            int y0, y1;
                            detail::conv_range(ky, p, s, H, Ho, y0, y1);
                            for (int kx = 0; kx < Kx; ++kx) {
                                const T wv = wslice[ky * Kx + kx];
                                int x0, x1;
                                detail::conv_range(kx, p, s, W, Wo, x0, x1);
                                for (int y = y0; y < y1; ++y) {
                                    T* dst = gi_plane + (y * s + ky - p) * W + (x0 * s + kx - p);
                                    const T* src = go_plane + y * Wo + x0;
                                    const int len = x1 - x0;
                                    for (int x = 0; x < len; ++x) dst[x * s] += wv * src[x];
                                }
                            }
                        }
                    }
                }
        }
        if (ww->requires_grad) {
            T* gw = ww->grad.data();
            for (int o = 0; o < Co; ++o)
                for (int i = 0; i < Ci; ++i)
                    for (int ky = 0; ky < Ky; ++ky) {
                        int y0, y1;
                        detail::conv_range(ky, p, s, H, Ho, y0, y1);
                        for (int kx = 0; kx < Kx; ++kx) {
                            int x0, x1;
                            detail::conv_range(kx, p, s, W, Wo, x0, x1);
                            T acc = T(0);
                            for (int n = 0; n < N; ++n) {
                                const T* go_plane = go + (static_cast<size_t>(n) * Co + o) * Ho * Wo;
                                const T* in_plane = in + (static_cast<size_t>(n) * Ci + i) * H * W;
                                for (int y = y0; y < y1; ++y) {
                                    const T* src = in_plane + (y * s + ky - p) * W + (x0 * s + kx - p);
                                    const T* g = go_plane + y * Wo + x0;
                                    const int len = x1 - x0;
                                    for (int x = 0; x < len; ++x) acc += g[x] * src[x * s];
                                }
                            }
                            gw[(static_cast<size_t>(o) * Ci + i) * Ky * Kx + ky * Kx + kx] += acc;
                        }
                    }
        }
        if (bw && bw->requires_grad) {
            T* gb = bw->grad.data();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < Co; ++o) {
                    const T* go_plane = go + (static_cast<size_t>(n) * Co + o) * Ho * Wo;
                    T acc = T(0);
                    for (int j = 0; j < Ho * Wo; ++j) acc += go_plane[j];
                    gb[o] += acc;
                }
        }
    };

    std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents{xw, ww};
    if (bw) parents.push_back(bw);
    Tensor<T> out = Tensor<T>::make_result({N, Co, Ho, Wo}, std::move(parents), backward);
    run_forward(xw->data.data(), ww->data.data(), bw ? bw->data.data() : nullptr, out.data().data());
    return out;
}

// out[n,o,t,y,x] = bias[o] + sum_{i,ky,kx,kt}
//   in[n,i, t + kt*dilation_t - pad_t, y + ky - pad_y, x + kx - pad_x] * w[o,i,ky,kx,kt]
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Conv3dKernel<T>& k) {
    if (input.ndim() != 5)
        throw std::invalid_argument("conv3d: input must be (N,C,T,H,W), got " + shape_str(input.shape()));
    if (k.weight.ndim() != 5)
        throw std::invalid_argument("conv3d: weight must be (Co,Ci,Kh,Kw,Kt), got " + shape_str(k.weight.shape()));
    const int N = input.dim(0), Ci = input.dim(1), Tn = input.dim(2), H = input.dim(3), W = input.dim(4);
    const int Co = k.weight.dim(0), Ky = k.weight.dim(2), Kx = k.weight.dim(3), Kt = k.weight.dim(4);
    if (k.weight.dim(1) != Ci)
        throw std::invalid_argument("conv3d: input has " + std::to_string(Ci) + " channels but kernel expects " +
                                    std::to_string(k.weight.dim(1)));
    if (k.bias.defined() && (k.bias.ndim() != 1 || k.bias.dim(0) != Co))
        throw std::invalid_argument("conv3d: bias must be (Co)");
    if (k.dilation_t < 1 || k.pad_t < 0 || k.pad_y < 0 || k.pad_x < 0)
        throw std::invalid_argument("conv3d: dilation_t must be >=1, padding >=0");
    const int dt = k.dilation_t;
    const int To = detail::conv_out_dim(Tn, k.pad_t, Kt, dt, 1, "time");
    const int Ho = detail::conv_out_dim(H, k.pad_y, Ky, 1, 1, "height");
    const int Wo = detail::conv_out_dim(W, k.pad_x, Kx, 1, 1, "width");
    const int pt = k.pad_t, py = k.pad_y, px = k.pad_x;

    auto xw = input.node();
    auto ww = k.weight.node();
    auto bw = k.bias.defined() ? k.bias.node() : nullptr;

    auto widx = [=](int o, int i, int ky, int kx, int kt) {
        return (((static_cast<size_t>(o) * Ci + i) * Ky + ky) * Kx + kx) * Kt + kt;
    };

    auto run_forward = [=](const T* in, const T* wgt, const T* bias, T* out) {
        const size_t in_hw = static_cast<size_t>(H) * W;
        const size_t out_hw = static_cast<size_t>(Ho) * Wo;
        for (int n = 0; n < N; ++n) {
            for (int o = 0; o < Co; ++o) {
                T* out_vol = out + (static_cast<size_t>(n) * Co + o) * To * out_hw;
                T bv = bias ? bias[o] : T(0);
                for (size_t j = 0; j < To * out_hw; ++j) out_vol[j] = bv;
                for (int i = 0; i < Ci; ++i) {
                    const T* in_vol = in + (static_cast<size_t>(n) * Ci + i) * Tn * in_hw;
                    for (int kt = 0; kt < Kt; ++kt) {
                        int t0, t1;
                        detail::conv_range(kt * dt, pt, 1, Tn, To, t0, t1);
                        for (int ky = 0; ky < Ky; ++ky) {
                            int y0, y1;
                            detail::conv_range(ky, py, 1, H, Ho, y0, y1);
                            for (int kx = 0; kx < Kx; ++kx) {
                                const T wv = wgt[widx(o, i, ky, kx, kt)];
                                int x0, x1;
                                detail::conv_range(kx, px, 1, W, Wo, x0, x1);
                                const int len = x1 - x0;
                                for (int t = t0; t < t1; ++t) {
                                    const T* in_plane = in_vol + (t + kt * dt - pt) * in_hw;
                                    T* out_plane = out_vol + t * out_hw;
                                    for (int y = y0; y < y1; ++y) {
                                        const T* src = in_plane + (y + ky - py) * W + (x0 + kx - px);
                                        T* dst = out_plane + y * Wo + x0;
                                        for (int x = 0; x < len; ++x) dst[x] += wv * src[x];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };

    auto backward = [=](typename Tensor<T>::Node& self) {
        const T* go = self.grad.data();
        const T* in = xw->data.data();
        const T* wgt = ww->data.data();
        const size_t in_hw = static_cast<size_t>(H) * W;
        const size_t out_hw = static_cast<size_t>(Ho) * Wo;
        if (xw->requires_grad) {
            T* gi = xw->grad.data();
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < Ci; ++i) {
                    T* gi_vol = gi + (static_cast<size_t>(n) * Ci + i) * Tn * in_hw;
                    for (int o = 0; o < Co; ++o) {
                        const T* go_vol = go + (static_cast<size_t>(n) * Co + o) * To * out_hw;
                        for (int kt = 0; kt < Kt; ++kt) {
                            int t0, t1;
                            detail::conv_range(kt * dt, pt, 1, Tn, To, t0, t1);
                            for (int ky = 0; ky < Ky; ++ky) {
                                int y0, y1;
                                detail::conv_range(ky, py, 1, H, Ho, y0, y1);
                                for (int kx = 0; kx < Kx; ++kx) {
                                    const T wv = wgt[widx(o, i, ky, kx, kt)];
                                    int x0, x1;
                                    detail::conv_range(kx, px, 1, W, Wo, x0, x1);
                                    const int len = x1 - x0;
                                    for (int t = t0; t < t1; ++t) {
                                        T* gi_plane = gi_vol + (t + kt * dt - pt) * in_hw;
                                        const T* go_plane = go_vol + t * out_hw;
                                        for (int y = y0; y < y1; ++y) {
                                            T* dst = gi_plane + (y + ky - py) * W + (x0 + kx - px);
                                            const T* src = go_plane + y * Wo + x0;
                                            for (int x = 0; x < len; ++x) dst[x] += wv * src[x];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
        }
        if (ww->requires_grad) {
            T* gw = ww->grad.data();
            for (int o = 0; o < Co; ++o)
                for (int i = 0; i < Ci; ++i)
                    for (int kt = 0; kt < Kt; ++kt) {
                        int t0, t1;
                        detail::conv_range(kt * dt, pt, 1, Tn, To, t0, t1);
                        for (int ky = 0; ky < Ky; ++ky) {
                            int y0, y1;
                            detail::conv_range(ky, py, 1, H, Ho, y0, y1);
                            for (int kx = 0; kx < Kx; ++kx) {
                                int x0, x1;
                                detail::conv_range(kx, px, 1, W, Wo, x0, x1);
                                const int len = x1 - x0;
                                T acc = T(0);
                                for (int n = 0; n < N; ++n) {
                                    const T* go_vol = go + (static_cast<size_t>(n) * Co + o) * To * out_hw;
                                    const T* in_vol = in + (static_cast<size_t>(n) * Ci + i) * Tn * in_hw;
                                    for (int t = t0; t < t1; ++t) {
                                        const T* in_plane = in_vol + (t + kt * dt - pt) * in_hw;
                                        const T* go_plane = go_vol + t * out_hw;
                                        for (int y = y0; y < y1; ++y) {
                                            const T* src = in_plane + (y + ky - py) * W + (x0 + kx - px);
                                            const T* g = go_plane + y * Wo + x0;
                                            for (int x = 0; x < len; ++x) acc += g[x] * src[x];
                                        }
                                    }
                                }
                                gw[widx(o, i, ky, kx, kt)] += acc;
                            }
                        }
                    }
        }
        if (bw && bw->requires_grad) {
            T* gb = bw->grad.data();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < Co; ++o) {
                    const T* go_vol = go + (static_cast<size_t>(n) * Co + o) * To * out_hw;
                    T acc = T(0);
                    for (size_t j = 0; j < To * out_hw; ++j) acc += go_vol[j];
                    gb[o] += acc;
                }
        }
    };

    std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents{xw, ww};
    if (bw) parents.push_back(bw);
    Tensor<T> out = Tensor<T>::make_result({N, Co, To, Ho, Wo}, std::move(parents), backward);
    run_forward(xw->data.data(), ww->data.data(), bw ? bw->data.data() : nullptr, out.data().data());
    return out;
}

// Temporal padding that keeps T' == T for acausal same-length convolution.
inline int same_pad_t(int k_t, int dilation_t) {
    if (k_t % 2 == 0) throw std::invalid_argument("temporal kernel size must be odd, got " + std::to_string(k_t));
    return dilation_t * (k_t - 1) / 2;
}

}  // namespace stseg
