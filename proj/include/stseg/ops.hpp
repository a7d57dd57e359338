#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "stseg/tensor.hpp"

namespace stseg {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    auto backward = [an, bn](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        if (an->requires_grad) {
            T* ga = an->grad.data();
            for (size_t j = 0; j < self.numel(); ++j) ga[j] += g[j];
        }
        if (bn->requires_grad) {
            T* gb = bn->grad.data();
            for (size_t j = 0; j < self.numel(); ++j) gb[j] += g[j];
        }
    };
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {an, bn}, backward);
    T* o = out.data().data();
    const T* pa = an->data.data();
    const T* pb = bn->data.data();
    for (size_t j = 0; j < out.numel(); ++j) o[j] = pa[j] + pb[j];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    auto an = a.node(), bn = b.node();
    auto backward = [an, bn](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        if (an->requires_grad) {
            T* ga = an->grad.data();
            const T* pb = bn->data.data();
            for (size_t j = 0; j < self.numel(); ++j) ga[j] += g[j] * pb[j];
        }
        if (bn->requires_grad) {
            T* gb = bn->grad.data();
            const T* pa = an->data.data();
            for (size_t j = 0; j < self.numel(); ++j) gb[j] += g[j] * pa[j];
        }
    };
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {an, bn}, backward);
    T* o = out.data().data();
    const T* pa = an->data.data();
    const T* pb = bn->data.data();
    for (size_t j = 0; j < out.numel(); ++j) o[j] = pa[j] * pb[j];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    auto an = a.node();
    auto backward = [an, c](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        const T* g = self.grad.data();
        T* ga = an->grad.data();
        for (size_t j = 0; j < self.numel(); ++j) ga[j] += c * g[j];
    };
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {an}, backward);
    T* o = out.data().data();
    const T* pa = an->data.data();
    for (size_t j = 0; j < out.numel(); ++j) o[j] = c * pa[j];
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    auto an = a.node();
    auto backward = [an](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        const T g = self.grad[0];
        T* ga = an->grad.data();
        for (size_t j = 0; j < an->numel(); ++j) ga[j] += g;
    };
    Tensor<T> out = Tensor<T>::make_result({1}, {an}, backward);
    T acc = T(0);
    for (T v : a.data()) acc += v;
    out.data()[0] = acc;
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    auto an = a.node();
    auto backward = [an](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        const T* g = self.grad.data();
        const T* x = an->data.data();
        T* ga = an->grad.data();
        for (size_t j = 0; j < self.numel(); ++j)
            if (x[j] > T(0)) ga[j] += g[j];
    };
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {an}, backward);
    T* o = out.data().data();
    const T* pa = an->data.data();
    for (size_t j = 0; j < out.numel(); ++j) o[j] = pa[j] > T(0) ? pa[j] : T(0);
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
    auto an = a.node();
    auto backward = [an](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        const T* g = self.grad.data();
        T* ga = an->grad.data();
        for (size_t j = 0; j < self.numel(); ++j) ga[j] += g[j];
    };
    Tensor<T> out = Tensor<T>::make_result(std::move(new_shape), {an}, backward);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    return out;
}

namespace detail {

inline std::vector<size_t> row_major_strides(const Shape& s) {
    std::vector<size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * static_cast<size_t>(s[i + 1]);
    return st;
}

// copies src into dst where dst index = permutation of src index
template <typename T, typename F>
void permute_copy(const Shape& src_shape, const std::vector<int>& axes, const T* src, T* dst, F&& assign) {
    const int nd = static_cast<int>(src_shape.size());
    Shape out_shape(nd);
    for (int i = 0; i < nd; ++i) out_shape[i] = src_shape[axes[i]];
    auto sst = row_major_strides(src_shape);
    auto dstst = row_major_strides(out_shape);
    std::vector<size_t> src_stride_for_out(nd);
    for (int i = 0; i < nd; ++i) src_stride_for_out[i] = sst[axes[i]];
    std::vector<int> idx(nd, 0);
    size_t total = 1;
    for (int d : src_shape) total *= static_cast<size_t>(d);
    size_t soff = 0;
    for (size_t flat = 0; flat < total; ++flat) {
        assign(dst[flat], src[soff]);
        for (int i = nd - 1; i >= 0; --i) {
            idx[i]++;
            soff += src_stride_for_out[i];
            if (idx[i] < out_shape[i]) break;
            soff -= src_stride_for_out[i] * static_cast<size_t>(out_shape[i]);
            idx[i] = 0;
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    const int nd = a.ndim();
    if (static_cast<int>(axes.size()) != nd) throw std::invalid_argument("permute: axes rank mismatch");
    std::vector<bool> used(nd, false);
    Shape out_shape(nd);
    for (int i = 0; i < nd; ++i) {
        if (axes[i] < 0 || axes[i] >= nd || used[axes[i]]) throw std::invalid_argument("permute: invalid axes");
        used[axes[i]] = true;
        out_shape[i] = a.dim(axes[i]);
    }
    auto an = a.node();
    Shape src_shape = a.shape();
    auto backward = [an, src_shape, axes](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        // walk the permuted grad while advancing the source offset with the
        // permuted strides, accumulating into the source position
        const int nd2 = static_cast<int>(src_shape.size());
        Shape out_shape2(nd2);
        for (int i = 0; i < nd2; ++i) out_shape2[i] = src_shape[axes[i]];
        auto sst = detail::row_major_strides(src_shape);
        std::vector<size_t> src_stride_for_out(nd2);
        for (int i = 0; i < nd2; ++i) src_stride_for_out[i] = sst[axes[i]];
        std::vector<int> idx(nd2, 0);
        size_t soff = 0;
        const T* g = self.grad.data();
        T* ga = an->grad.data();
        for (size_t flat = 0; flat < self.numel(); ++flat) {
            ga[soff] += g[flat];
            for (int i = nd2 - 1; i >= 0; --i) {
                idx[i]++;
                soff += src_stride_for_out[i];
                if (idx[i] < out_shape2[i]) break;
                soff -= src_stride_for_out[i] * static_cast<size_t>(out_shape2[i]);
                idx[i] = 0;
            }
        }
    };
    Tensor<T> out = Tensor<T>::make_result(out_shape, {an}, backward);
    detail::permute_copy<T>(src_shape, axes, an->data.data(), out.data().data(),
                            [](T& d, const T& s) { d = s; });
    return out;
}

// softmax along `axis`; numerically stable (max subtraction)
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    const int nd = a.ndim();
    if (axis < 0 || axis >= nd) throw std::invalid_argument("softmax: axis out of range");
    const int C = a.dim(axis);
    size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < nd; ++i) inner *= static_cast<size_t>(a.dim(i));
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(a.dim(i));

    auto an = a.node();
    auto backward = [an, C, inner, outer](typename Tensor<T>::Node& self) {
        if (!an->requires_grad) return;
        const T* y = self.data.data();
        const T* g = self.grad.data();
        T* ga = an->grad.data();
        for (size_t ou = 0; ou < outer; ++ou)
            for (size_t in = 0; in < inner; ++in) {
                const size_t base = ou * C * inner + in;
                T dot = T(0);
                for (int c = 0; c < C; ++c) dot += g[base + c * inner] * y[base + c * inner];
                for (int c = 0; c < C; ++c) {
                    const size_t j = base + c * inner;
                    ga[j] += y[j] * (g[j] - dot);
                }
            }
    };
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {an}, backward);
    const T* x = an->data.data();
    T* y = out.data().data();
    for (size_t ou = 0; ou < outer; ++ou)
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = ou * C * inner + in;
            T mx = x[base];
            for (int c = 1; c < C; ++c) mx = std::max(mx, x[base + c * inner]);
            T denom = T(0);
            for (int c = 0; c < C; ++c) {
                const size_t j = base + c * inner;
                y[j] = std::exp(x[j] - mx);
                denom += y[j];
            }
            const T invd = T(1) / denom;
            for (int c = 0; c < C; ++c) y[base + c * inner] *= invd;
        }
    return out;
}

// Batch normalization over all axes except axis 1 (channels) of an (N,C,...)
// tensor. Train mode normalizes with batch statistics and updates the running
// buffers in place (momentum update, unbiased variance); eval mode uses the
// running buffers. gamma/beta are learnable per-channel scale and shift.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
    if (x.ndim() < 2) throw std::invalid_argument("batch_norm: input must be at least (N,C)");
    const int C = x.dim(1);
    auto check_c = [&](const Tensor<T>& t, const char* name) {
        if (t.ndim() != 1 || t.dim(0) != C)
            throw std::invalid_argument(std::string("batch_norm: ") + name + " must have shape (" +
                                        std::to_string(C) + ")");
    };
    check_c(gamma, "gamma");
    check_c(beta, "beta");
    check_c(running_mean, "running_mean");
    check_c(running_var, "running_var");

    const int N = x.dim(0);
    size_t inner = 1;
    for (int i = 2; i < x.ndim(); ++i) inner *= static_cast<size_t>(x.dim(i));
    const size_t m = static_cast<size_t>(N) * inner;  // reduction count per channel
    if (m == 0) throw std::invalid_argument("batch_norm: empty reduction");

    std::vector<T> mean(C), inv_std(C);
    const T* xd = x.data().data();
    if (training) {
        for (int c = 0; c < C; ++c) {
            T acc = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = xd + (static_cast<size_t>(n) * C + c) * inner;
                for (size_t j = 0; j < inner; ++j) acc += p[j];
            }
            const T mu = acc / static_cast<T>(m);
            T var = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = xd + (static_cast<size_t>(n) * C + c) * inner;
                for (size_t j = 0; j < inner; ++j) {
                    const T d = p[j] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<T>(m);
            mean[c] = mu;
            inv_std[c] = T(1) / std::sqrt(var + eps);
            // running buffers track the unbiased variance
            const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
            running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * mu;
            running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            inv_std[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto backward = [xn, gn, bn, mean, inv_std, training, C, N, inner, m](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        const T* xd2 = xn->data.data();
        const T* gam = gn->data.data();
        std::vector<T> sum_g(C, T(0)), sum_gxhat(C, T(0));
        for (int c = 0; c < C; ++c) {
            T sg = T(0), sgx = T(0);
            for (int n = 0; n < N; ++n) {
                const size_t base = (static_cast<size_t>(n) * C + c) * inner;
                for (size_t j = 0; j < inner; ++j) {
                    const T xhat = (xd2[base + j] - mean[c]) * inv_std[c];
                    sg += g[base + j];
                    sgx += g[base + j] * xhat;
                }
            }
            sum_g[c] = sg;
            sum_gxhat[c] = sgx;
        }
        if (gn->requires_grad)
            for (int c = 0; c < C; ++c) gn->grad[c] += sum_gxhat[c];
        if (bn->requires_grad)
            for (int c = 0; c < C; ++c) bn->grad[c] += sum_g[c];
        if (xn->requires_grad) {
            T* gx = xn->grad.data();
            for (int c = 0; c < C; ++c) {
                const T k = gam[c] * inv_std[c];
                if (training) {
                    const T mg = sum_g[c] / static_cast<T>(m);
                    const T mgx = sum_gxhat[c] / static_cast<T>(m);
                    for (int n = 0; n < N; ++n) {
                        const size_t base = (static_cast<size_t>(n) * C + c) * inner;
                        for (size_t j = 0; j < inner; ++j) {
                            const T xhat = (xd2[base + j] - mean[c]) * inv_std[c];
                            gx[base + j] += k * (g[base + j] - mg - xhat * mgx);
                        }
                    }
                } else {
                    for (int n = 0; n < N; ++n) {
                        const size_t base = (static_cast<size_t>(n) * C + c) * inner;
                        for (size_t j = 0; j < inner; ++j) gx[base + j] += k * g[base + j];
                    }
                }
            }
        }
    };

    Tensor<T> out = Tensor<T>::make_result(x.shape(), {xn, gn, bn}, backward);
    T* y = out.data().data();
    const T* gam = gamma.data().data();
    const T* bet = beta.data().data();
    for (int c = 0; c < C; ++c) {
        const T mu = mean[c], inv = inv_std[c], ga = gam[c], be = bet[c];
        for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * inner;
            for (size_t j = 0; j < inner; ++j) y[base + j] = (xd[base + j] - mu) * inv * ga + be;
        }
    }
    return out;
}

// Weight normalization: w_o = magnitude[o] * direction[o] / ||direction[o]||_2,
// per output channel (axis 0 of direction).
template <typename T>
Tensor<T> weight_norm(const Tensor<T>& direction, const Tensor<T>& magnitude, T eps = T(1e-12)) {
    if (direction.ndim() < 2) throw std::invalid_argument("weight_norm: direction must have rank >= 2");
    const int Co = direction.dim(0);
    if (magnitude.ndim() != 1 || magnitude.dim(0) != Co)
        throw std::invalid_argument("weight_norm: magnitude must have one scalar per output channel");
    const size_t slice = direction.numel() / static_cast<size_t>(Co);

    std::vector<T> norms(Co);
    const T* v = direction.data().data();
    for (int o = 0; o < Co; ++o) {
        T acc = T(0);
        const T* p = v + static_cast<size_t>(o) * slice;
        for (size_t j = 0; j < slice; ++j) acc += p[j] * p[j];
        const T nrm = std::sqrt(acc);
        if (!(nrm > eps))
            throw std::domain_error("weight_norm: direction slice " + std::to_string(o) +
                                    " has vanishing norm (" + std::to_string(static_cast<double>(nrm)) + ")");
        norms[o] = nrm;
    }

    auto vn = direction.node();
    auto gn = magnitude.node();
    auto backward = [vn, gn, norms, Co, slice](typename Tensor<T>::Node& self) {
        const T* g = self.grad.data();
        const T* v2 = vn->data.data();
        const T* mag = gn->data.data();
        for (int o = 0; o < Co; ++o) {
            const T* vo = v2 + static_cast<size_t>(o) * slice;
            const T* go = g + static_cast<size_t>(o) * slice;
            const T inv = T(1) / norms[o];
            T dot = T(0);  // g . v / ||v||
            for (size_t j = 0; j < slice; ++j) dot += go[j] * vo[j];
            dot *= inv;
            if (gn->requires_grad) gn->grad[o] += dot;
            if (vn->requires_grad) {
                T* gv = vn->grad.data() + static_cast<size_t>(o) * slice;
                const T k = mag[o] * inv;
                for (size_t j = 0; j < slice; ++j) gv[j] += k * (go[j] - vo[j] * inv * dot);
            }
        }
    };

    Tensor<T> out = Tensor<T>::make_result(direction.shape(), {vn, gn}, backward);
    T* w = out.data().data();
    const T* mag = magnitude.data().data();
    for (int o = 0; o < Co; ++o) {
        const T k = mag[o] / norms[o];
        const T* p = v + static_cast<size_t>(o) * slice;
        T* q = w + static_cast<size_t>(o) * slice;
        for (size_t j = 0; j < slice; ++j) q[j] = k * p[j];
    }
    return out;
}

// Cross entropy with per-frame weights. logits is (N,C,T,H,W) or (C,T,H,W);
// labels holds class ids in (N,T,H,W) order; frame_weights has length T.
// Loss = sum over pixels of w_t * (-log softmax(logits)[label]) divided by
// the weighted pixel count. Frames with weight 0 contribute exactly zero
// gradient.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, const std::vector<T>& frame_weights) {
    Shape s = logits.shape();
    int N = 1, off = 0;
    if (s.size() == 5) {
        N = s[0];
        off = 1;
    } else if (s.size() != 4) {
        throw std::invalid_argument("cross_entropy: logits must be (C,T,H,W) or (N,C,T,H,W), got " + shape_str(s));
    }
    const int C = s[off], Tn = s[off + 1], H = s[off + 2], W = s[off + 3];
    if (static_cast<int>(frame_weights.size()) != Tn)
        throw std::invalid_argument("cross_entropy: frame_weights length must equal T");
    const size_t plane = static_cast<size_t>(H) * W;
    const size_t pix_per_item = static_cast<size_t>(Tn) * plane;
    if (labels.size() != static_cast<size_t>(N) * pix_per_item)
        throw std::invalid_argument("cross_entropy: labels size mismatch");
    for (int l : labels)
        if (l < 0 || l >= C)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) + " outside [0," +
                                        std::to_string(C) + ")");
    T denom = T(0);
    for (int t = 0; t < Tn; ++t) denom += frame_weights[t] * static_cast<T>(N) * static_cast<T>(plane);
    if (!(denom > T(0))) throw std::invalid_argument("cross_entropy: total frame weight is zero");

    auto ln = logits.node();
    const size_t cstride = pix_per_item;  // stride between classes in a (C,T,H,W) block

    auto backward = [ln, labels, frame_weights, N, C, Tn, plane, cstride, denom](typename Tensor<T>::Node& self) {
        if (!ln->requires_grad) return;
        const T go = self.grad[0];
        const T* z = ln->data.data();
        T* gz = ln->grad.data();
        std::vector<T> probs(C);
        for (int n = 0; n < N; ++n) {
            const size_t item = static_cast<size_t>(n) * C * cstride;
            for (int t = 0; t < Tn; ++t) {
                const T w = frame_weights[t];
                if (w == T(0)) continue;  // exact zero gradient for masked frames
                for (size_t j = 0; j < plane; ++j) {
                    const size_t pos = static_cast<size_t>(t) * plane + j;
                    T mx = z[item + pos];
                    for (int c = 1; c < C; ++c) mx = std::max(mx, z[item + c * cstride + pos]);
                    T sum = T(0);
                    for (int c = 0; c < C; ++c) {
                        probs[c] = std::exp(z[item + c * cstride + pos] - mx);
                        sum += probs[c];
                    }
                    const int lab = labels[static_cast<size_t>(n) * Tn * plane + pos];
                    const T k = go * w / denom;
                    for (int c = 0; c < C; ++c) {
                        T p = probs[c] / sum;
                        gz[item + c * cstride + pos] += k * (p - (c == lab ? T(1) : T(0)));
                    }
                }
            }
        }
    };

    Tensor<T> out = Tensor<T>::make_result({1}, {ln}, backward);
    const T* z = logits.data().data();
    T loss = T(0);
    for (int n = 0; n < N; ++n) {
        const size_t item = static_cast<size_t>(n) * C * cstride;
        for (int t = 0; t < Tn; ++t) {
            const T w = frame_weights[t];
            if (w == T(0)) continue;
            for (size_t j = 0; j < plane; ++j) {
                const size_t pos = static_cast<size_t>(t) * plane + j;
                T mx = z[item + pos];
                for (int c = 1; c < C; ++c) mx = std::max(mx, z[item + c * cstride + pos]);
                T lse = T(0);
                for (int c = 0; c < C; ++c) lse += std::exp(z[item + c * cstride + pos] - mx);
                lse = std::log(lse) + mx;
                const int lab = labels[static_cast<size_t>(n) * Tn * plane + pos];
                loss += w * (lse - z[item + lab * cstride + pos]);
            }
        }
    }
    out.data()[0] = loss / denom;
    return out;
}

// 2D variant for per-frame heads: logits (N,C,H,W), labels (N,H,W), all
// pixels weighted 1.
template <typename T>
Tensor<T> cross_entropy2d(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 4)
        throw std::invalid_argument("cross_entropy2d: logits must be (N,C,H,W), got " + shape_str(logits.shape()));
    Shape s = logits.shape();
    Tensor<T> as5d = reshape(logits, {s[0], s[1], 1, s[2], s[3]});
    return cross_entropy(as5d, labels, std::vector<T>{T(1)});
}

// Bilinear upsampling of the last two axes by an integer factor,
// align_corners=false. factor 1 is the identity.
template <typename T>
Tensor<T> bilinear_upsample2d(const Tensor<T>& x, int factor) {
    if (factor < 1) throw std::invalid_argument("bilinear_upsample2d: factor must be >= 1");
    if (x.ndim() < 2) throw std::invalid_argument("bilinear_upsample2d: input must have rank >= 2");
    const int nd = x.ndim();
    const int H = x.dim(nd - 2), W = x.dim(nd - 1);
    const int Ho = H * factor, Wo = W * factor;
    size_t planes = 1;
    for (int i = 0; i < nd - 2; ++i) planes *= static_cast<size_t>(x.dim(i));

    // per-output-coordinate source taps (align_corners=false, edge-clamped)
    struct Tap {
        int lo, hi;
        T w_hi;
    };
    auto make_taps = [factor](int out_size, int in_size) {
        std::vector<Tap> taps(out_size);
        for (int o = 0; o < out_size; ++o) {
            double src = (o + 0.5) / factor - 0.5;
            int lo = static_cast<int>(std::floor(src));
            double w = src - lo;
            int hi = lo + 1;
            lo = std::clamp(lo, 0, in_size - 1);
            hi = std::clamp(hi, 0, in_size - 1);
            taps[o] = {lo, hi, static_cast<T>(w)};
        }
        return taps;
    };
    auto ytaps = make_taps(Ho, H);
    auto xtaps = make_taps(Wo, W);

    auto xn = x.node();
    auto backward = [xn, ytaps, xtaps, planes, H, W, Ho, Wo](typename Tensor<T>::Node& self) {
        if (!xn->requires_grad) return;
        const T* g = self.grad.data();
        T* gx = xn->grad.data();
        for (size_t pl = 0; pl < planes; ++pl) {
            const T* gp = g + pl * Ho * Wo;
            T* gxp = gx + pl * H * W;
            for (int y = 0; y < Ho; ++y) {
                const Tap& ty = ytaps[y];
                for (int xo = 0; xo < Wo; ++xo) {
                    const Tap& tx = xtaps[xo];
                    const T gv = gp[y * Wo + xo];
                    gxp[ty.lo * W + tx.lo] += (T(1) - ty.w_hi) * (T(1) - tx.w_hi) * gv;
                    gxp[ty.lo * W + tx.hi] += (T(1) - ty.w_hi) * tx.w_hi * gv;
                    gxp[ty.hi * W + tx.lo] += ty.w_hi * (T(1) - tx.w_hi) * gv;
                    gxp[ty.hi * W + tx.hi] += ty.w_hi * tx.w_hi * gv;
                }
            }
        }
    };

    Shape out_shape = x.shape();
    out_shape[nd - 2] = Ho;
    out_shape[nd - 1] = Wo;
    Tensor<T> out = Tensor<T>::make_result(std::move(out_shape), {xn}, backward);
    const T* src = x.data().data();
    T* dst = out.data().data();
    for (size_t pl = 0; pl < planes; ++pl) {
        const T* sp = src + pl * H * W;
        T* dp = dst + pl * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            const Tap& ty = ytaps[y];
            const T* r0 = sp + ty.lo * W;
            const T* r1 = sp + ty.hi * W;
            for (int xo = 0; xo < Wo; ++xo) {
                const Tap& tx = xtaps[xo];
                const T top = (T(1) - tx.w_hi) * r0[tx.lo] + tx.w_hi * r0[tx.hi];
                const T bot = (T(1) - tx.w_hi) * r1[tx.lo] + tx.w_hi * r1[tx.hi];
                dp[y * Wo + xo] = (T(1) - ty.w_hi) * top + ty.w_hi * bot;
            }
        }
    }
    return out;
}

}  // namespace stseg
