#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stseg/conv.hpp"
#include "stseg/ops.hpp"
#include "stseg/tensor.hpp"
#include "stseg/util.hpp"

namespace stseg {

// Hyperparameters of the temporal decoder and the encoder stand-in.
struct DecoderConfig {
    int num_layers = 4;        // N dilated residual layers, dilation 2^i
    int temporal_kernel = 3;   // k_t (odd)
    int feature_size = 128;    // decoder channel width F
    int temporal_window = 14;  // frames per forward pass
    int num_classes = 4;
    int spatial_downsample = 4;            // encoder stride product
    std::vector<int> encoder_widths = {32, 64};  // stage widths before the final F-channel stage

    int central_frame() const { return temporal_window / 2; }

    void validate() const {
        if (num_layers < 1) throw std::invalid_argument("config: num_layers must be >= 1");
        if (temporal_kernel < 3 || temporal_kernel % 2 == 0)
            throw std::invalid_argument("config: temporal_kernel must be odd and >= 3");
        if (feature_size < 1) throw std::invalid_argument("config: feature_size must be >= 1");
        if (temporal_window < 2) throw std::invalid_argument("config: temporal_window must be >= 2");
        if (num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
        int ds = 1;
        for (size_t i = 0; i < encoder_widths.size(); ++i) ds *= 2;
        if (ds != spatial_downsample)
            throw std::invalid_argument("config: spatial_downsample must be 2^(number of encoder stages - 1); got " +
                                        std::to_string(spatial_downsample) + " with " +
                                        std::to_string(encoder_widths.size() + 1) + " stages");
        for (int w : encoder_widths)
            if (w < 1) throw std::invalid_argument("config: encoder widths must be positive");
    }

    int dilation_of_layer(int i) const {
        if (i < 0 || i >= num_layers) throw std::invalid_argument("config: layer index out of range");
        return 1 << i;
    }
};

// Temporal receptive field of the decoder in frames: the dilated stack
// contributes 1 + (k_t-1)(2^N - 1) and each plain conv block adds k_t-1;
// pointwise convolutions add nothing.
inline int receptive_field(int num_layers, int k_t) {
    if (num_layers < 1) throw std::invalid_argument("receptive_field: num_layers must be >= 1");
    if (k_t < 1 || k_t % 2 == 0) throw std::invalid_argument("receptive_field: k_t must be odd");
    return 1 + (k_t - 1) * ((1 << num_layers) - 1) + 2 * (k_t - 1);
}

// Named parameter collection. Insertion order is stable so checkpoints and
// optimizer state stay aligned. Buffers (running statistics) are stored
// alongside trainable tensors but excluded from the optimizer list.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable;
    };

    Tensor<T>& add(const std::string& name, Tensor<T> t, bool trainable) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        t.set_requires_grad(trainable);
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(t), trainable});
        return entries_.back().tensor;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
        return entries_[it->second].tensor;
    }
    const Tensor<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
        return entries_[it->second].tensor;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    std::vector<Tensor<T>> trainable() {
        std::vector<Tensor<T>> out;
        for (auto& e : entries_)
            if (e.trainable) out.push_back(e.tensor);
        return out;
    }

    void zero_grads() {
        for (auto& e : entries_)
            if (e.trainable) e.tensor.zero_grad();
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, size_t> index_;
};

enum class ModelKind { TemporalDecoder, SingleFrameBaseline };

inline const char* model_kind_name(ModelKind k) {
    return k == ModelKind::TemporalDecoder ? "sptcn" : "baseline";
}

// The full model: per-frame encoder plus either the SP-TCN temporal decoder
// or a single-frame segmentation head of the same channel budget.
template <typename T>
struct Model {
    DecoderConfig config;
    ModelKind kind = ModelKind::TemporalDecoder;
    ParamStore<T> params;
    bool training = false;
};

namespace detail {

template <typename T>
Tensor<T> he_conv_weight(Shape shape, Rng& rng) {
    size_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= static_cast<size_t>(shape[i]);
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    return Tensor<T>::randn(std::move(shape), rng, stddev);
}

template <typename T>
void add_bn_params(ParamStore<T>& ps, const std::string& prefix, int channels) {
    ps.add(prefix + ".gamma", Tensor<T>::filled({channels}, T(1)), true);
    ps.add(prefix + ".beta", Tensor<T>::zeros({channels}), true);
    ps.add(prefix + ".running_mean", Tensor<T>::zeros({channels}), false);
    ps.add(prefix + ".running_var", Tensor<T>::filled({channels}, T(1)), false);
}

}  // namespace detail

template <typename T>
Model<T> init_model(const DecoderConfig& cfg, ModelKind kind, uint64_t seed) {
    cfg.validate();
    Model<T> model;
    model.config = cfg;
    model.kind = kind;
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    auto& ps = model.params;

    // encoder: stage widths ... -> F, stride 1 then 2 per subsequent stage
    std::vector<int> widths = cfg.encoder_widths;
    widths.push_back(cfg.feature_size);
    int in_ch = 3;
    for (size_t k = 0; k < widths.size(); ++k) {
        const std::string prefix = "encoder.stage" + std::to_string(k);
        ps.add(prefix + ".conv.weight", detail::he_conv_weight<T>({widths[k], in_ch, 3, 3}, rng), true);
        ps.add(prefix + ".conv.bias", Tensor<T>::zeros({widths[k]}), true);
        detail::add_bn_params(ps, prefix + ".bn", widths[k]);
        in_ch = widths[k];
    }

    const int F = cfg.feature_size, kt = cfg.temporal_kernel, C = cfg.num_classes;
    if (kind == ModelKind::TemporalDecoder) {
        ps.add("decoder.in.conv.weight", detail::he_conv_weight<T>({F, F, 3, 3, kt}, rng), true);
        ps.add("decoder.in.conv.bias", Tensor<T>::zeros({F}), true);
        for (int i = 0; i < cfg.num_layers; ++i) {
            const std::string prefix = "decoder.res" + std::to_string(i);
            Tensor<T> dir = detail::he_conv_weight<T>({F, F, 3, 3, kt}, rng);
            // magnitude starts at the per-channel norm so the effective
            // weights equal the raw initialization
            Tensor<T> mag = Tensor<T>::zeros({F});
            const size_t slice = dir.numel() / static_cast<size_t>(F);
            for (int o = 0; o < F; ++o) {
                T acc = T(0);
                const T* p = dir.data().data() + static_cast<size_t>(o) * slice;
                for (size_t j = 0; j < slice; ++j) acc += p[j] * p[j];
                mag.data()[o] = std::sqrt(acc);
            }
            ps.add(prefix + ".dconv.direction", std::move(dir), true);
            ps.add(prefix + ".dconv.magnitude", std::move(mag), true);
            ps.add(prefix + ".dconv.bias", Tensor<T>::zeros({F}), true);
            detail::add_bn_params(ps, prefix + ".bn", F);
            ps.add(prefix + ".pw.weight", detail::he_conv_weight<T>({F, F, 1, 1, 1}, rng), true);
            ps.add(prefix + ".pw.bias", Tensor<T>::zeros({F}), true);
        }
        ps.add("decoder.out.conv.weight", detail::he_conv_weight<T>({F, F, 3, 3, kt}, rng), true);
        ps.add("decoder.out.conv.bias", Tensor<T>::zeros({F}), true);
        ps.add("decoder.seg.weight", detail::he_conv_weight<T>({C, F, 1, 1, 1}, rng), true);
        ps.add("decoder.seg.bias", Tensor<T>::zeros({C}), true);
    } else {
        ps.add("head.conv.weight", detail::he_conv_weight<T>({F, F, 3, 3}, rng), true);
        ps.add("head.conv.bias", Tensor<T>::zeros({F}), true);
        detail::add_bn_params(ps, "head.bn", F);
        ps.add("head.seg.weight", detail::he_conv_weight<T>({C, F, 1, 1}, rng), true);
        ps.add("head.seg.bias", Tensor<T>::zeros({C}), true);
    }
    return model;
}

// Encoder over a batch of frames: (M,3,H,W) with values in [0,255] ->
// (M,F,H/ds,W/ds). Stateless per frame in eval mode.
template <typename T>
Tensor<T> encode_frames(Model<T>& model, const Tensor<T>& frames) {
    if (frames.ndim() != 4 || frames.dim(1) != 3)
        throw std::invalid_argument("encode_frames: input must be (M,3,H,W), got " + shape_str(frames.shape()));
    Tensor<T> h = scale(frames, T(1) / T(255));
    const size_t stages = model.config.encoder_widths.size() + 1;
    for (size_t k = 0; k < stages; ++k) {
        const std::string prefix = "encoder.stage" + std::to_string(k);
        Conv2dKernel<T> kernel{model.params.get(prefix + ".conv.weight"), model.params.get(prefix + ".conv.bias"),
                               k == 0 ? 1 : 2, 1};
        h = conv2d(h, kernel);
        h = batch_norm(h, model.params.get(prefix + ".bn.gamma"), model.params.get(prefix + ".bn.beta"),
                       model.params.get(prefix + ".bn.running_mean"), model.params.get(prefix + ".bn.running_var"),
                       model.training);
        h = relu(h);
    }
    return h;
}

// Single-frame convenience wrapper: (3,H,W) -> (F,H',W'), eval mode.
template <typename T>
Tensor<T> encode_frame(Model<T>& model, const Tensor<T>& frame) {
    if (frame.ndim() != 3 || frame.dim(0) != 3)
        throw std::invalid_argument("encode_frame: input must be (3,H,W), got " + shape_str(frame.shape()));
    NoGradGuard ng;
    const bool was_training = model.training;
    model.training = false;
    Tensor<T> batched = reshape(frame, {1, 3, frame.dim(1), frame.dim(2)});
    Tensor<T> feats = encode_frames(model, batched);
    model.training = was_training;
    return reshape(feats, {feats.dim(1), feats.dim(2), feats.dim(3)});
}

// One dilated residual layer (dilation 2^i):
// out = z + Pointwise(ReLU(BatchNorm(WeightNormedDilatedConv(z))))
template <typename T>
Tensor<T> dilated_residual_layer(Model<T>& model, const Tensor<T>& z, int layer_index) {
    const auto& cfg = model.config;
    const int dilation = cfg.dilation_of_layer(layer_index);
    const std::string prefix = "decoder.res" + std::to_string(layer_index);
    Tensor<T> eff = weight_norm(model.params.get(prefix + ".dconv.direction"),
                                model.params.get(prefix + ".dconv.magnitude"));
    Conv3dKernel<T> dconv{eff, model.params.get(prefix + ".dconv.bias"), dilation,
                          same_pad_t(cfg.temporal_kernel, dilation), 1, 1};
    Tensor<T> h = conv3d(z, dconv);
    h = batch_norm(h, model.params.get(prefix + ".bn.gamma"), model.params.get(prefix + ".bn.beta"),
                   model.params.get(prefix + ".bn.running_mean"), model.params.get(prefix + ".bn.running_var"),
                   model.training);
    h = relu(h);
    Conv3dKernel<T> pw{model.params.get(prefix + ".pw.weight"), model.params.get(prefix + ".pw.bias"), 1, 0, 0, 0};
    h = conv3d(h, pw);
    return add(z, h);
}

// SP-TCN decoder over a batched feature stack (N,F,T,H',W') -> logits
// (N,C,T,H,W): plain 3D conv block, N dilated residual layers, plain 3D
// conv block, then a 1x1x1 segmentation conv and per-frame upsampling back
// to input resolution.
template <typename T>
Tensor<T> decode_temporal_batch(Model<T>& model, const Tensor<T>& z) {
    const auto& cfg = model.config;
    if (model.kind != ModelKind::TemporalDecoder)
        throw std::logic_error("decode_temporal: model has no temporal decoder");
    if (z.ndim() != 5 || z.dim(1) != cfg.feature_size)
        throw std::invalid_argument("decode_temporal: features must be (N,F,T,H',W') with F=" +
                                    std::to_string(cfg.feature_size) + ", got " + shape_str(z.shape()));
    Conv3dKernel<T> in_conv{model.params.get("decoder.in.conv.weight"), model.params.get("decoder.in.conv.bias"), 1,
                            same_pad_t(cfg.temporal_kernel, 1), 1, 1};
    Tensor<T> h = conv3d(z, in_conv);
    for (int i = 0; i < cfg.num_layers; ++i) h = dilated_residual_layer(model, h, i);
    Conv3dKernel<T> out_conv{model.params.get("decoder.out.conv.weight"), model.params.get("decoder.out.conv.bias"),
                             1, same_pad_t(cfg.temporal_kernel, 1), 1, 1};
    h = conv3d(h, out_conv);
    Conv3dKernel<T> seg{model.params.get("decoder.seg.weight"), model.params.get("decoder.seg.bias"), 1, 0, 0, 0};
    Tensor<T> logits = conv3d(h, seg);
    return bilinear_upsample2d(logits, cfg.spatial_downsample);
}

// Unbatched wrapper matching the decoder contract: (F,T,H',W') -> (C,T,H,W).
template <typename T>
Tensor<T> decode_temporal(Model<T>& model, const Tensor<T>& z) {
    if (z.ndim() != 4) throw std::invalid_argument("decode_temporal: features must be (F,T,H',W')");
    Tensor<T> batched = reshape(z, {1, z.dim(0), z.dim(1), z.dim(2), z.dim(3)});
    Tensor<T> logits = decode_temporal_batch(model, batched);
    return reshape(logits, {logits.dim(1), logits.dim(2), logits.dim(3), logits.dim(4)});
}

// Composed model over a batch of clips (N,3,T,H,W) -> logits (N,C,T,H,W).
template <typename T>
Tensor<T> forward_logits(Model<T>& model, const Tensor<T>& clip) {
    const auto& cfg = model.config;
    if (clip.ndim() != 5 || clip.dim(1) != 3)
        throw std::invalid_argument("forward: clip must be (N,3,T,H,W), got " + shape_str(clip.shape()));
    if (clip.dim(2) != cfg.temporal_window)
        throw std::invalid_argument("forward: clip has " + std::to_string(clip.dim(2)) +
                                    " frames but temporal_window is " + std::to_string(cfg.temporal_window));
    const int N = clip.dim(0), Tn = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
    Tensor<T> frames = reshape(permute(clip, {0, 2, 1, 3, 4}), {N * Tn, 3, H, W});
    Tensor<T> feats = encode_frames(model, frames);  // (N*T, F, H', W')
    const int Hs = feats.dim(2), Ws = feats.dim(3);
    Tensor<T> z = permute(reshape(feats, {N, Tn, cfg.feature_size, Hs, Ws}), {0, 2, 1, 3, 4});
    return decode_temporal_batch(model, z);
}

// Single-frame baseline head over frames (N,3,H,W) -> logits (N,C,H,W).
template <typename T>
Tensor<T> baseline_forward_logits(Model<T>& model, const Tensor<T>& frames) {
    if (model.kind != ModelKind::SingleFrameBaseline)
        throw std::logic_error("baseline_forward: model is not a single-frame baseline");
    Tensor<T> feats = encode_frames(model, frames);
    Conv2dKernel<T> hc{model.params.get("head.conv.weight"), model.params.get("head.conv.bias"), 1, 1};
    Tensor<T> h = conv2d(feats, hc);
    h = batch_norm(h, model.params.get("head.bn.gamma"), model.params.get("head.bn.beta"),
                   model.params.get("head.bn.running_mean"), model.params.get("head.bn.running_var"),
                   model.training);
    h = relu(h);
    Conv2dKernel<T> seg{model.params.get("head.seg.weight"), model.params.get("head.seg.bias"), 1, 0};
    Tensor<T> logits = conv2d(h, seg);
    return bilinear_upsample2d(logits, model.config.spatial_downsample);
}

// Per-frame class probabilities for one clip (3,T,H,W) or batch (N,3,T,H,W);
// softmax over the class axis so every pixel sums to 1.
template <typename T>
Tensor<T> forward_probs(Model<T>& model, const Tensor<T>& clip) {
    if (clip.ndim() == 4) {
        Tensor<T> batched = reshape(clip, {1, clip.dim(0), clip.dim(1), clip.dim(2), clip.dim(3)});
        Tensor<T> logits = forward_logits(model, batched);
        Tensor<T> probs = softmax(logits, 1);
        return reshape(probs, {probs.dim(1), probs.dim(2), probs.dim(3), probs.dim(4)});
    }
    return softmax(forward_logits(model, clip), 1);
}

// Argmax over classes with ties broken by the lowest class id.
template <typename T>
std::vector<uint8_t> argmax_classes(const T* scores, int C, size_t pixels, size_t class_stride) {
    std::vector<uint8_t> out(pixels);
    for (size_t j = 0; j < pixels; ++j) {
        int best = 0;
        T best_v = scores[j];
        for (int c = 1; c < C; ++c) {
            const T v = scores[c * class_stride + j];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out[j] = static_cast<uint8_t>(best);
    }
    return out;
}

}  // namespace stseg
