// Python bindings for the main operations: synthetic data generation,
// segmentation metrics, flow warping, and window prediction with a trained
// checkpoint.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "stseg/datagen.hpp"
#include "stseg/training.hpp"

namespace py = pybind11;
using namespace stseg;

namespace {

Mask mask_from_array(const py::array_t<uint8_t>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("mask must be a 2-D uint8 array");
    Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) m.at(x, y) = r(y, x);
    return m;
}

py::array_t<uint8_t> mask_to_array(const Mask& m) {
    py::array_t<uint8_t> a({m.height, m.width});
    auto w = a.mutable_unchecked<2>();
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) w(y, x) = m.at(x, y);
    return a;
}

FlowField flow_from_arrays(const py::array_t<float>& uv, const py::array_t<uint8_t>& valid) {
    if (uv.ndim() != 3 || uv.shape(2) != 2) throw std::invalid_argument("flow must be (H,W,2) float32");
    FlowField f(static_cast<int>(uv.shape(1)), static_cast<int>(uv.shape(0)));
    if (valid.ndim() != 2 || valid.shape(0) != uv.shape(0) || valid.shape(1) != uv.shape(1))
        throw std::invalid_argument("flow validity must be (H,W) uint8 matching the flow");
    auto ruv = uv.unchecked<3>();
    auto rv = valid.unchecked<2>();
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const size_t i = f.idx(x, y);
            f.u[i] = ruv(y, x, 0);
            f.v[i] = ruv(y, x, 1);
            f.valid[i] = rv(y, x);
        }
    return f;
}

py::dict sequence_to_dict(const VideoSequence& seq) {
    const int T = static_cast<int>(seq.frames.size());
    const int H = T > 0 ? seq.frames[0].height : 0;
    const int W = T > 0 ? seq.frames[0].width : 0;
    py::array_t<uint8_t> frames({T, H, W, 3});
    py::array_t<uint8_t> masks({T, H, W});
    auto wf = frames.mutable_unchecked<4>();
    auto wm = masks.mutable_unchecked<3>();
    for (int t = 0; t < T; ++t)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const uint8_t* px = seq.frames[t].px(x, y);
                for (int c = 0; c < 3; ++c) wf(t, y, x, c) = px[c];
                wm(t, y, x) = seq.masks[t].at(x, y);
            }
    const int Tf = static_cast<int>(seq.backward_flows.size());
    py::array_t<float> flow({Tf, H, W, 2});
    py::array_t<uint8_t> flow_valid({Tf, H, W});
    auto wfl = flow.mutable_unchecked<4>();
    auto wvl = flow_valid.mutable_unchecked<3>();
    for (int t = 0; t < Tf; ++t)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const size_t i = seq.backward_flows[t].idx(x, y);
                wfl(t, y, x, 0) = seq.backward_flows[t].u[i];
                wfl(t, y, x, 1) = seq.backward_flows[t].v[i];
                wvl(t, y, x) = seq.backward_flows[t].valid[i];
            }
    py::dict d;
    d["frames"] = frames;
    d["masks"] = masks;
    d["flow"] = flow;
    d["flow_valid"] = flow_valid;
    d["fps"] = seq.fps;
    return d;
}

// Minimal inference handle around a loaded checkpoint.
class Segmenter {
public:
    explicit Segmenter(const std::string& checkpoint_path) {
        model_ = load_checkpoint(checkpoint_path, &meta_);
    }

    int temporal_window() const { return model_.config.temporal_window; }
    int num_classes() const { return model_.config.num_classes; }
    std::string kind() const { return model_kind_name(model_.kind); }

    py::array_t<uint8_t> predict(const py::array_t<uint8_t>& frames) {
        if (frames.ndim() != 4 || frames.shape(3) != 3)
            throw std::invalid_argument("frames must be (T,H,W,3) uint8");
        if (static_cast<int>(frames.shape(0)) != model_.config.temporal_window)
            throw std::invalid_argument("expected " + std::to_string(model_.config.temporal_window) +
                                        " frames, got " + std::to_string(frames.shape(0)));
        WindowData w;
        auto r = frames.unchecked<4>();
        for (int t = 0; t < static_cast<int>(frames.shape(0)); ++t) {
            Image img(static_cast<int>(frames.shape(2)), static_cast<int>(frames.shape(1)));
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x)
                    for (int c = 0; c < 3; ++c) img.px(x, y)[c] = r(t, y, x, c);
            w.frames.push_back(std::move(img));
        }
        return mask_to_array(predict_central(model_, w));
    }

private:
    Model<float> model_;
    CheckpointMeta meta_;
};

}  // namespace

PYBIND11_MODULE(_stseg, m) {
    m.doc() = "spatio-temporal segmentation core";

    m.def("receptive_field", &receptive_field, py::arg("num_layers"), py::arg("temporal_kernel"),
          "temporal receptive field of the decoder in frames");

    m.def(
        "onecycle_lr",
        [](int64_t step, int64_t total_steps, double max_lr) { return onecycle_lr(step, total_steps, max_lr); },
        py::arg("step"), py::arg("total_steps"), py::arg("max_lr"));

    m.def(
        "iou",
        [](const py::array_t<uint8_t>& pred, const py::array_t<uint8_t>& gt, int cls) -> py::object {
            auto v = iou_class(mask_from_array(pred), mask_from_array(gt), cls);
            if (!v) return py::none();
            return py::float_(*v);
        },
        py::arg("pred"), py::arg("gt"), py::arg("cls"),
        "per-class IoU; None when the class appears in neither mask");

    m.def(
        "warp_mask",
        [](const py::array_t<uint8_t>& prev, const py::array_t<float>& flow_uv,
           const py::array_t<uint8_t>& flow_valid) {
            WarpResult r = warp_mask(mask_from_array(prev), flow_from_arrays(flow_uv, flow_valid));
            py::array_t<uint8_t> valid({r.warped.height, r.warped.width});
            auto w = valid.mutable_unchecked<2>();
            for (int y = 0; y < r.warped.height; ++y)
                for (int x = 0; x < r.warped.width; ++x)
                    w(y, x) = r.valid[static_cast<size_t>(y) * r.warped.width + x];
            return py::make_tuple(mask_to_array(r.warped), valid);
        },
        py::arg("prev"), py::arg("flow_uv"), py::arg("flow_valid"),
        "nearest-neighbor backward warp; returns (warped mask, validity)");

    m.def(
        "temporal_consistency",
        [](const py::array_t<uint8_t>& pred_t, const py::array_t<uint8_t>& pred_prev,
           const py::array_t<float>& flow_uv, const py::array_t<uint8_t>& flow_valid, int num_classes) {
            auto tcs = temporal_consistency(mask_from_array(pred_t), mask_from_array(pred_prev),
                                            flow_from_arrays(flow_uv, flow_valid), num_classes);
            py::list out;
            for (auto& v : tcs) {
                if (v)
                    out.append(py::float_(*v));
                else
                    out.append(py::none());
            }
            return out;
        },
        py::arg("pred_t"), py::arg("pred_prev"), py::arg("flow_uv"), py::arg("flow_valid"),
        py::arg("num_classes"));

    m.def(
        "generate_sequence",
        [](int width, int height, int num_frames, int num_classes, double noise_sigma, double occluder_duty,
           int occluder_period, uint64_t seed) {
            SceneSpec spec = random_scene(width, height, num_frames, num_classes, noise_sigma, occluder_duty,
                                          occluder_period, seed);
            return sequence_to_dict(generate_sequence(spec));
        },
        py::arg("width") = 64, py::arg("height") = 64, py::arg("num_frames") = 30, py::arg("num_classes") = 4,
        py::arg("noise_sigma") = 60.0, py::arg("occluder_duty") = 0.5, py::arg("occluder_period") = 6,
        py::arg("seed") = 0,
        "random moving-shapes sequence with masks and exact backward flow");

    py::class_<Segmenter>(m, "Segmenter")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def_property_readonly("temporal_window", &Segmenter::temporal_window)
        .def_property_readonly("num_classes", &Segmenter::num_classes)
        .def_property_readonly("kind", &Segmenter::kind)
        .def("predict", &Segmenter::predict, py::arg("frames"),
             "central-frame class mask for a (T,H,W,3) uint8 window");
}
