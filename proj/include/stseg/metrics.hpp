#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stseg {

// Per-pixel class-id mask, row-major.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> ids;

    Mask() = default;
    Mask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), ids(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

    uint8_t& at(int x, int y) { return ids[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return ids[static_cast<size_t>(y) * width + x]; }
    size_t numel() const { return ids.size(); }
    bool same_dims(const Mask& o) const { return width == o.width && height == o.height; }
    bool operator==(const Mask& o) const { return width == o.width && height == o.height && ids == o.ids; }
};

// Backward displacement field: pixel p of the current frame originates at
// p + (u(p), v(p)) in the previous frame. `valid` is 0 where no
// correspondence exists (occlusion, disocclusion, out-of-frame source).
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u, v;
    std::vector<uint8_t> valid;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w),
          height(h),
          u(static_cast<size_t>(w) * h, 0.0f),
          v(static_cast<size_t>(w) * h, 0.0f),
          valid(static_cast<size_t>(w) * h, 1) {}

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    size_t numel() const { return u.size(); }
};

// On-disk sentinel marking invalid flow pixels (exactly representable in
// float32, so equality comparison round-trips).
constexpr float kInvalidFlow = 1e9f;

// Intersection-over-union of the binary class-c masks. Undefined (nullopt)
// when the union is empty, i.e. the class appears in neither mask.
std::optional<double> iou_class(const Mask& pred, const Mask& gt, int cls);

// Same, restricted to pixels where `valid` is nonzero.
std::optional<double> iou_class_masked(const Mask& a, const Mask& b, int cls, const std::vector<uint8_t>& valid);

struct WarpResult {
    Mask warped;
    std::vector<uint8_t> valid;  // 1 where the warped label is defined
};

// Nearest-neighbor backward warp: warped(p) = prev(round(p + flow(p))).
// Pixels with invalid flow or an out-of-image source are marked invalid.
WarpResult warp_mask(const Mask& prev, const FlowField& backward_flow);

// Per-class temporal consistency for one frame pair: IoU between the
// current prediction and the previous prediction warped onto the current
// frame, over valid pixels only. Entry c is nullopt when class c appears in
// neither restricted mask.
std::vector<std::optional<double>> temporal_consistency(const Mask& pred_t, const Mask& pred_prev,
                                                        const FlowField& backward_flow, int num_classes);

struct ClassStat {
    double sum = 0.0;
    long count = 0;

    void add(double v) {
        sum += v;
        ++count;
    }
    std::optional<double> mean() const {
        if (count == 0) return std::nullopt;
        return sum / static_cast<double>(count);
    }
};

// Aggregated per-class IoU / TC means plus their sample counts. Classes with
// no defined samples are excluded from the unweighted across-class means.
struct MetricsReport {
    int num_classes = 0;
    std::vector<ClassStat> iou;
    std::vector<ClassStat> tc;

    MetricsReport() = default;
    explicit MetricsReport(int c) : num_classes(c), iou(c), tc(c) {}

    std::optional<double> mean_iou() const;
    std::optional<double> mean_tc() const;
    int undefined_iou_classes() const;
    void merge(const MetricsReport& other);

    // CSV with header `class,iou,iou_count,tc,tc_count`: one row per class
    // with at least one defined entry, then a `__mean__` row whose counts are
    // the numbers of contributing classes. Floats use 6 decimals; undefined
    // cells stay empty.
    std::string to_csv() const;
};

// IoU on every frame against GT plus TC on every consecutive prediction
// pair. flows[i] must be the backward flow of frame i+1 (its displacement
// into frame i); pass an empty vector to skip TC.
MetricsReport evaluate_stream(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                              const std::vector<FlowField>& flows, int num_classes);

}  // namespace stseg
