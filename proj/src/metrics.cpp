#include "stseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace stseg {

std::optional<double> iou_class(const Mask& pred, const Mask& gt, int cls) {
    if (!pred.same_dims(gt))
        throw std::invalid_argument("iou_class: mask dims differ (" + std::to_string(pred.width) + "x" +
                                    std::to_string(pred.height) + " vs " + std::to_string(gt.width) + "x" +
                                    std::to_string(gt.height) + ")");
    long inter = 0, uni = 0;
    const size_t n = pred.numel();
    for (size_t i = 0; i < n; ++i) {
        const bool a = pred.ids[i] == cls;
        const bool b = gt.ids[i] == cls;
        inter += (a && b);
        uni += (a || b);
    }
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> iou_class_masked(const Mask& a, const Mask& b, int cls, const std::vector<uint8_t>& valid) {
    if (!a.same_dims(b)) throw std::invalid_argument("iou_class_masked: mask dims differ");
    if (valid.size() != a.numel()) throw std::invalid_argument("iou_class_masked: validity size mismatch");
    long inter = 0, uni = 0;
    const size_t n = a.numel();
    for (size_t i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        const bool pa = a.ids[i] == cls;
        const bool pb = b.ids[i] == cls;
        inter += (pa && pb);
        uni += (pa || pb);
    }
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

WarpResult warp_mask(const Mask& prev, const FlowField& backward_flow) {
    if (prev.width != backward_flow.width || prev.height != backward_flow.height)
        throw std::invalid_argument("warp_mask: flow dims differ from mask dims");
    const int W = prev.width, H = prev.height;
    WarpResult r;
    r.warped = Mask(W, H, 0);
    r.valid.assign(prev.numel(), 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t i = backward_flow.idx(x, y);
            if (!backward_flow.valid[i]) continue;
            const int sx = static_cast<int>(std::lround(x + static_cast<double>(backward_flow.u[i])));
            const int sy = static_cast<int>(std::lround(y + static_cast<double>(backward_flow.v[i])));
            if (sx < 0 || sx >= W || sy < 0 || sy >= H) continue;
            r.warped.at(x, y) = prev.at(sx, sy);
            r.valid[i] = 1;
        }
    }
    return r;
}

std::vector<std::optional<double>> temporal_consistency(const Mask& pred_t, const Mask& pred_prev,
                                                        const FlowField& backward_flow, int num_classes) {
    if (!pred_t.same_dims(pred_prev)) throw std::invalid_argument("temporal_consistency: mask dims differ");
    WarpResult w = warp_mask(pred_prev, backward_flow);
    std::vector<std::optional<double>> out(static_cast<size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) out[c] = iou_class_masked(pred_t, w.warped, c, w.valid);
    return out;
}

std::optional<double> MetricsReport::mean_iou() const {
    double s = 0.0;
    int n = 0;
    for (const auto& cs : iou)
        if (cs.count > 0) {
            s += *cs.mean();
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / n;
}

std::optional<double> MetricsReport::mean_tc() const {
    double s = 0.0;
    int n = 0;
    for (const auto& cs : tc)
        if (cs.count > 0) {
            s += *cs.mean();
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / n;
}

int MetricsReport::undefined_iou_classes() const {
    int n = 0;
    for (const auto& cs : iou) n += (cs.count == 0);
    return n;
}

void MetricsReport::merge(const MetricsReport& other) {
    if (other.num_classes != num_classes) throw std::invalid_argument("MetricsReport::merge: class count differs");
    for (int c = 0; c < num_classes; ++c) {
        iou[c].sum += other.iou[c].sum;
        iou[c].count += other.iou[c].count;
        tc[c].sum += other.tc[c].sum;
        tc[c].count += other.tc[c].count;
    }
}

namespace {

std::string fmt6(std::optional<double> v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace

std::string MetricsReport::to_csv() const {
    std::string out = "class,iou,iou_count,tc,tc_count\n";
    for (int c = 0; c < num_classes; ++c) {
        if (iou[c].count == 0 && tc[c].count == 0) continue;
        out += std::to_string(c) + "," + fmt6(iou[c].mean()) + "," + std::to_string(iou[c].count) + "," +
               fmt6(tc[c].mean()) + "," + std::to_string(tc[c].count) + "\n";
    }
    int iou_classes = 0, tc_classes = 0;
    for (const auto& cs : iou) iou_classes += (cs.count > 0);
    for (const auto& cs : tc) tc_classes += (cs.count > 0);
    out += "__mean__," + fmt6(mean_iou()) + "," + std::to_string(iou_classes) + "," + fmt6(mean_tc()) + "," +
           std::to_string(tc_classes) + "\n";
    return out;
}

MetricsReport evaluate_stream(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                              const std::vector<FlowField>& flows, int num_classes) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("evaluate_stream: " + std::to_string(preds.size()) + " predictions vs " +
                                    std::to_string(gts.size()) + " ground-truth masks");
    if (!flows.empty() && flows.size() + 1 != preds.size())
        throw std::invalid_argument("evaluate_stream: need one backward flow per consecutive frame pair");
    if (num_classes < 1) throw std::invalid_argument("evaluate_stream: num_classes must be >= 1");
    MetricsReport report(num_classes);
    for (size_t t = 0; t < preds.size(); ++t) {
        for (int c = 0; c < num_classes; ++c) {
            auto v = iou_class(preds[t], gts[t], c);
            if (v) report.iou[c].add(*v);
        }
    }
    if (!flows.empty()) {
        for (size_t t = 1; t < preds.size(); ++t) {
            auto tcs = temporal_consistency(preds[t], preds[t - 1], flows[t - 1], num_classes);
            for (int c = 0; c < num_classes; ++c)
                if (tcs[c]) report.tc[c].add(*tcs[c]);
        }
    }
    return report;
}

}  // namespace stseg
