#include "stseg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "stseg/util.hpp"

namespace stseg {

namespace {

// Fixed palette: background, then saturated foreground colors, then the
// occluder color appended after the classes.
constexpr uint8_t kPalette[][3] = {
    {24, 24, 24},    // background
    {220, 60, 60},   // class 1
    {60, 200, 80},   // class 2
    {70, 90, 220},   // class 3
    {220, 200, 60},  // class 4
    {200, 70, 200},  // class 5
    {60, 200, 200},  // class 6
    {230, 140, 50},  // class 7
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));
constexpr uint8_t kOccluderColor[3] = {150, 150, 150};

struct IPoint {
    int x, y;
};

// Reflects a scalar trajectory into [lo, hi] (billiard bounce).
double reflect(double p, double lo, double hi) {
    if (hi <= lo) return lo;
    const double span = hi - lo;
    double q = std::fmod(p - lo, 2.0 * span);
    if (q < 0) q += 2.0 * span;
    return lo + (q <= span ? q : 2.0 * span - q);
}

// Integer center of a shape at frame t: the continuous bounced trajectory,
// rounded. Rounding keeps centers inside [size, dim-1-size] because the
// bounds are integers.
IPoint shape_center(const ShapeSpec& s, const SceneSpec& spec, int t) {
    const double lox = s.size, hix = spec.width - 1 - s.size;
    const double loy = s.size, hiy = spec.height - 1 - s.size;
    const double x = reflect(s.x0 + s.vx * t, lox, hix);
    const double y = reflect(s.y0 + s.vy * t, loy, hiy);
    return {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))};
}

bool shape_covers(const ShapeSpec& s, IPoint c, int x, int y) {
    const int dx = x - c.x, dy = y - c.y;
    if (s.kind == ShapeKind::Disc) return dx * dx + dy * dy <= s.size * s.size;
    return std::abs(dx) <= s.size && std::abs(dy) <= s.size;
}

bool occluder_active(const OccluderSpec& o, int t) {
    if (o.duty >= 1.0) return true;
    if (o.duty <= 0.0) return false;
    return std::fmod(static_cast<double>(t), static_cast<double>(o.period)) < o.duty * o.period;
}

int occluder_center(const OccluderSpec& o, const SceneSpec& spec, int t) {
    const double hi = (o.vertical ? spec.width : spec.height) - 1;
    return static_cast<int>(std::lround(reflect(o.pos0 + o.vel * t, 0.0, hi)));
}

bool occluder_covers(const OccluderSpec& o, int center, int x, int y) {
    const int p = o.vertical ? x : y;
    return std::abs(p - center) * 2 <= o.thickness;
}

// Everything known about one rendered frame: the final label mask, which
// shape owns each pixel (-1 none, before occlusion), and occluder coverage.
struct FrameState {
    Mask labels;                 // final mask: occluded pixels already background
    std::vector<int> owner;      // topmost shape index per pixel, ignoring occluders
    std::vector<uint8_t> occed;  // 1 where an active occluder covers the pixel
    std::vector<IPoint> centers;
    std::vector<int> occ_centers;
};

FrameState render_frame_state(const SceneSpec& spec, int t) {
    const int W = spec.width, H = spec.height;
    FrameState st;
    st.labels = Mask(W, H, 0);
    st.owner.assign(static_cast<size_t>(W) * H, -1);
    st.occed.assign(static_cast<size_t>(W) * H, 0);
    for (const auto& s : spec.shapes) st.centers.push_back(shape_center(s, spec, t));
    for (const auto& o : spec.occluders) st.occ_centers.push_back(occluder_center(o, spec, t));

    for (size_t si = 0; si < spec.shapes.size(); ++si) {
        const auto& s = spec.shapes[si];
        const IPoint c = st.centers[si];
        for (int y = c.y - s.size; y <= c.y + s.size; ++y) {
            for (int x = c.x - s.size; x <= c.x + s.size; ++x) {
                if (x < 0 || x >= W || y < 0 || y >= H) continue;  // cannot happen; cheap guard
                if (!shape_covers(s, c, x, y)) continue;
                st.labels.at(x, y) = static_cast<uint8_t>(s.class_id);
                st.owner[static_cast<size_t>(y) * W + x] = static_cast<int>(si);
            }
        }
    }
    for (size_t oi = 0; oi < spec.occluders.size(); ++oi) {
        if (!occluder_active(spec.occluders[oi], t)) continue;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (occluder_covers(spec.occluders[oi], st.occ_centers[oi], x, y)) {
                    st.labels.at(x, y) = 0;
                    st.occed[static_cast<size_t>(y) * W + x] = 1;
                }
    }
    return st;
}

Image render_image(const SceneSpec& spec, const FrameState& st, Rng& noise_rng) {
    const int W = spec.width, H = spec.height;
    Image img(W, H);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            const uint8_t* color;
            if (st.occed[i]) {
                color = kOccluderColor;
            } else {
                const int owner = st.owner[i];
                color = kPalette[owner >= 0 ? spec.shapes[owner].class_id % kPaletteSize : 0];
            }
            uint8_t* px = img.px(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                double v = color[ch];
                if (spec.noise_sigma > 0.0) v += noise_rng.normal() * spec.noise_sigma;
                px[ch] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return img;
}

}  // namespace

void SceneSpec::validate() const {
    if (width < 8 || height < 8) throw std::invalid_argument("scene: frame must be at least 8x8");
    if (num_frames < 1) throw std::invalid_argument("scene: num_frames must be >= 1");
    if (num_classes < 2 || num_classes > 256)
        throw std::invalid_argument("scene: num_classes must be in [2,256]");
    for (const auto& s : shapes) {
        if (s.class_id < 1 || s.class_id >= num_classes)
            throw std::invalid_argument("scene: shape class id " + std::to_string(s.class_id) +
                                        " outside [1," + std::to_string(num_classes) + ")");
        if (s.size < 1) throw std::invalid_argument("scene: shape size must be >= 1");
        if (2 * s.size + 1 > width || 2 * s.size + 1 > height)
            throw std::invalid_argument("scene: shape of size " + std::to_string(s.size) +
                                        " does not fit the frame");
    }
    for (const auto& o : occluders) {
        if (o.thickness < 1) throw std::invalid_argument("scene: occluder thickness must be >= 1");
        if (o.duty < 0.0 || o.duty > 1.0) throw std::invalid_argument("scene: occluder duty must be in [0,1]");
        if (o.period < 1) throw std::invalid_argument("scene: occluder period must be >= 1");
    }
    if (noise_sigma < 0.0) throw std::invalid_argument("scene: noise_sigma must be >= 0");
    if (fps <= 0.0) throw std::invalid_argument("scene: fps must be positive");
}

VideoSequence generate_sequence(const SceneSpec& spec) {
    spec.validate();
    const int W = spec.width, H = spec.height;
    VideoSequence seq;
    seq.fps = spec.fps;
    Rng noise_rng(mix_seed(spec.seed, 0x6e6f697365ULL));

    FrameState prev;
    for (int t = 0; t < spec.num_frames; ++t) {
        FrameState st = render_frame_state(spec, t);
        seq.frames.push_back(render_image(spec, st, noise_rng));
        seq.masks.push_back(st.labels);

        if (t > 0) {
            FlowField flow(W, H);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const size_t i = flow.idx(x, y);
                    int dx = 0, dy = 0;
                    const int label = st.labels.at(x, y);
                    if (label != 0) {
                        const int si = st.owner[i];
                        dx = prev.centers[si].x - st.centers[si].x;
                        dy = prev.centers[si].y - st.centers[si].y;
                        flow.u[i] = static_cast<float>(dx);
                        flow.v[i] = static_cast<float>(dy);
                    }
                    // Invalidate pixels without a true correspondence:
                    // occluder involvement at either end, source out of
                    // frame, or content that appeared/vanished (occlusion
                    // by z-order, disocclusion of background).
                    bool ok = !st.occed[i];
                    const int sx = x + dx, sy = y + dy;
                    if (ok && (sx < 0 || sx >= W || sy < 0 || sy >= H)) ok = false;
                    if (ok) {
                        const size_t j = static_cast<size_t>(sy) * W + sx;
                        if (prev.occed[j]) ok = false;
                        if (ok && prev.labels.ids[j] != label) ok = false;
                    }
                    if (!ok) {
                        flow.valid[i] = 0;
                        flow.u[i] = 0.0f;
                        flow.v[i] = 0.0f;
                    }
                }
            }
            seq.backward_flows.push_back(std::move(flow));
        }
        prev = std::move(st);
    }
    return seq;
}

std::vector<double> occlusion_rate(const VideoSequence& seq, const SceneSpec& spec) {
    if (static_cast<int>(seq.masks.size()) != spec.num_frames)
        throw std::invalid_argument("occlusion_rate: sequence length differs from spec");
    std::vector<double> rates;
    rates.reserve(seq.masks.size());
    for (int t = 0; t < spec.num_frames; ++t) {
        const FrameState st = render_frame_state(spec, t);
        long shape_px = 0, hidden = 0;
        for (size_t i = 0; i < st.owner.size(); ++i) {
            if (st.owner[i] < 0) continue;
            ++shape_px;
            hidden += (st.occed[i] != 0);
        }
        rates.push_back(shape_px == 0 ? 0.0 : static_cast<double>(hidden) / static_cast<double>(shape_px));
    }
    return rates;
}

SceneSpec random_scene(int width, int height, int num_frames, int num_classes, double noise_sigma,
                       double occluder_duty, int occluder_period, uint64_t seed) {
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.num_frames = num_frames;
    spec.num_classes = num_classes;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;
    Rng rng(mix_seed(seed, 0x7363656e65ULL));
    const int min_dim = std::min(width, height);
    for (int c = 1; c < num_classes; ++c) {
        ShapeSpec s;
        s.class_id = c;
        s.kind = rng.uniform() < 0.5 ? ShapeKind::Disc : ShapeKind::Rectangle;
        s.size = rng.uniform_int(min_dim / 10, min_dim / 5);
        s.x0 = rng.uniform(s.size, width - 1 - s.size);
        s.y0 = rng.uniform(s.size, height - 1 - s.size);
        // speeds around 1-2.5 px/frame keep motion visible but trackable
        const double speed = rng.uniform(1.0, 2.5);
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        s.vx = speed * std::cos(angle);
        s.vy = speed * std::sin(angle);
        spec.shapes.push_back(s);
    }
    if (occluder_duty > 0.0) {
        OccluderSpec o;
        o.vertical = rng.uniform() < 0.5;
        const int span = o.vertical ? width : height;
        o.thickness = std::max(2, span / 6);
        o.pos0 = rng.uniform(0.0, span - 1.0);
        o.vel = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
        o.duty = occluder_duty;
        o.period = occluder_period;
        spec.occluders.push_back(o);
    }
    return spec;
}

namespace {

std::string zero4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", n);
    return buf;
}

}  // namespace

Manifest write_dataset(const std::vector<VideoSequence>& sequences, const std::vector<std::string>& ids,
                       const std::vector<std::string>& splits, const std::vector<std::string>& class_names,
                       const std::string& root) {
    if (sequences.size() != ids.size() || sequences.size() != splits.size())
        throw std::invalid_argument("write_dataset: sequences, ids and splits must align");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw std::runtime_error("cannot create dataset root: " + root + " (" + ec.message() + ")");

    Manifest m;
    m.fps = sequences.empty() ? 10.0 : sequences.front().fps;
    m.num_classes = static_cast<int>(class_names.size());
    m.class_names = class_names;
    for (size_t i = 0; i < sequences.size(); ++i) {
        const auto& seq = sequences[i];
        const fs::path dir = fs::path(root) / ids[i];
        fs::create_directories(dir, ec);
        if (ec) throw std::runtime_error("cannot create sequence directory: " + dir.string());
        for (size_t t = 0; t < seq.frames.size(); ++t) {
            write_ppm((dir / ("frame_" + zero4(static_cast<int>(t)) + ".ppm")).string(), seq.frames[t]);
            write_pgm((dir / ("mask_" + zero4(static_cast<int>(t)) + ".pgm")).string(), seq.masks[t]);
            if (t > 0)
                write_flo((dir / ("flow_" + zero4(static_cast<int>(t)) + ".flo")).string(),
                          seq.backward_flows[t - 1]);
        }
        m.sequences.push_back({ids[i], static_cast<int>(seq.frames.size()), splits[i]});
    }

    nlohmann::ordered_json j;
    j["fps"] = m.fps;
    j["num_classes"] = m.num_classes;
    j["class_names"] = m.class_names;
    j["sequences"] = nlohmann::ordered_json::array();
    for (const auto& e : m.sequences)
        j["sequences"].push_back({{"id", e.id}, {"frames", e.num_frames}, {"split", e.split}});
    std::ofstream f(fs::path(root) / "manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest under " + root);
    f << j.dump(2) << "\n";
    return m;
}

Manifest read_manifest(const std::string& root) {
    const std::string path = (std::filesystem::path(root) / "manifest.json").string();
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed manifest " + path + ": " + e.what());
    }
    Manifest m;
    m.fps = j.at("fps").get<double>();
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("sequences"))
        m.sequences.push_back({e.at("id").get<std::string>(), e.at("frames").get<int>(),
                               e.at("split").get<std::string>()});
    return m;
}

VideoSequence read_sequence(const std::string& root, const std::string& id, int num_frames) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(root) / id;
    VideoSequence seq;
    for (int t = 0; t < num_frames; ++t) {
        seq.frames.push_back(read_ppm((dir / ("frame_" + zero4(t) + ".ppm")).string()));
        seq.masks.push_back(read_pgm((dir / ("mask_" + zero4(t) + ".pgm")).string()));
        if (t > 0) seq.backward_flows.push_back(read_flo((dir / ("flow_" + zero4(t) + ".flo")).string()));
    }
    return seq;
}

}  // namespace stseg
