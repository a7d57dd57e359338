#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stseg/image.hpp"
#include "stseg/metrics.hpp"

namespace stseg {

enum class ShapeKind { Disc, Rectangle };

// One rigidly translating shape. Positions and velocities are in pixels;
// centers are rounded to integer pixels per frame so every inter-frame
// displacement is an exact integer translation of the rasterized pixel set.
struct ShapeSpec {
    int class_id = 1;  // in [1, num_classes)
    ShapeKind kind = ShapeKind::Disc;
    double x0 = 0.0, y0 = 0.0;  // initial center
    double vx = 0.0, vy = 0.0;  // pixels per frame
    int size = 0;               // disc radius / rectangle half-extent
};

// Opaque bar sweeping across the frame, switched on and off by a duty
// cycle: active on frame t iff fmod(t, period) < duty * period.
struct OccluderSpec {
    bool vertical = true;  // vertical bar (moves along x) or horizontal
    double pos0 = 0.0;     // initial center of the bar axis
    double vel = 0.0;      // pixels per frame along the sweep axis
    int thickness = 0;     // full width of the bar in pixels
    double duty = 1.0;     // fraction of each period the bar is visible
    int period = 6;        // frames per duty cycle
};

struct SceneSpec {
    int width = 64;
    int height = 64;
    int num_frames = 30;
    int num_classes = 4;  // including background id 0
    std::vector<ShapeSpec> shapes;
    std::vector<OccluderSpec> occluders;
    double noise_sigma = 0.0;  // additive Gaussian pixel noise (std, 0-255 scale)
    double fps = 10.0;
    uint64_t seed = 0;

    void validate() const;
};

struct VideoSequence {
    std::vector<Image> frames;
    std::vector<Mask> masks;
    std::vector<FlowField> backward_flows;  // backward_flows[t-1] maps frame t onto t-1
    double fps = 10.0;
};

// Deterministic renderer: shapes drawn in list order (later entries on
// top), active occluders drawn over everything and labeled background in
// the masks. Backward flow is the exact integer displacement of each
// pixel's visible content, with occlusion/disocclusion/out-of-frame pixels
// flagged invalid — warping mask t-1 by it reproduces mask t on every
// valid pixel.
VideoSequence generate_sequence(const SceneSpec& spec);

// Per-frame fraction of shape pixels hidden by active occluders (0 when
// the frame has no shape pixels).
std::vector<double> occlusion_rate(const VideoSequence& seq, const SceneSpec& spec);

// Random benchmark scene: one moving shape per foreground class plus one
// duty-cycled occluder bar. Deterministic in seed.
SceneSpec random_scene(int width, int height, int num_frames, int num_classes, double noise_sigma,
                       double occluder_duty, int occluder_period, uint64_t seed);

struct ManifestEntry {
    std::string id;
    int num_frames = 0;
    std::string split;  // train / val / test
};

struct Manifest {
    double fps = 10.0;
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<ManifestEntry> sequences;
};

// Writes sequences[i] under <root>/<ids[i]>/ as frame_%04d.ppm,
// mask_%04d.pgm, flow_%04d.flo (flow_0001 maps frame 1 onto frame 0), plus
// manifest.json at the root. splits[i] labels each sequence.
Manifest write_dataset(const std::vector<VideoSequence>& sequences, const std::vector<std::string>& ids,
                       const std::vector<std::string>& splits, const std::vector<std::string>& class_names,
                       const std::string& root);

Manifest read_manifest(const std::string& root);
VideoSequence read_sequence(const std::string& root, const std::string& id, int num_frames);

}  // namespace stseg
