#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stseg/datagen.hpp"
#include "stseg/metrics.hpp"
#include "stseg/model.hpp"
#include "stseg/optim.hpp"

namespace stseg {

struct TrainConfig {
    int epochs = 100;
    int samples_per_epoch = 500;
    double max_lr = 1e-3;
    int batch_size = 4;
    uint64_t seed = 0;
    DecoderConfig model;
    bool baseline = false;  // train the single-frame control head instead
    std::string data_root;
    std::string out_dir;
    int val_stride = 0;  // window stride for validation loss; 0 = temporal_window

    void validate() const {
        model.validate();
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
        if (samples_per_epoch < model.num_classes - 1)
            throw std::invalid_argument("train: samples_per_epoch must cover every foreground class");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (max_lr <= 0.0) throw std::invalid_argument("train: max_lr must be positive");
        if (val_stride < 0) throw std::invalid_argument("train: val_stride must be >= 0");
    }
};

// Aborts of the optimization loop carry their position for diagnostics.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, int epoch, long step, double lr)
        : std::runtime_error(msg + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                             ", lr " + std::to_string(lr) + ")"),
          epoch(epoch),
          step(step),
          lr(lr) {}
    int epoch;
    long step;
    double lr;
};

struct LoadedSequence {
    std::string id;
    VideoSequence data;
    bool flows_missing = false;
};

struct Dataset {
    Manifest manifest;
    std::vector<LoadedSequence> train, val, test;

    const std::vector<LoadedSequence>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }
};

// Loads every sequence of the requested splits into memory. Sequences with
// missing flow files load without flows and are marked, so evaluation can
// still report IoU.
Dataset load_dataset(const std::string& root, const std::vector<std::string>& splits);

struct WindowSample {
    int seq_index = 0;
    int center = 0;
    int target_class = 0;
};

// Class-balanced window sampling: each foreground class is the target of
// floor(n / C_fg) or ceil(n / C_fg) windows (remainder classes chosen by
// seed), and every window's central ground-truth frame contains its target
// class. Deterministic in seed.
std::vector<WindowSample> sample_balanced_windows(const std::vector<LoadedSequence>& seqs, int n,
                                                  int temporal_window, int num_classes, uint64_t seed);

// A temporal window cut from one sequence: frames/masks aligned, flows
// between consecutive window frames (empty if the sequence has none).
struct WindowData {
    std::vector<Image> frames;
    std::vector<Mask> masks;
    std::vector<FlowField> flows;
};

WindowData extract_window(const VideoSequence& seq, int center, int temporal_window);

// Mirrors frames and masks left-right and fixes flows up (u negated and
// mirrored). Applied to the whole window so time stays coherent.
void hflip_window(WindowData& w);

// With probability p applies hflip_window; returns whether it flipped.
bool augment_hflip(WindowData& w, double p, Rng& rng);

// Frames (each 3xHxW RGB, values 0..255) -> float tensor (1,3,T,H,W).
Tensor<float> window_to_clip(const std::vector<Image>& frames);

// Argmax prediction for the window's central frame. Handles both model
// kinds; the baseline sees only the central frame.
Mask predict_central(Model<float>& model, const WindowData& window);

struct LossRow {
    int epoch;
    long step;
    double lr;
    float loss;
};

std::string loss_log_csv(const std::vector<LossRow>& rows);

struct TrainResult {
    std::vector<LossRow> log;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::string best_path, last_path, log_path;
};

// Full optimization protocol: per epoch, balanced window sampling with
// horizontal-flip augmentation, cross-entropy on the central frame only,
// Adam steps under a 1cycle schedule spanning the whole run; validation
// loss after every epoch selects the best checkpoint, and the last epoch is
// always saved for resuming. Single-threaded and bit-reproducible in seed.
TrainResult train(const TrainConfig& config);

// Mean central-frame cross-entropy over windows of the given sequences at
// the given stride (no gradients).
double validation_loss(Model<float>& model, const std::vector<LoadedSequence>& seqs, int stride);

// Stride-1 sliding-window evaluation of one sequence against ground truth;
// centers within floor(T/2) of the ends are skipped (no padding). TC uses
// the dataset's backward flows and is omitted when the sequence has none.
MetricsReport evaluate_sequence(Model<float>& model, const LoadedSequence& seq, int num_classes);

// evaluate_sequence over every sequence, merged in order.
MetricsReport evaluate_split(Model<float>& model, const std::vector<LoadedSequence>& seqs, int num_classes);

// ---- checkpointing ----------------------------------------------------

struct CheckpointMeta {
    DecoderConfig config;
    ModelKind kind = ModelKind::TemporalDecoder;
    int epochs_done = 0;
    long global_step = 0;
    long adam_steps = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    uint64_t seed = 0;
    int epochs_target = 0;
    int samples_per_epoch = 0;
    int batch_size = 0;
    double max_lr = 0.0;
};

// Little-endian binary: magic "STSG", u32 version, u32 JSON length + JSON
// metadata, then one record per tensor (u32 name length, name, u32 ndim,
// u32 dims..., float32 payload). Parameters and norm buffers come first in
// parameter-store order, Adam moments after (names prefixed adam.m. /
// adam.v.). Save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, Model<float>& model, const Adam<float>* opt,
                     const CheckpointMeta& meta);
Model<float> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr,
                             Adam<float>* opt_out = nullptr);

}  // namespace stseg
