#include "stseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "stseg/image.hpp"

namespace stseg {

namespace fs = std::filesystem;

namespace {

std::string zero4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", n);
    return buf;
}

}  // namespace

Dataset load_dataset(const std::string& root, const std::vector<std::string>& splits) {
    Dataset ds;
    ds.manifest = read_manifest(root);
    for (const auto& entry : ds.manifest.sequences) {
        if (std::find(splits.begin(), splits.end(), entry.split) == splits.end()) continue;
        LoadedSequence ls;
        ls.id = entry.id;
        ls.data.fps = ds.manifest.fps;
        const fs::path dir = fs::path(root) / entry.id;
        ls.flows_missing = entry.num_frames > 1 && !fs::exists(dir / "flow_0001.flo");
        for (int t = 0; t < entry.num_frames; ++t) {
            ls.data.frames.push_back(read_ppm((dir / ("frame_" + zero4(t) + ".ppm")).string()));
            ls.data.masks.push_back(read_pgm((dir / ("mask_" + zero4(t) + ".pgm")).string()));
            if (t > 0 && !ls.flows_missing)
                ls.data.backward_flows.push_back(read_flo((dir / ("flow_" + zero4(t) + ".flo")).string()));
        }
        auto& bucket = entry.split == "train" ? ds.train : (entry.split == "val" ? ds.val : ds.test);
        bucket.push_back(std::move(ls));
    }
    return ds;
}

std::vector<WindowSample> sample_balanced_windows(const std::vector<LoadedSequence>& seqs, int n,
                                                  int temporal_window, int num_classes, uint64_t seed) {
    const int C_fg = num_classes - 1;
    if (C_fg < 1) throw std::invalid_argument("sampler: need at least one foreground class");
    if (n < C_fg) throw std::invalid_argument("sampler: sample count below foreground class count");
    const int h = temporal_window / 2;

    // candidate (sequence, center) pairs per foreground class: the window
    // must fit and the class must appear in the central GT frame
    std::vector<std::vector<WindowSample>> cands(static_cast<size_t>(num_classes));
    for (size_t s = 0; s < seqs.size(); ++s) {
        const auto& masks = seqs[s].data.masks;
        const int len = static_cast<int>(masks.size());
        for (int c = h; c + temporal_window - h - 1 < len; ++c) {
            std::vector<bool> present(static_cast<size_t>(num_classes), false);
            for (uint8_t id : masks[c].ids)
                if (id < num_classes) present[id] = true;
            for (int cls = 1; cls < num_classes; ++cls)
                if (present[cls]) cands[cls].push_back({static_cast<int>(s), c, cls});
        }
    }
    for (int cls = 1; cls < num_classes; ++cls)
        if (cands[cls].empty())
            throw std::invalid_argument("sampler: class " + std::to_string(cls) +
                                        " never appears in a valid central frame");

    Rng rng(mix_seed(seed, 0x73616d706c6572ULL));
    // remainder classes (one extra window each) are seed-determined
    std::vector<int> order;
    for (int cls = 1; cls < num_classes; ++cls) order.push_back(cls);
    rng.shuffle(order);
    const int base = n / C_fg, rem = n % C_fg;

    std::vector<WindowSample> out;
    out.reserve(static_cast<size_t>(n));
    for (size_t k = 0; k < order.size(); ++k) {
        const int cls = order[k];
        const int count = base + (static_cast<int>(k) < rem ? 1 : 0);
        const auto& pool = cands[cls];
        for (int i = 0; i < count; ++i)
            out.push_back(pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))]);
    }
    rng.shuffle(out);
    return out;
}

WindowData extract_window(const VideoSequence& seq, int center, int temporal_window) {
    const int len = static_cast<int>(seq.frames.size());
    const int h = temporal_window / 2;
    const int start = center - h;
    if (start < 0 || start + temporal_window > len)
        throw std::invalid_argument("extract_window: window around frame " + std::to_string(center) +
                                    " does not fit a sequence of " + std::to_string(len) + " frames");
    WindowData w;
    for (int t = 0; t < temporal_window; ++t) {
        w.frames.push_back(seq.frames[start + t]);
        w.masks.push_back(seq.masks[start + t]);
        if (t > 0 && !seq.backward_flows.empty()) w.flows.push_back(seq.backward_flows[start + t - 1]);
    }
    return w;
}

void hflip_window(WindowData& w) {
    for (auto& img : w.frames) {
        Image flipped(img.width, img.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                std::memcpy(flipped.px(x, y), img.px(img.width - 1 - x, y), 3);
        img = std::move(flipped);
    }
    for (auto& m : w.masks) {
        Mask flipped(m.width, m.height);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) flipped.at(x, y) = m.at(m.width - 1 - x, y);
        m = std::move(flipped);
    }
    for (auto& f : w.flows) {
        FlowField flipped(f.width, f.height);
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) {
                const size_t src = f.idx(f.width - 1 - x, y), dst = flipped.idx(x, y);
                flipped.u[dst] = -f.u[src];
                flipped.v[dst] = f.v[src];
                flipped.valid[dst] = f.valid[src];
            }
        f = std::move(flipped);
    }
}

bool augment_hflip(WindowData& w, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("augment_hflip: p must be in [0,1]");
    const bool flip = rng.uniform() < p;
    if (flip) hflip_window(w);
    return flip;
}

Tensor<float> window_to_clip(const std::vector<Image>& frames) {
    if (frames.empty()) throw std::invalid_argument("window_to_clip: no frames");
    const int T = static_cast<int>(frames.size());
    const int H = frames[0].height, W = frames[0].width;
    Tensor<float> clip = Tensor<float>::zeros({1, 3, T, H, W});
    float* d = clip.data().data();
    const size_t plane = static_cast<size_t>(H) * W;
    for (int t = 0; t < T; ++t) {
        const Image& img = frames[t];
        if (img.width != W || img.height != H) throw std::invalid_argument("window_to_clip: frame dims differ");
        for (size_t j = 0; j < plane; ++j)
            for (int ch = 0; ch < 3; ++ch)
                d[(static_cast<size_t>(ch) * T + t) * plane + j] = static_cast<float>(img.rgb[j * 3 + ch]);
    }
    return clip;
}

namespace {

// Stacks several single-clip tensors (1,3,T,H,W) into (B,3,T,H,W).
Tensor<float> stack_clips(const std::vector<Tensor<float>>& clips) {
    Shape s = clips.front().shape();
    s[0] = static_cast<int>(clips.size());
    Tensor<float> out = Tensor<float>::zeros(s);
    const size_t item = clips.front().numel();
    for (size_t i = 0; i < clips.size(); ++i) {
        if (clips[i].numel() != item) throw std::invalid_argument("stack_clips: clip sizes differ");
        std::copy(clips[i].data().begin(), clips[i].data().end(), out.data().begin() + i * item);
    }
    return out;
}

// Central frame of a clip tensor (1,3,T,H,W) -> (1,3,H,W).
Tensor<float> central_frame_of(const Tensor<float>& clip) {
    const int T = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
    const int c = T / 2;
    Tensor<float> out = Tensor<float>::zeros({1, 3, H, W});
    const size_t plane = static_cast<size_t>(H) * W;
    for (int ch = 0; ch < 3; ++ch)
        std::copy_n(clip.data().begin() + (static_cast<size_t>(ch) * T + c) * plane, plane,
                    out.data().begin() + static_cast<size_t>(ch) * plane);
    return out;
}

void append_mask_labels(std::vector<int>& labels, const Mask& m, int num_classes) {
    for (uint8_t id : m.ids) {
        if (id >= num_classes)
            throw std::invalid_argument("mask contains class id " + std::to_string(id) + " outside [0," +
                                        std::to_string(num_classes) + ")");
        labels.push_back(id);
    }
}

struct Batch {
    Tensor<float> clip;       // (B,3,T,H,W) or (B,3,H,W) for baseline
    std::vector<int> labels;  // all frames (temporal) or central only (baseline)
};

Batch make_batch(const std::vector<LoadedSequence>& seqs, const std::vector<WindowSample>& samples, size_t begin,
                 size_t end, const TrainConfig& cfg, Rng& aug_rng) {
    Batch b;
    std::vector<Tensor<float>> clips;
    for (size_t i = begin; i < end; ++i) {
        const auto& smp = samples[i];
        WindowData w = extract_window(seqs[smp.seq_index].data, smp.center, cfg.model.temporal_window);
        augment_hflip(w, 0.5, aug_rng);
        Tensor<float> clip = window_to_clip(w.frames);
        if (cfg.baseline) {
            clips.push_back(central_frame_of(clip));
            append_mask_labels(b.labels, w.masks[cfg.model.central_frame()], cfg.model.num_classes);
        } else {
            clips.push_back(std::move(clip));
            for (const auto& m : w.masks) append_mask_labels(b.labels, m, cfg.model.num_classes);
        }
    }
    b.clip = stack_clips(clips);
    return b;
}

}  // namespace

Mask predict_central(Model<float>& model, const WindowData& window) {
    if (static_cast<int>(window.frames.size()) != model.config.temporal_window)
        throw std::invalid_argument("predict_central: window length differs from temporal_window");
    NoGradGuard ng;
    const bool was_training = model.training;
    model.training = false;
    Tensor<float> clip = window_to_clip(window.frames);
    const int T = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
    const int C = model.config.num_classes;
    const int center = model.config.central_frame();
    Mask out(W, H);
    if (model.kind == ModelKind::TemporalDecoder) {
        Tensor<float> logits = forward_logits(model, clip);  // (1,C,T,H,W)
        const size_t plane = static_cast<size_t>(H) * W;
        const float* base = logits.data().data() + static_cast<size_t>(center) * plane;
        out.ids = argmax_classes(base, C, plane, static_cast<size_t>(T) * plane);
    } else {
        Tensor<float> logits = baseline_forward_logits(model, central_frame_of(clip));  // (1,C,H,W)
        const size_t plane = static_cast<size_t>(H) * W;
        out.ids = argmax_classes(logits.data().data(), C, plane, plane);
    }
    model.training = was_training;
    return out;
}

double validation_loss(Model<float>& model, const std::vector<LoadedSequence>& seqs, int stride) {
    if (stride < 1) throw std::invalid_argument("validation_loss: stride must be >= 1");
    NoGradGuard ng;
    const bool was_training = model.training;
    model.training = false;
    const int T = model.config.temporal_window;
    const int h = T / 2;
    const int C = model.config.num_classes;
    double total = 0.0;
    long count = 0;
    for (const auto& seq : seqs) {
        const int len = static_cast<int>(seq.data.frames.size());
        for (int c = h; c + T - h - 1 < len; c += stride) {
            WindowData w = extract_window(seq.data, c, T);
            Tensor<float> clip = window_to_clip(w.frames);
            std::vector<int> labels;
            Tensor<float> loss;
            if (model.kind == ModelKind::TemporalDecoder) {
                for (const auto& m : w.masks) append_mask_labels(labels, m, C);
                std::vector<float> fw(static_cast<size_t>(T), 0.0f);
                fw[static_cast<size_t>(h)] = 1.0f;
                loss = cross_entropy(forward_logits(model, clip), labels, fw);
            } else {
                append_mask_labels(labels, w.masks[h], C);
                loss = cross_entropy2d(baseline_forward_logits(model, central_frame_of(clip)), labels);
            }
            total += static_cast<double>(loss.value());
            ++count;
        }
    }
    model.training = was_training;
    if (count == 0) throw std::invalid_argument("validation_loss: no full windows in the validation split");
    return total / static_cast<double>(count);
}

MetricsReport evaluate_sequence(Model<float>& model, const LoadedSequence& seq, int num_classes) {
    const int T = model.config.temporal_window;
    const int h = T / 2;
    MetricsReport report(num_classes);
    const int len = static_cast<int>(seq.data.frames.size());
    std::vector<Mask> preds, gts;
    std::vector<FlowField> flows;
    for (int c = h; c + T - h - 1 < len; ++c) {
        WindowData w = extract_window(seq.data, c, T);
        preds.push_back(predict_central(model, w));
        gts.push_back(seq.data.masks[c]);
        // flow mapping frame c onto c-1, for the previous prediction pair
        if (c > h && !seq.flows_missing) flows.push_back(seq.data.backward_flows[c - 1]);
    }
    if (preds.empty()) return report;
    report.merge(evaluate_stream(preds, gts, seq.flows_missing ? std::vector<FlowField>{} : flows,
                                 num_classes));
    return report;
}

MetricsReport evaluate_split(Model<float>& model, const std::vector<LoadedSequence>& seqs, int num_classes) {
    MetricsReport report(num_classes);
    for (const auto& seq : seqs) report.merge(evaluate_sequence(model, seq, num_classes));
    return report;
}

std::string loss_log_csv(const std::vector<LossRow>& rows) {
    std::string out = "epoch,step,lr,loss\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%ld,%.12g,%.9g\n", r.epoch, r.step, r.lr,
                      static_cast<double>(r.loss));
        out += buf;
    }
    return out;
}

namespace {

std::vector<LossRow> parse_loss_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open loss log: " + path);
    std::vector<LossRow> rows;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        LossRow r;
        double loss = 0.0;
        if (std::sscanf(line.c_str(), "%d,%ld,%lf,%lf", &r.epoch, &r.step, &r.lr, &loss) != 4)
            throw std::runtime_error("malformed loss log row: " + line);
        r.loss = static_cast<float>(loss);
        rows.push_back(r);
    }
    return rows;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
    config.validate();
    Dataset ds = load_dataset(config.data_root, {"train", "val"});
    if (ds.train.empty()) throw std::invalid_argument("train: dataset has no train split");
    if (ds.val.empty()) throw std::invalid_argument("train: dataset has no val split");
    for (const auto& seq : ds.train)
        if (static_cast<int>(seq.data.frames.size()) < config.model.temporal_window)
            throw std::invalid_argument("train: sequence " + seq.id + " shorter than the temporal window");
    if (ds.manifest.num_classes != config.model.num_classes)
        throw std::invalid_argument("train: dataset has " + std::to_string(ds.manifest.num_classes) +
                                    " classes but the model is configured for " +
                                    std::to_string(config.model.num_classes));

    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + config.out_dir);

    TrainResult result;
    result.best_path = (fs::path(config.out_dir) / "best.ckpt").string();
    result.last_path = (fs::path(config.out_dir) / "last.ckpt").string();
    result.log_path = (fs::path(config.out_dir) / "loss_log.csv").string();

    const ModelKind kind = config.baseline ? ModelKind::SingleFrameBaseline : ModelKind::TemporalDecoder;
    Model<float> model;
    Adam<float> opt;
    int start_epoch = 0;
    long global_step = 0;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    // resume from an interrupted run when its last checkpoint is present
    if (fs::exists(result.last_path)) {
        CheckpointMeta meta;
        model = load_checkpoint(result.last_path, &meta, &opt);
        if (meta.kind != kind) throw std::invalid_argument("train: checkpoint model kind differs from config");
        if (meta.epochs_target != config.epochs || meta.samples_per_epoch != config.samples_per_epoch ||
            meta.batch_size != config.batch_size || meta.seed != config.seed)
            throw std::invalid_argument("train: checkpoint was produced under a different schedule");
        start_epoch = meta.epochs_done;
        global_step = meta.global_step;
        best_val = meta.best_val_loss;
        result.log = parse_loss_log(result.log_path);
    } else {
        model = init_model<float>(config.model, kind, config.seed);
    }
    model.training = true;

    const long steps_per_epoch = (config.samples_per_epoch + config.batch_size - 1) / config.batch_size;
    const long total_steps = static_cast<long>(config.epochs) * steps_per_epoch;
    const int val_stride = config.val_stride > 0 ? config.val_stride : config.model.temporal_window;
    auto params = model.params.trainable();

    for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
        auto samples = sample_balanced_windows(ds.train, config.samples_per_epoch, config.model.temporal_window,
                                               config.model.num_classes, mix_seed(config.seed, 1000 + epoch));
        Rng aug_rng(mix_seed(config.seed, 2000 + epoch));
        for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(samples.size(), begin + static_cast<size_t>(config.batch_size));
            Batch batch = make_batch(ds.train, samples, begin, end, config, aug_rng);
            const double lr = onecycle_lr(global_step, total_steps, config.max_lr);

            model.params.zero_grads();
            Tensor<float> loss;
            if (config.baseline) {
                loss = cross_entropy2d(baseline_forward_logits(model, batch.clip), batch.labels);
            } else {
                std::vector<float> fw(static_cast<size_t>(config.model.temporal_window), 0.0f);
                fw[static_cast<size_t>(config.model.central_frame())] = 1.0f;
                loss = cross_entropy(forward_logits(model, batch.clip), batch.labels, fw);
            }
            const float loss_v = loss.value();
            if (!std::isfinite(loss_v))
                throw TrainingError("train: non-finite loss", epoch, global_step, lr);
            loss.backward();
            opt.step(params, static_cast<float>(lr));
            result.log.push_back({epoch, global_step, lr, loss_v});
            ++global_step;
        }

        const double val = validation_loss(model, ds.val, val_stride);
        if (!std::isfinite(val))
            throw TrainingError("train: non-finite validation loss", epoch, global_step - 1, 0.0);

        CheckpointMeta meta;
        meta.config = config.model;
        meta.kind = kind;
        meta.epochs_done = epoch + 1;
        meta.global_step = global_step;
        meta.adam_steps = opt.step_count();
        meta.seed = config.seed;
        meta.epochs_target = config.epochs;
        meta.samples_per_epoch = config.samples_per_epoch;
        meta.batch_size = config.batch_size;
        meta.max_lr = config.max_lr;
        if (val < best_val) {
            best_val = val;
            best_epoch = epoch;
            meta.best_val_loss = best_val;
            save_checkpoint(result.best_path, model, &opt, meta);
        }
        meta.best_val_loss = best_val;
        save_checkpoint(result.last_path, model, &opt, meta);
        write_text_file(result.log_path, loss_log_csv(result.log));
    }

    result.best_val_loss = best_val;
    result.best_epoch = best_epoch;
    return result;
}

// ---- checkpoint serialization ------------------------------------------

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void put_record(std::string& out, const std::string& name, const Shape& shape, const float* data, size_t n) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<uint32_t>(d));
    out.append(reinterpret_cast<const char*>(data), n * 4);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    uint32_t u32() {
        if (pos + 4 > buf.size()) throw std::runtime_error("truncated checkpoint: " + path);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string bytes(size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("truncated checkpoint: " + path);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    bool done() const { return pos == buf.size(); }
};

nlohmann::ordered_json config_to_json(const DecoderConfig& c) {
    return {{"num_layers", c.num_layers},
            {"temporal_kernel", c.temporal_kernel},
            {"feature_size", c.feature_size},
            {"temporal_window", c.temporal_window},
            {"num_classes", c.num_classes},
            {"spatial_downsample", c.spatial_downsample},
            {"encoder_widths", c.encoder_widths}};
}

DecoderConfig config_from_json(const nlohmann::json& j) {
    DecoderConfig c;
    c.num_layers = j.at("num_layers").get<int>();
    c.temporal_kernel = j.at("temporal_kernel").get<int>();
    c.feature_size = j.at("feature_size").get<int>();
    c.temporal_window = j.at("temporal_window").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.spatial_downsample = j.at("spatial_downsample").get<int>();
    c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, Model<float>& model, const Adam<float>* opt,
                     const CheckpointMeta& meta) {
    nlohmann::ordered_json j;
    j["model"] = config_to_json(model.config);
    j["kind"] = model_kind_name(model.kind);
    j["epochs_done"] = meta.epochs_done;
    j["global_step"] = meta.global_step;
    j["adam_steps"] = meta.adam_steps;
    if (std::isfinite(meta.best_val_loss))
        j["best_val_loss"] = meta.best_val_loss;
    else
        j["best_val_loss"] = nullptr;
    j["seed"] = meta.seed;
    j["epochs_target"] = meta.epochs_target;
    j["samples_per_epoch"] = meta.samples_per_epoch;
    j["batch_size"] = meta.batch_size;
    j["max_lr"] = meta.max_lr;
    const std::string js = j.dump();

    std::string out;
    out.append("STSG", 4);
    put_u32(out, 1);  // format version
    put_u32(out, static_cast<uint32_t>(js.size()));
    out.append(js);
    for (auto& e : model.params.entries())
        put_record(out, e.name, e.tensor.shape(), e.tensor.data().data(), e.tensor.numel());
    if (opt && !const_cast<Adam<float>*>(opt)->first_moments().empty()) {
        auto& m = const_cast<Adam<float>*>(opt)->first_moments();
        auto& v = const_cast<Adam<float>*>(opt)->second_moments();
        size_t i = 0;
        for (auto& e : model.params.entries()) {
            if (!e.trainable) continue;
            put_record(out, "adam.m." + e.name, e.tensor.shape(), m[i].data(), m[i].size());
            put_record(out, "adam.v." + e.name, e.tensor.shape(), v[i].data(), v[i].size());
            ++i;
        }
    }
    write_text_file(path, out);
}

Model<float> load_checkpoint(const std::string& path, CheckpointMeta* meta_out, Adam<float>* opt_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};
    if (r.bytes(4) != "STSG") throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    const uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(r.bytes(r.u32()));
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed checkpoint metadata in " + path + ": " + e.what());
    }

    CheckpointMeta meta;
    meta.config = config_from_json(j.at("model"));
    const std::string kind = j.at("kind").get<std::string>();
    meta.kind = kind == "sptcn" ? ModelKind::TemporalDecoder : ModelKind::SingleFrameBaseline;
    meta.epochs_done = j.at("epochs_done").get<int>();
    meta.global_step = j.at("global_step").get<long>();
    meta.adam_steps = j.at("adam_steps").get<long>();
    meta.best_val_loss = j.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                         : j.at("best_val_loss").get<double>();
    meta.seed = j.at("seed").get<uint64_t>();
    meta.epochs_target = j.at("epochs_target").get<int>();
    meta.samples_per_epoch = j.at("samples_per_epoch").get<int>();
    meta.batch_size = j.at("batch_size").get<int>();
    meta.max_lr = j.at("max_lr").get<double>();

    Model<float> model = init_model<float>(meta.config, meta.kind, 0);
    std::vector<std::vector<float>> adam_m, adam_v;
    size_t trainable = 0;
    for (auto& e : model.params.entries()) trainable += e.trainable ? 1 : 0;
    adam_m.reserve(trainable);
    adam_v.reserve(trainable);

    size_t params_seen = 0;
    while (!r.done()) {
        const std::string name = r.bytes(r.u32());
        const uint32_t ndim = r.u32();
        Shape shape;
        size_t numel = 1;
        for (uint32_t i = 0; i < ndim; ++i) {
            shape.push_back(static_cast<int>(r.u32()));
            numel *= static_cast<size_t>(shape.back());
        }
        const std::string payload = r.bytes(numel * 4);
        auto fill = [&](std::vector<float>& dst) {
            dst.resize(numel);
            std::memcpy(dst.data(), payload.data(), numel * 4);
        };
        if (name.rfind("adam.m.", 0) == 0) {
            adam_m.emplace_back();
            fill(adam_m.back());
        } else if (name.rfind("adam.v.", 0) == 0) {
            adam_v.emplace_back();
            fill(adam_v.back());
        } else {
            Tensor<float>& t = model.params.get(name);
            if (t.shape() != shape)
                throw std::runtime_error("checkpoint tensor " + name + " has shape " + shape_str(shape) +
                                         " but the model expects " + shape_str(t.shape()));
            std::memcpy(t.data().data(), payload.data(), numel * 4);
            ++params_seen;
        }
    }
    if (params_seen != model.params.entries().size())
        throw std::runtime_error("checkpoint " + path + " is missing " +
                                 std::to_string(model.params.entries().size() - params_seen) + " tensors");
    if (opt_out) {
        if (!adam_m.empty() && (adam_m.size() != trainable || adam_v.size() != trainable))
            throw std::runtime_error("checkpoint " + path + " has incomplete optimizer state");
        if (!adam_m.empty()) opt_out->restore(std::move(adam_m), std::move(adam_v), meta.adam_steps);
    }
    if (meta_out) *meta_out = meta;
    return model;
}

}  // namespace stseg
