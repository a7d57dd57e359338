// Command-line front end: synthetic dataset generation, training of the
// temporal decoder or its single-frame control, sliding-window evaluation,
// and the numerical validation suites.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stseg/datagen.hpp"
#include "stseg/training.hpp"
#include "stseg/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// exit codes shared across commands
constexpr int kExitInvalidConfig = 2;
constexpr int kExitIoFailure = 3;
constexpr int kExitNonFiniteLoss = 4;
constexpr int kExitCheckpointMismatch = 5;

struct GenConfig {
    int width = 64;
    int height = 64;
    int num_frames = 30;
    int num_classes = 4;
    double noise_sigma = 60.0;
    double occluder_duty = 0.5;
    int occluder_period = 6;
    int train_sequences = 40;
    int val_sequences = 5;
    int test_sequences = 10;
    double fps = 10.0;
    uint64_t seed = 0;
};

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("unknown key \"" + it.key() + "\" in " + where + " config");
}

json load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object: " + path);
    return j;
}

void write_effective_config(const std::string& dir, const ordered_json& config) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream f(fs::path(dir) / "effective_config.json");
    if (!f) throw std::runtime_error("cannot write effective config under " + dir);
    f << config.dump(2) << "\n";
}

int thread_count(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("STSEG_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

template <typename T>
void take(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

// ---- gen-data -----------------------------------------------------------

GenConfig gen_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"width", "height", "num_frames", "num_classes", "noise_sigma", "occluder_duty",
                         "occluder_period", "train_sequences", "val_sequences", "test_sequences", "fps", "seed"},
                        "gen-data");
    GenConfig g;
    take(j, "width", g.width);
    take(j, "height", g.height);
    take(j, "num_frames", g.num_frames);
    take(j, "num_classes", g.num_classes);
    take(j, "noise_sigma", g.noise_sigma);
    take(j, "occluder_duty", g.occluder_duty);
    take(j, "occluder_period", g.occluder_period);
    take(j, "train_sequences", g.train_sequences);
    take(j, "val_sequences", g.val_sequences);
    take(j, "test_sequences", g.test_sequences);
    take(j, "fps", g.fps);
    take(j, "seed", g.seed);
    return g;
}

ordered_json gen_config_to_json(const GenConfig& g) {
    return {{"width", g.width},
            {"height", g.height},
            {"num_frames", g.num_frames},
            {"num_classes", g.num_classes},
            {"noise_sigma", g.noise_sigma},
            {"occluder_duty", g.occluder_duty},
            {"occluder_period", g.occluder_period},
            {"train_sequences", g.train_sequences},
            {"val_sequences", g.val_sequences},
            {"test_sequences", g.test_sequences},
            {"fps", g.fps},
            {"seed", g.seed}};
}

int run_gen_data(const GenConfig& g, const std::string& out, int threads) {
    if (g.train_sequences < 0 || g.val_sequences < 0 || g.test_sequences < 0)
        throw std::invalid_argument("sequence counts must be non-negative");
    const int total = g.train_sequences + g.val_sequences + g.test_sequences;
    if (total < 1) throw std::invalid_argument("need at least one sequence");

    std::vector<stseg::SceneSpec> specs;
    std::vector<std::string> ids, splits;
    for (int i = 0; i < total; ++i) {
        stseg::SceneSpec spec = stseg::random_scene(g.width, g.height, g.num_frames, g.num_classes,
                                                    g.noise_sigma, g.occluder_duty, g.occluder_period,
                                                    stseg::mix_seed(g.seed, 100 + static_cast<uint64_t>(i)));
        spec.fps = g.fps;
        spec.validate();
        specs.push_back(std::move(spec));
        char id[16];
        std::snprintf(id, sizeof(id), "seq_%03d", i);
        ids.push_back(id);
        splits.push_back(i < g.train_sequences ? "train"
                                               : (i < g.train_sequences + g.val_sequences ? "val" : "test"));
    }

    std::vector<stseg::VideoSequence> sequences(specs.size());
    stseg::parallel_for(static_cast<int64_t>(specs.size()), threads,
                        [&](int64_t i) { sequences[i] = stseg::generate_sequence(specs[i]); });

    std::vector<std::string> class_names = {"background"};
    for (int c = 1; c < g.num_classes; ++c) class_names.push_back("class" + std::to_string(c));
    stseg::write_dataset(sequences, ids, splits, class_names, out);
    write_effective_config(out, gen_config_to_json(g));

    std::vector<long> histogram(static_cast<size_t>(g.num_classes), 0);
    for (const auto& seq : sequences)
        for (const auto& m : seq.masks)
            for (uint8_t id : m.ids) ++histogram[id];
    std::printf("wrote %d sequences (%d train / %d val / %d test) to %s\n", total, g.train_sequences,
                g.val_sequences, g.test_sequences, out.c_str());
    for (int c = 0; c < g.num_classes; ++c)
        std::printf("  %-12s %ld px\n", class_names[c].c_str(), histogram[c]);
    return 0;
}

// ---- train ----------------------------------------------------------------

stseg::TrainConfig train_config_from_json(const json& j) {
    reject_unknown_keys(
        j, {"epochs", "samples_per_epoch", "max_lr", "batch_size", "seed", "baseline", "val_stride", "model"},
        "train");
    stseg::TrainConfig c;
    take(j, "epochs", c.epochs);
    take(j, "samples_per_epoch", c.samples_per_epoch);
    take(j, "max_lr", c.max_lr);
    take(j, "batch_size", c.batch_size);
    take(j, "seed", c.seed);
    take(j, "baseline", c.baseline);
    take(j, "val_stride", c.val_stride);
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown_keys(m,
                            {"num_layers", "temporal_kernel", "feature_size", "temporal_window", "num_classes",
                             "spatial_downsample", "encoder_widths"},
                            "train.model");
        take(m, "num_layers", c.model.num_layers);
        take(m, "temporal_kernel", c.model.temporal_kernel);
        take(m, "feature_size", c.model.feature_size);
        take(m, "temporal_window", c.model.temporal_window);
        take(m, "num_classes", c.model.num_classes);
        take(m, "spatial_downsample", c.model.spatial_downsample);
        take(m, "encoder_widths", c.model.encoder_widths);
    }
    return c;
}

ordered_json train_config_to_json(const stseg::TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"samples_per_epoch", c.samples_per_epoch},
            {"max_lr", c.max_lr},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"baseline", c.baseline},
            {"val_stride", c.val_stride},
            {"model",
             {{"num_layers", c.model.num_layers},
              {"temporal_kernel", c.model.temporal_kernel},
              {"feature_size", c.model.feature_size},
              {"temporal_window", c.model.temporal_window},
              {"num_classes", c.model.num_classes},
              {"spatial_downsample", c.model.spatial_downsample},
              {"encoder_widths", c.model.encoder_widths}}}};
}

// ---- eval -------------------------------------------------------------------

void print_report(const stseg::MetricsReport& report) {
    auto miou = report.mean_iou();
    auto mtc = report.mean_tc();
    if (miou)
        std::printf("mean_iou %.6f over %d classes\n", *miou,
                    report.num_classes - report.undefined_iou_classes());
    else
        std::printf("mean_iou undefined (no class ever present)\n");
    if (mtc)
        std::printf("mean_tc %.6f\n", *mtc);
    else
        std::printf("mean_tc undefined (no flows or no pairs)\n");
}

std::map<std::string, std::pair<double, double>> parse_report_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open report: " + path);
    std::map<std::string, std::pair<double, double>> rows;  // class -> (iou, tc)
    std::string line;
    std::getline(f, line);
    if (line != "class,iou,iou_count,tc,tc_count")
        throw std::invalid_argument("unexpected report header in " + path);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t pos = 0;
        while (pos <= line.size()) {
            const size_t comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 5) throw std::invalid_argument("malformed report row: " + line);
        const double iou = cells[1].empty() ? -1.0 : std::stod(cells[1]);
        const double tc = cells[3].empty() ? -1.0 : std::stod(cells[3]);
        rows[cells[0]] = {iou, tc};
    }
    return rows;
}

// The published tables report "Difference (%)" as the plain difference of
// the two means scaled by 100 (percentage points), not a relative change.
void print_difference(const std::string& base_csv, const stseg::MetricsReport& current) {
    auto base = parse_report_csv(base_csv);
    auto it = base.find("__mean__");
    if (it == base.end()) throw std::invalid_argument("report " + base_csv + " has no __mean__ row");
    const auto cur_iou = current.mean_iou();
    const auto cur_tc = current.mean_tc();
    if (it->second.first >= 0.0 && cur_iou)
        std::printf("difference_pct mean_iou %+.2f\n", 100.0 * (*cur_iou - it->second.first));
    if (it->second.second >= 0.0 && cur_tc)
        std::printf("difference_pct mean_tc %+.2f\n", 100.0 * (*cur_tc - it->second.second));
}

// Ground truth evaluated against itself; a positive window skips the same
// edge frames a model with that temporal window would skip.
stseg::MetricsReport oracle_sequence_report(const stseg::LoadedSequence& seq, int num_classes, int window) {
    const auto& masks = seq.data.masks;
    const int len = static_cast<int>(masks.size());
    const int h = window > 0 ? window / 2 : 0;
    const int first = h;
    const int last = window > 0 ? len - (window - h - 1) : len;  // exclusive
    if (first >= last) return stseg::MetricsReport(num_classes);
    std::vector<stseg::Mask> preds(masks.begin() + first, masks.begin() + last);
    std::vector<stseg::FlowField> flows;
    if (!seq.flows_missing)
        for (int c = first + 1; c < last; ++c) flows.push_back(seq.data.backward_flows[c - 1]);
    return stseg::evaluate_stream(preds, preds, flows, num_classes);
}

// ---- validate ------------------------------------------------------------

int run_validate(const std::string& suite) {
    std::vector<stseg::CheckResult> results;
    if (suite == "gradcheck" || suite == "all") {
        auto r = stseg::gradcheck_suite();
        results.insert(results.end(), r.begin(), r.end());
    }
    if (suite == "rf" || suite == "all") {
        auto r = stseg::rf_suite();
        results.insert(results.end(), r.begin(), r.end());
    }
    if (suite == "metrics" || suite == "all") {
        auto r = stseg::metrics_suite();
        results.insert(results.end(), r.begin(), r.end());
    }
    if (suite == "isolation" || suite == "all") {
        auto r = stseg::isolation_suite();
        results.insert(results.end(), r.begin(), r.end());
    }
    if (results.empty()) throw std::invalid_argument("unknown suite: " + suite);
    std::fputs(stseg::format_results(results).c_str(), stdout);
    const bool ok = stseg::all_pass(results);
    std::printf("%s (%zu checks)\n", ok ? "all checks passed" : "FAILURES present", results.size());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal segmentation workbench"};
    app.require_subcommand(1);

    int threads_flag = 0;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic video benchmark");
    std::string gen_out, gen_config_path;
    GenConfig gen_cfg;
    gen->add_option("--threads", threads_flag,
                    "worker threads for sequence generation (default 1 or $STSEG_THREADS)");
    gen->add_option("--out", gen_out, "dataset output directory")->required();
    gen->add_option("--config", gen_config_path, "JSON config file (flags override)");
    auto* g_w = gen->add_option("--width", gen_cfg.width);
    auto* g_h = gen->add_option("--height", gen_cfg.height);
    auto* g_f = gen->add_option("--frames", gen_cfg.num_frames);
    auto* g_c = gen->add_option("--num-classes", gen_cfg.num_classes);
    auto* g_n = gen->add_option("--noise-sigma", gen_cfg.noise_sigma);
    auto* g_d = gen->add_option("--occluder-duty", gen_cfg.occluder_duty);
    auto* g_p = gen->add_option("--occluder-period", gen_cfg.occluder_period);
    auto* g_tr = gen->add_option("--train-seqs", gen_cfg.train_sequences);
    auto* g_va = gen->add_option("--val-seqs", gen_cfg.val_sequences);
    auto* g_te = gen->add_option("--test-seqs", gen_cfg.test_sequences);
    auto* g_fps = gen->add_option("--fps", gen_cfg.fps);
    auto* g_s = gen->add_option("--seed", gen_cfg.seed);

    // train
    auto* tr = app.add_subcommand("train", "train the temporal decoder or the single-frame baseline");
    std::string tr_data, tr_out, tr_config_path;
    stseg::TrainConfig tr_cfg;
    bool tr_baseline = false;
    tr->add_option("--data", tr_data, "dataset root")->required();
    tr->add_option("--out", tr_out, "output directory for checkpoints and logs")->required();
    tr->add_option("--config", tr_config_path, "JSON config file (flags override)");
    tr->add_flag("--baseline", tr_baseline, "train the single-frame control head");
    auto* t_e = tr->add_option("--epochs", tr_cfg.epochs);
    auto* t_sp = tr->add_option("--samples", tr_cfg.samples_per_epoch);
    auto* t_lr = tr->add_option("--max-lr", tr_cfg.max_lr);
    auto* t_b = tr->add_option("--batch", tr_cfg.batch_size);
    auto* t_s = tr->add_option("--seed", tr_cfg.seed);
    auto* t_vs = tr->add_option("--val-stride", tr_cfg.val_stride);
    auto* t_w = tr->add_option("--window", tr_cfg.model.temporal_window);
    auto* t_l = tr->add_option("--layers", tr_cfg.model.num_layers);
    auto* t_k = tr->add_option("--kernel", tr_cfg.model.temporal_kernel);
    auto* t_ft = tr->add_option("--features", tr_cfg.model.feature_size);
    auto* t_nc = tr->add_option("--num-classes", tr_cfg.model.num_classes);
    auto* t_ew = tr->add_option("--encoder-widths", tr_cfg.model.encoder_widths)->delimiter(',');

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (or the GT oracle) on one split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_report, ev_compare;
    bool ev_oracle = false;
    int ev_window = 0;
    ev->add_option("--threads", threads_flag,
                   "worker threads across sequences (default 1 or $STSEG_THREADS)");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file");
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--split", ev_split, "split to evaluate (train/val/test)");
    ev->add_option("--report", ev_report, "write the CSV report here");
    ev->add_option("--compare", ev_compare, "baseline report CSV; prints difference rows");
    ev->add_flag("--oracle", ev_oracle, "evaluate ground truth against itself");
    ev->add_option("--window", ev_window, "override temporal window for edge skipping (oracle mode)");

    // validate
    auto* va = app.add_subcommand("validate", "run numerical validation suites");
    std::string va_suite = "all";
    va->add_option("--suite", va_suite, "gradcheck | rf | metrics | isolation | all");

    CLI11_PARSE(app, argc, argv);
    const int threads = thread_count(threads_flag);

    try {
        if (gen->parsed()) {
            GenConfig cfg;
            if (!gen_config_path.empty()) cfg = gen_config_from_json(load_config_file(gen_config_path));
            if (g_w->count()) cfg.width = gen_cfg.width;
            if (g_h->count()) cfg.height = gen_cfg.height;
            if (g_f->count()) cfg.num_frames = gen_cfg.num_frames;
            if (g_c->count()) cfg.num_classes = gen_cfg.num_classes;
            if (g_n->count()) cfg.noise_sigma = gen_cfg.noise_sigma;
            if (g_d->count()) cfg.occluder_duty = gen_cfg.occluder_duty;
            if (g_p->count()) cfg.occluder_period = gen_cfg.occluder_period;
            if (g_tr->count()) cfg.train_sequences = gen_cfg.train_sequences;
            if (g_va->count()) cfg.val_sequences = gen_cfg.val_sequences;
            if (g_te->count()) cfg.test_sequences = gen_cfg.test_sequences;
            if (g_fps->count()) cfg.fps = gen_cfg.fps;
            if (g_s->count()) cfg.seed = gen_cfg.seed;
            try {
                return run_gen_data(cfg, gen_out, threads);
            } catch (const std::invalid_argument&) {
                throw;
            } catch (const std::exception& e) {
                std::fprintf(stderr, "error: %s\n", e.what());
                return kExitIoFailure;
            }
        }

        if (tr->parsed()) {
            stseg::TrainConfig cfg;
            if (!tr_config_path.empty()) cfg = train_config_from_json(load_config_file(tr_config_path));
            if (tr_baseline) cfg.baseline = true;
            if (t_e->count()) cfg.epochs = tr_cfg.epochs;
            if (t_sp->count()) cfg.samples_per_epoch = tr_cfg.samples_per_epoch;
            if (t_lr->count()) cfg.max_lr = tr_cfg.max_lr;
            if (t_b->count()) cfg.batch_size = tr_cfg.batch_size;
            if (t_s->count()) cfg.seed = tr_cfg.seed;
            if (t_vs->count()) cfg.val_stride = tr_cfg.val_stride;
            if (t_w->count()) cfg.model.temporal_window = tr_cfg.model.temporal_window;
            if (t_l->count()) cfg.model.num_layers = tr_cfg.model.num_layers;
            if (t_k->count()) cfg.model.temporal_kernel = tr_cfg.model.temporal_kernel;
            if (t_ft->count()) cfg.model.feature_size = tr_cfg.model.feature_size;
            if (t_nc->count()) cfg.model.num_classes = tr_cfg.model.num_classes;
            if (t_ew->count()) cfg.model.encoder_widths = tr_cfg.model.encoder_widths;
            cfg.data_root = tr_data;
            cfg.out_dir = tr_out;
            cfg.validate();
            write_effective_config(tr_out, train_config_to_json(cfg));
            try {
                stseg::TrainResult res = stseg::train(cfg);
                std::printf("trained %d epochs; best val loss %.6f (epoch %d)\n", cfg.epochs,
                            res.best_val_loss, res.best_epoch);
                std::printf("checkpoints: %s, %s\nloss log: %s\n", res.best_path.c_str(),
                            res.last_path.c_str(), res.log_path.c_str());
                return 0;
            } catch (const stseg::TrainingError& e) {
                std::fprintf(stderr, "error: %s\n", e.what());
                return kExitNonFiniteLoss;
            }
        }

        if (ev->parsed()) {
            if (!ev_oracle && ev_ckpt.empty())
                throw std::invalid_argument("eval: --checkpoint is required unless --oracle is given");
            stseg::Dataset ds = stseg::load_dataset(ev_data, {ev_split});
            if (ds.split(ev_split).empty())
                throw std::invalid_argument("eval: split \"" + ev_split + "\" is empty");
            const int num_classes = ds.manifest.num_classes;
            bool missing_flows = false;
            for (const auto& seq : ds.split(ev_split)) missing_flows |= seq.flows_missing;
            if (missing_flows)
                std::fprintf(stderr, "warning: some sequences have no flow files; TC is omitted for them\n");

            // per-sequence reports merged in order, so the result is
            // byte-identical for every thread count
            const auto& seqs = ds.split(ev_split);
            std::vector<stseg::MetricsReport> parts(seqs.size(), stseg::MetricsReport(num_classes));
            if (ev_oracle) {
                stseg::parallel_for(static_cast<int64_t>(seqs.size()), threads, [&](int64_t i) {
                    parts[i] = oracle_sequence_report(seqs[i], num_classes, ev_window);
                });
            } else {
                stseg::CheckpointMeta meta;
                stseg::Model<float> model;
                try {
                    model = stseg::load_checkpoint(ev_ckpt, &meta);
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "error: %s\n", e.what());
                    return kExitCheckpointMismatch;
                }
                if (meta.config.num_classes != num_classes) {
                    std::fprintf(stderr,
                                 "error: checkpoint expects %d classes but the dataset has %d\n",
                                 meta.config.num_classes, num_classes);
                    return kExitCheckpointMismatch;
                }
                if (ev_window > 0 && ev_window != meta.config.temporal_window) {
                    std::fprintf(stderr, "error: checkpoint temporal window is %d, cannot evaluate at %d\n",
                                 meta.config.temporal_window, ev_window);
                    return kExitCheckpointMismatch;
                }
                // each worker borrows a model replica; extra replicas load on demand
                std::vector<std::unique_ptr<stseg::Model<float>>> idle;
                std::mutex idle_mutex;
                idle.push_back(std::make_unique<stseg::Model<float>>(std::move(model)));
                stseg::parallel_for(static_cast<int64_t>(seqs.size()), threads, [&](int64_t i) {
                    std::unique_ptr<stseg::Model<float>> m;
                    {
                        std::lock_guard<std::mutex> lock(idle_mutex);
                        if (!idle.empty()) {
                            m = std::move(idle.back());
                            idle.pop_back();
                        }
                    }
                    if (!m) m = std::make_unique<stseg::Model<float>>(stseg::load_checkpoint(ev_ckpt));
                    parts[i] = stseg::evaluate_sequence(*m, seqs[i], num_classes);
                    std::lock_guard<std::mutex> lock(idle_mutex);
                    idle.push_back(std::move(m));
                });
            }
            stseg::MetricsReport report(num_classes);
            for (const auto& p : parts) report.merge(p);
            print_report(report);
            if (!ev_report.empty()) {
                std::ofstream f(ev_report, std::ios::binary);
                if (!f) throw std::runtime_error("cannot write report: " + ev_report);
                f << report.to_csv();
                write_effective_config(fs::path(ev_report).parent_path().string(),
                                       ordered_json{{"checkpoint", ev_ckpt},
                                                    {"data", ev_data},
                                                    {"split", ev_split},
                                                    {"oracle", ev_oracle}});
            }
            if (!ev_compare.empty()) print_difference(ev_compare, report);
            return 0;
        }

        if (va->parsed()) return run_validate(va_suite);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
