// Acceptance gate: runs every top-level acceptance criterion at its stated
// tolerance and prints exactly one [PASS]/[FAIL] line per criterion. Exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stseg/datagen.hpp"
#include "stseg/metrics.hpp"
#include "stseg/model.hpp"
#include "stseg/training.hpp"
#include "stseg/validation.hpp"

using namespace stseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Criterion {
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Criterion> g_criteria;

void record(const std::string& name, bool pass, const std::string& detail) {
    g_criteria.push_back({name, pass, detail});
    std::printf("[%s] %-28s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return {};
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::map<std::string, std::string> slurp_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return files;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(STSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status != -1 && WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

// Scratch root for everything the gate writes; removed at exit.
struct TempRoot {
    fs::path path;
    TempRoot() {
        path = fs::temp_directory_path() /
               ("stseg_acceptance_" + std::to_string(Clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempRoot() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// ---- criterion 1: gradient correctness ------------------------------------

void check_gradients() {
    const auto t0 = Clock::now();
    auto results = gradcheck_suite(20, 1e-4);
    const double elapsed = seconds_since(t0);
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.value);
    const bool ok = all_pass(results) && elapsed < 120.0;
    record("gradient correctness", ok,
           fmt("max rel err %.3e over %zu checks in %.1fs (tol 1e-4, budget 120s)", worst,
               results.size(), elapsed));
}

// ---- criterion 2: receptive-field law --------------------------------------

void check_receptive_field() {
    const auto t0 = Clock::now();
    const int expected[] = {7, 11, 19, 35};
    bool analytic_ok = true;
    for (int n = 1; n <= 4; ++n) analytic_ok &= (receptive_field(n, 3) == expected[n - 1]);
    auto results = rf_suite(4);
    const bool ok = analytic_ok && all_pass(results) && seconds_since(t0) < 60.0;
    std::string measured;
    for (const auto& r : results) measured += fmt("%d ", static_cast<int>(r.value));
    record("receptive-field law", ok,
           fmt("probe measured %svs analytic 7 11 19 35 in %.1fs", measured.c_str(),
               seconds_since(t0)));
}

// ---- criterion 3: metric oracle equivalence ---------------------------------

void check_metric_oracle() {
    auto results = metrics_suite(20, 1e-12);
    double brute = 0.0, published = 0.0;
    for (const auto& r : results) {
        if (r.name == "metrics/brute_force") brute = r.value;
        if (r.name.rfind("metrics/published", 0) == 0) published = std::max(published, r.value);
    }
    record("metric oracle equivalence", all_pass(results),
           fmt("brute-force gap %.3e (tol 1e-12); published-mean gap %.3e (tol 1e-3)", brute,
               published));
}

// ---- criterion 4: central-frame loss isolation ------------------------------

void check_isolation() {
    auto results = isolation_suite(5);
    long nonzero = 0;
    bool bitwise = true;
    for (const auto& r : results) {
        if (r.name.rfind("isolation/grad_zero", 0) == 0) nonzero += static_cast<long>(r.value);
        if (r.name.rfind("isolation/loss_bitwise", 0) == 0) bitwise &= r.pass;
    }
    record("central-frame isolation", all_pass(results),
           fmt("%ld non-central gradient elements != 0; loss bitwise-stable: %s", nonzero,
               bitwise ? "yes" : "no"));
}

// ---- criterion 5: directional synthetic reproduction ------------------------

struct ArmScores {
    double miou = 0.0;
    double tc = 0.0;
};

ArmScores train_and_eval(const std::string& data_root, const fs::path& out_dir, bool baseline,
                         uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 24;
    cfg.samples_per_epoch = 64;
    cfg.max_lr = 1e-3;
    cfg.batch_size = 4;
    cfg.seed = seed;
    cfg.baseline = baseline;
    cfg.model.num_layers = 2;
    cfg.model.temporal_kernel = 3;
    cfg.model.feature_size = 16;
    cfg.model.temporal_window = 6;
    cfg.model.num_classes = 4;
    cfg.model.spatial_downsample = 4;
    cfg.model.encoder_widths = {16, 24};
    cfg.data_root = data_root;
    cfg.out_dir = out_dir.string();

    TrainResult res = train(cfg);
    // model selection by lowest validation loss
    Model<float> model = load_checkpoint(res.best_path);
    Dataset ds = load_dataset(data_root, {"test"});
    MetricsReport report = evaluate_split(model, ds.test, cfg.model.num_classes);
    ArmScores s;
    s.miou = report.mean_iou().value_or(0.0);
    s.tc = report.mean_tc().value_or(0.0);
    return s;
}

void check_directional(const TempRoot& tmp) {
    const auto t0 = Clock::now();

    // the synthetic benchmark: 64x64, 4 classes, duty-0.5 occluder, noisy
    const fs::path root = tmp.path / "bench";
    std::vector<VideoSequence> seqs;
    std::vector<std::string> ids, splits;
    const int n_train = 8, n_val = 2, n_test = 4;
    for (int i = 0; i < n_train + n_val + n_test; ++i) {
        SceneSpec spec = random_scene(64, 64, 16, 4, 60.0, 0.5, 6, 7777 + static_cast<uint64_t>(i));
        seqs.push_back(generate_sequence(spec));
        ids.push_back("seq" + std::to_string(i));
        splits.push_back(i < n_train ? "train" : (i < n_train + n_val ? "val" : "test"));
    }
    write_dataset(seqs, ids, splits, {"background", "class1", "class2", "class3"}, root.string());
    seqs.clear();

    int tc_wins = 0;
    double miou_t = 0.0, miou_b = 0.0;
    std::string per_seed;
    for (uint64_t seed : {1, 2, 3}) {
        ArmScores t = train_and_eval(root.string(), tmp.path / ("sptcn_" + std::to_string(seed)),
                                     false, seed);
        ArmScores b = train_and_eval(root.string(), tmp.path / ("base_" + std::to_string(seed)),
                                     true, seed);
        if (t.tc > b.tc) ++tc_wins;
        miou_t += t.miou / 3.0;
        miou_b += b.miou / 3.0;
        per_seed += fmt("seed%llu tc %.3f/%.3f miou %.3f/%.3f; ",
                        static_cast<unsigned long long>(seed), t.tc, b.tc, t.miou, b.miou);
    }

    const double elapsed = seconds_since(t0);
    const bool ok = tc_wins >= 2 && miou_t >= miou_b - 0.02 && elapsed < 3600.0;
    record("directional reproduction", ok,
           fmt("%ssptcn TC wins %d/3, mean miou %.3f vs %.3f (floor -0.02), %.0fs (budget 3600s)",
               per_seed.c_str(), tc_wins, miou_t, miou_b, elapsed));
}

// ---- criterion 6: datagen/warp consistency ----------------------------------

void check_warp_consistency() {
    long mismatches = 0, checked = 0;
    for (uint64_t seed = 50; seed < 55; ++seed) {
        SceneSpec spec = random_scene(48, 48, 14, 4, 0.0, 0.5, 4, seed);
        VideoSequence seq = generate_sequence(spec);
        for (size_t t = 1; t < seq.masks.size(); ++t) {
            WarpResult wr = warp_mask(seq.masks[t - 1], seq.backward_flows[t - 1]);
            for (size_t i = 0; i < wr.valid.size(); ++i) {
                if (!wr.valid[i]) continue;
                ++checked;
                if (wr.warped.ids[i] != seq.masks[t].ids[i]) ++mismatches;
            }
        }
    }
    record("datagen/warp consistency", mismatches == 0 && checked > 0,
           fmt("%ld mismatched pixels across %ld valid warped pixels, 5 rigid scenes", mismatches,
               checked));
}

// ---- criterion 7: seeded reproducibility ------------------------------------

void check_reproducibility(const TempRoot& tmp) {
    const fs::path a = tmp.path / "repro_a", b = tmp.path / "repro_b";
    const std::string gen_flags =
        " --width 32 --height 32 --frames 10 --num-classes 3 --train-seqs 2 --val-seqs 1"
        " --test-seqs 1 --noise-sigma 20 --seed 5";
    bool data_ok = run_cli("gen-data --out " + a.string() + gen_flags) == 0 &&
                   run_cli("gen-data --out " + b.string() + gen_flags) == 0 &&
                   slurp_tree(a) == slurp_tree(b);

    const std::string train_flags =
        " --epochs 2 --samples 4 --batch 2 --max-lr 1e-3 --seed 5 --window 6 --layers 1"
        " --features 8 --num-classes 3 --encoder-widths 4,6";
    const fs::path o1 = tmp.path / "repro_run1", o2 = tmp.path / "repro_run2";
    bool log_ok = run_cli("train --data " + a.string() + " --out " + o1.string() + train_flags) == 0 &&
                  run_cli("train --data " + a.string() + " --out " + o2.string() + train_flags) == 0 &&
                  !slurp(o1 / "loss_log.csv").empty() &&
                  slurp(o1 / "loss_log.csv") == slurp(o2 / "loss_log.csv") &&
                  slurp(o1 / "last.ckpt") == slurp(o2 / "last.ckpt");

    const fs::path r1 = tmp.path / "repro_r1.csv", r2 = tmp.path / "repro_r2.csv";
    const std::string eval_flags = "eval --checkpoint " + (o1 / "last.ckpt").string() + " --data " +
                                   a.string() + " --split test --report ";
    bool eval_ok = run_cli(eval_flags + r1.string()) == 0 && run_cli(eval_flags + r2.string()) == 0 &&
                   !slurp(r1).empty() && slurp(r1) == slurp(r2);

    record("seeded reproducibility", data_ok && log_ok && eval_ok,
           fmt("dataset bytes %s, loss log + checkpoint bytes %s, eval CSV bytes %s",
               data_ok ? "identical" : "DIFFER", log_ok ? "identical" : "DIFFER",
               eval_ok ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
    TempRoot tmp;
    const auto t0 = Clock::now();

    check_gradients();
    check_receptive_field();
    check_metric_oracle();
    check_isolation();
    check_directional(tmp);
    check_warp_consistency();
    check_reproducibility(tmp);

    int passed = 0;
    for (const auto& c : g_criteria) passed += c.pass ? 1 : 0;
    std::printf("acceptance: %d/%zu criteria passed in %.0fs\n", passed, g_criteria.size(),
                seconds_since(t0));
    return passed == static_cast<int>(g_criteria.size()) ? 0 : 1;
}
