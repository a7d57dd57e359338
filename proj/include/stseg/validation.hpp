#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stseg/metrics.hpp"

namespace stseg {

// One validation check: `value` is the measured quantity (max relative
// error, frame count, mismatch count...) and `pass` its verdict against
// `threshold` under the check's own comparison.
struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

bool all_pass(const std::vector<CheckResult>& results);
std::string format_results(const std::vector<CheckResult>& results);

// Finite-difference verification of every differentiable operation plus
// end-to-end model checks, in double precision. One op sweep per seed.
std::vector<CheckResult> gradcheck_suite(int num_seeds = 20, double tol = 1e-4);

// Perturbation probe: measures how many input frames influence the central
// output frame of an eval-mode model and compares with the analytic
// receptive field, for N in [1, max_layers], k_t = 3.
std::vector<CheckResult> rf_suite(int max_layers = 4);

// Metrics pipeline vs an independently coded brute-force recomputation on
// random small streams, plus the published per-class means the aggregation
// must reproduce.
std::vector<CheckResult> metrics_suite(int num_streams = 20, double tol = 1e-12);

// Brute-force reference used by metrics_suite: same metric definitions,
// separately implemented with straight per-pixel loops.
MetricsReport brute_force_report(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                                 const std::vector<FlowField>& flows, int num_classes);

// Central-frame loss isolation: non-central logits receive exactly zero
// gradient, and editing non-central labels leaves the loss bit-identical.
std::vector<CheckResult> isolation_suite(int num_seeds = 5);

}  // namespace stseg
