#pragma once

#include <functional>
#include <random>

#include "mixscale/model/network.hpp"

namespace mixscale {

struct GradCheckResult {
    double max_rel_err = 0;
    double max_abs_err = 0;
    size_t coords_checked = 0;
    bool finite = true;
    std::string worst_coord;
};

// Central finite differences of a scalar loss against the analytic
// gradients of the given leaves, over a random coordinate subsample.
// `loss_fn` must rebuild the graph from the current leaf values.
template <typename T>
GradCheckResult finite_diff_check(const std::vector<std::pair<std::string, Var<T>>>& leaves,
                                  const std::function<Var<T>()>& loss_fn,
                                  size_t max_coords, double eps, uint64_t seed) {
    for (auto& [name, leaf] : leaves) {
        leaf->requires_grad = true;
        leaf->grad = TensorT<T>();
    }
    Var<T> loss = loss_fn();
    backward(loss);

    std::vector<std::pair<size_t, size_t>> coords;  // (leaf index, flat index)
    for (size_t li = 0; li < leaves.size(); ++li)
        for (size_t i = 0; i < leaves[li].second->value.size(); ++i)
            coords.push_back({li, i});
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > max_coords) coords.resize(max_coords);

    GradCheckResult result;
    result.coords_checked = coords.size();
    for (auto [li, i] : coords) {
        const auto& [name, leaf] = leaves[li];
        T saved = leaf->value.v[i];
        double analytic =
            leaf->grad.v.empty() ? 0.0 : static_cast<double>(leaf->grad.v[i]);
        if (!std::isfinite(analytic)) {
            result.finite = false;
            result.worst_coord = name + "[" + std::to_string(i) + "]";
            break;
        }
        double lp, lm;
        {
            NoGradGuard no_grad;
            leaf->value.v[i] = saved + static_cast<T>(eps);
            lp = static_cast<double>(loss_fn()->value.v[0]);
            leaf->value.v[i] = saved - static_cast<T>(eps);
            lm = static_cast<double>(loss_fn()->value.v[0]);
            leaf->value.v[i] = saved;
        }
        double fd = (lp - lm) / (2 * eps);
        double abs_err = std::abs(fd - analytic);
        double rel = abs_err / std::max({std::abs(fd), std::abs(analytic), 1e-8});
        if (abs_err < 1e-9) rel = 0.0;  // below the FD noise floor
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst_coord = name + "[" + std::to_string(i) + "]";
        }
        result.max_abs_err = std::max(result.max_abs_err, abs_err);
    }
    return result;
}

enum class GradCheckModule { Identity, Objective, Siu, Hmu, EndToEndTiny };

GradCheckResult gradcheck(GradCheckModule module, double eps = 1e-5,
                          size_t max_coords = 64, uint64_t seed = 7);

// Max abs difference between the integrated group iteration and its
// decoupled per-slice convolution form, inference mode, random weights.
double decoupled_equivalence_diff(int groups, int group_channels, uint64_t seed,
                                  bool zero_weights = false);

// Fraction of prediction values strictly inside (band_lo, band_hi).
double polarity_fraction(const TensorF& pred, double band_lo = 0.3, double band_hi = 0.7);

size_t count_parameters(const ModelConfig& cfg);
long long count_flops(const ModelConfig& cfg, int input_size);

struct DiagReport {
    size_t parameter_count = 0;
    long long flop_count = 0;
    int flop_input_size = 0;
    std::map<std::string, GradCheckResult> gradchecks;      // by module name
    std::map<int, double> equivalence;                      // by group count
    double polarity = -1;                                   // -1 when skipped
    std::string polarity_skip_reason;
    bool passed = true;
};

DiagReport run_diagnostics(const ModelConfig& cfg, int input_size, bool with_gradcheck,
                           const std::string& checkpoint_path = "");
std::string diag_report_json(const DiagReport& report);

}  // namespace mixscale
