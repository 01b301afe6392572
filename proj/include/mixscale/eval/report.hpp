#pragma once

#include <string>

#include "mixscale/eval/metrics.hpp"

namespace mixscale {

// Dataset-level aggregation of the per-image metrics, plus PR / F / E
// curves and the stacked 8-bit prediction histogram.
struct MetricReport {
    size_t num_images = 0;
    double smeasure = 0;
    double weighted_f = 0;
    double mae = 0;
    double f_max = 0, f_mean = 0, f_adaptive = 0;
    double e_max = 0, e_mean = 0, e_adaptive = 0;
    std::vector<double> precision, recall, f_curve, e_curve;  // per threshold
    std::vector<long long> histogram;                         // 256 bins
    size_t degenerate_gt = 0;  // all-zero ground truths encountered
};

// Computes the report for stem-matched prediction/ground-truth folders.
// Predictions are resized (bilinear) to the ground-truth resolution first.
// When fig9_band is set, histogram counts are restricted to bins 20..245.
MetricReport evaluate_folders(const std::string& pred_dir, const std::string& gt_dir,
                              const MetricConfig& cfg, bool fig9_band);

// Report + curve CSVs + histogram CSV into out_dir.
void write_report_files(const MetricReport& report, const std::string& out_dir);

std::string report_to_json(const MetricReport& report);

}  // namespace mixscale
