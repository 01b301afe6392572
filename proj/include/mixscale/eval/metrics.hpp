#pragma once

#include <array>
#include <vector>

#include "mixscale/core/tensor.hpp"

namespace mixscale {

// Metric kernels operate on double-precision maps: predictions in [0,1]
// and binary ground truth in {0,1}, same shape.
struct MetricConfig {
    double beta2 = 0.3;       // F-measure tradeoff
    int thresholds = 256;     // grid over [0,1] inclusive
    double s_alpha = 0.5;     // S-measure object/region mix
};

struct CurveStats {
    std::vector<double> curve;  // one value per threshold
    double max_value = 0;
    double mean_value = 0;
    double adaptive = 0;
};

double mae(const TensorD& pred, const TensorD& gt);

// Precision/recall/F over the threshold grid, plus the adaptive-threshold
// F value (threshold = 2*mean(pred), clamped to 1).
struct FMeasureResult {
    std::vector<double> precision;
    std::vector<double> recall;
    CurveStats f;
    bool gt_empty = false;
};
FMeasureResult f_measure(const TensorD& pred, const TensorD& gt, const MetricConfig& cfg);

// Dependency-weighted F-measure: errors of background pixels are borrowed
// from the nearest foreground pixel, smoothed with a 7x7 sigma-5 Gaussian,
// and background errors decay with the distance transform.
struct WeightedFResult {
    double value = 0;
    bool degenerate = false;  // all-zero ground truth
};
WeightedFResult weighted_f_measure(const TensorD& pred, const TensorD& gt);

// Structure measure: object- and region-aware similarity with the standard
// degenerate rules for empty/full ground truth.
double s_measure(const TensorD& pred, const TensorD& gt, double alpha = 0.5);

// Enhanced-alignment measure over the threshold grid plus adaptive value.
CurveStats e_measure(const TensorD& pred, const TensorD& gt, const MetricConfig& cfg);

// Single-threshold E-measure on an already-binarized map.
double e_measure_binary(const TensorD& fm, const TensorD& gt);

// Exact squared Euclidean distance transform to the nearest foreground
// pixel. `nearest_index` receives, per pixel, the smallest row-major index
// among all equally-near foreground pixels.
void distance_transform(const std::vector<uint8_t>& fg, int h, int w,
                        std::vector<double>& dist2, std::vector<int>& nearest_index);

inline double threshold_at(int k, int total) { return static_cast<double>(k) / (total - 1); }

}  // namespace mixscale
