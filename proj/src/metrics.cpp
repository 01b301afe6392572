#include "mixscale/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mixscale {

namespace {

constexpr double kEps = 2.2204460492503131e-16;  // MATLAB eps, used by the
                                                 // published metric code

void check_pair(const TensorD& pred, const TensorD& gt) {
    check(pred.same_shape(gt), "metrics: shape mismatch " + pred.shape_str() + " vs " +
                                   gt.shape_str());
    check(pred.n == 1 && pred.c == 1, "metrics: expected single-channel maps");
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

}  // namespace

double mae(const TensorD& pred, const TensorD& gt) {
    check_pair(pred, gt);
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.v[i] - gt.v[i]);
    return acc / pred.size();
}

FMeasureResult f_measure(const TensorD& pred, const TensorD& gt, const MetricConfig& cfg) {
    check_pair(pred, gt);
    const int K = cfg.thresholds;
    FMeasureResult out;
    out.precision.resize(K);
    out.recall.resize(K);
    out.f.curve.resize(K);

    size_t gt_pos = 0;
    for (double g : gt.v) gt_pos += g > 0.5 ? 1 : 0;
    out.gt_empty = gt_pos == 0;

    auto f_at = [&](double tau, double& precision, double& recall) {
        size_t tp = 0, fp = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            if (pred.v[i] >= tau) {
                if (gt.v[i] > 0.5) ++tp;
                else ++fp;
            }
        }
        precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        recall = gt_pos > 0 ? static_cast<double>(tp) / gt_pos : 0.0;
        double denom = cfg.beta2 * precision + recall;
        return denom > 0 ? (1 + cfg.beta2) * precision * recall / denom : 0.0;
    };

    for (int k = 0; k < K; ++k)
        out.f.curve[k] = f_at(threshold_at(k, K), out.precision[k], out.recall[k]);
    out.f.max_value = *std::max_element(out.f.curve.begin(), out.f.curve.end());
    out.f.mean_value = mean_of(out.f.curve);

    double mean_p = std::accumulate(pred.v.begin(), pred.v.end(), 0.0) / pred.size();
    double tau_adp = std::min(2.0 * mean_p, 1.0);
    double p_unused, r_unused;
    out.f.adaptive = f_at(tau_adp, p_unused, r_unused);
    return out;
}

void distance_transform(const std::vector<uint8_t>& fg, int h, int w,
                        std::vector<double>& dist2, std::vector<int>& nearest_index) {
    const double kInf = std::numeric_limits<double>::infinity();
    dist2.assign(static_cast<size_t>(h) * w, kInf);
    nearest_index.assign(static_cast<size_t>(h) * w, -1);

    // pass 1: per column, squared distance to the nearest foreground row
    std::vector<double> coldist(static_cast<size_t>(h) * w, kInf);
    for (int x = 0; x < w; ++x) {
        std::vector<int> rows;
        for (int y = 0; y < h; ++y)
            if (fg[y * w + x]) rows.push_back(y);
        if (rows.empty()) continue;
        for (int y = 0; y < h; ++y) {
            double best = kInf;
            for (int r : rows) {
                double d = static_cast<double>(y - r) * (y - r);
                if (d < best) best = d;
            }
            coldist[y * w + x] = best;
        }
    }
    // pass 2: 1-D lower envelope across columns (Felzenszwalb-Huttenlocher)
    std::vector<int> v(w);
    std::vector<double> z(w + 1);
    for (int y = 0; y < h; ++y) {
        const double* f = &coldist[static_cast<size_t>(y) * w];
        int k = 0;
        v[0] = 0;
        z[0] = -kInf;
        z[1] = kInf;
        bool any = f[0] < kInf;
        for (int q = 1; q < w; ++q) {
            if (f[q] == kInf) continue;
            if (!any) {
                v[0] = q;
                z[0] = -kInf;
                z[1] = kInf;
                any = true;
                continue;
            }
            double s;
            while (true) {
                int p = v[k];
                s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
                if (s <= z[k] && k > 0) --k;
                else break;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kInf;
        }
        if (!any) continue;
        k = 0;
        for (int q = 0; q < w; ++q) {
            while (z[k + 1] < q) ++k;
            double d = static_cast<double>(q - v[k]) * (q - v[k]) + f[v[k]];
            dist2[static_cast<size_t>(y) * w + q] = d;
        }
    }

    // resolve the canonical (smallest row-major index) nearest pixel
    auto is_square = [](long long x, long long& root) {
        if (x < 0) return false;
        root = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(x))));
        while (root * root > x) --root;
        while ((root + 1) * (root + 1) <= x) ++root;
        return root * root == x;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t at = static_cast<size_t>(y) * w + x;
            if (dist2[at] == kInf) continue;
            long long D = static_cast<long long>(std::llround(dist2[at]));
            int R = static_cast<int>(std::llround(std::floor(std::sqrt(static_cast<double>(D)))));
            for (int dy = -R; dy <= R && nearest_index[at] < 0; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                long long rem = D - static_cast<long long>(dy) * dy;
                long long dx;
                if (!is_square(rem, dx)) continue;
                for (long long sx : {-dx, dx}) {
                    int xx = x + static_cast<int>(sx);
                    if (xx < 0 || xx >= w) continue;
                    if (fg[yy * w + xx]) {
                        nearest_index[at] = yy * w + xx;
                        break;
                    }
                    if (sx == dx) break;  // avoid rechecking dx == 0
                }
            }
        }
}

WeightedFResult weighted_f_measure(const TensorD& pred, const TensorD& gt) {
    check_pair(pred, gt);
    const int h = pred.h, w = pred.w;
    const size_t N = pred.size();

    std::vector<uint8_t> fg(N);
    size_t gt_pos = 0;
    for (size_t i = 0; i < N; ++i) {
        fg[i] = gt.v[i] > 0.5 ? 1 : 0;
        gt_pos += fg[i];
    }
    if (gt_pos == 0) return {0.0, true};

    std::vector<double> E(N);
    for (size_t i = 0; i < N; ++i) E[i] = std::abs(pred.v[i] - (fg[i] ? 1.0 : 0.0));

    std::vector<double> dist2;
    std::vector<int> nearest;
    distance_transform(fg, h, w, dist2, nearest);

    // background pixels borrow the error of their nearest foreground pixel
    std::vector<double> Et = E;
    for (size_t i = 0; i < N; ++i)
        if (!fg[i] && nearest[i] >= 0) Et[i] = E[nearest[i]];

    // 7x7 Gaussian (sigma 5), zero padding, as in the published code
    constexpr int kHalf = 3;
    double kernel[7][7];
    double ksum = 0;
    for (int i = -kHalf; i <= kHalf; ++i)
        for (int j = -kHalf; j <= kHalf; ++j) {
            kernel[i + kHalf][j + kHalf] = std::exp(-(i * i + j * j) / (2.0 * 25.0));
            ksum += kernel[i + kHalf][j + kHalf];
        }
    for (auto& row : kernel)
        for (double& v : row) v /= ksum;

    std::vector<double> EA(N, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -kHalf; i <= kHalf; ++i) {
                int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                for (int j = -kHalf; j <= kHalf; ++j) {
                    int xx = x + j;
                    if (xx < 0 || xx >= w) continue;
                    acc += Et[yy * w + xx] * kernel[i + kHalf][j + kHalf];
                }
            }
            EA[y * w + x] = acc;
        }

    // pixel importance: smoothed error inside the object where it helps,
    // distance-decayed weight outside
    std::vector<double> Ew(N);
    for (size_t i = 0; i < N; ++i) {
        double min_e_ea = (fg[i] && EA[i] < E[i]) ? EA[i] : E[i];
        double B = fg[i] ? 1.0
                         : 2.0 - std::exp(std::log(0.5) / 5.0 * std::sqrt(dist2[i]));
        Ew[i] = min_e_ea * B;
    }

    double sum_ew_fg = 0, sum_ew_bg = 0;
    for (size_t i = 0; i < N; ++i)
        (fg[i] ? sum_ew_fg : sum_ew_bg) += Ew[i];

    double tpw = static_cast<double>(gt_pos) - sum_ew_fg;
    double fpw = sum_ew_bg;
    double recall = 1.0 - sum_ew_fg / static_cast<double>(gt_pos);
    double precision = tpw / (kEps + tpw + fpw);
    double q = 2.0 * recall * precision / (kEps + recall + precision);
    return {q, false};
}

namespace {

struct RegionStats {
    double mean_p = 0, mean_g = 0, var_p = 0, var_g = 0, cov = 0;
    size_t count = 0;
};

double region_ssim(const TensorD& pred, const TensorD& gt, int y0, int y1, int x0,
                   int x1) {
    long long count = static_cast<long long>(y1 - y0) * (x1 - x0);
    if (count <= 0) return 0.0;
    double mean_p = 0, mean_g = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            mean_p += pred.at(0, 0, y, x);
            mean_g += gt.at(0, 0, y, x);
        }
    mean_p /= count;
    mean_g /= count;
    double var_p = 0, var_g = 0, cov = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            double dp = pred.at(0, 0, y, x) - mean_p;
            double dg = gt.at(0, 0, y, x) - mean_g;
            var_p += dp * dp;
            var_g += dg * dg;
            cov += dp * dg;
        }
    double norm = static_cast<double>(count) - 1 + kEps;
    var_p /= norm;
    var_g /= norm;
    cov /= norm;
    double alpha = 4 * mean_p * mean_g * cov;
    double beta = (mean_p * mean_p + mean_g * mean_g) * (var_p + var_g);
    if (alpha != 0) return alpha / (beta + kEps);
    if (alpha == 0 && beta == 0) return 1.0;
    return 0.0;
}

double object_score(const TensorD& pred, const std::vector<uint8_t>& mask, bool flip) {
    double mean = 0;
    size_t count = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            mean += flip ? 1.0 - pred.v[i] : pred.v[i];
            ++count;
        }
    if (count == 0) return 0.0;
    mean /= count;
    double var = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            double d = (flip ? 1.0 - pred.v[i] : pred.v[i]) - mean;
            var += d * d;
        }
    double sigma = count > 1 ? std::sqrt(var / (count - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + sigma + kEps);
}

}  // namespace

double s_measure(const TensorD& pred, const TensorD& gt, double alpha) {
    check_pair(pred, gt);
    const size_t N = pred.size();
    double gt_mean = std::accumulate(gt.v.begin(), gt.v.end(), 0.0) / N;
    double pred_mean = std::accumulate(pred.v.begin(), pred.v.end(), 0.0) / N;
    if (gt_mean == 0.0) return 1.0 - pred_mean;
    if (gt_mean == 1.0) return pred_mean;

    std::vector<uint8_t> fg(N), bg(N);
    for (size_t i = 0; i < N; ++i) {
        fg[i] = gt.v[i] > 0.5 ? 1 : 0;
        bg[i] = 1 - fg[i];
    }
    double s_object = gt_mean * object_score(pred, fg, false) +
                      (1.0 - gt_mean) * object_score(pred, bg, true);

    // centroid in 1-based coordinates, as in the published code
    const int rows = gt.h, cols = gt.w;
    double total = 0, sum_x = 0, sum_y = 0;
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x) {
            double g = gt.at(0, 0, y, x);
            total += g;
            sum_x += g * (x + 1);
            sum_y += g * (y + 1);
        }
    int X = static_cast<int>(std::llround(sum_x / total));
    int Y = static_cast<int>(std::llround(sum_y / total));

    double area = static_cast<double>(rows) * cols;
    double w1 = static_cast<double>(X) * Y / area;
    double w2 = static_cast<double>(cols - X) * Y / area;
    double w3 = static_cast<double>(X) * (rows - Y) / area;
    double w4 = 1.0 - w1 - w2 - w3;
    double s_region = w1 * region_ssim(pred, gt, 0, Y, 0, X) +
                      w2 * region_ssim(pred, gt, 0, Y, X, cols) +
                      w3 * region_ssim(pred, gt, Y, rows, 0, X) +
                      w4 * region_ssim(pred, gt, Y, rows, X, cols);

    double q = alpha * s_object + (1.0 - alpha) * s_region;
    return std::max(q, 0.0);
}

double e_measure_binary(const TensorD& fm, const TensorD& gt) {
    check_pair(fm, gt);
    const size_t N = fm.size();
    double sum_gt = std::accumulate(gt.v.begin(), gt.v.end(), 0.0);
    double enhanced_sum = 0;
    if (sum_gt == 0) {
        for (double v : fm.v) enhanced_sum += 1.0 - v;
    } else if (sum_gt == static_cast<double>(N)) {
        for (double v : fm.v) enhanced_sum += v;
    } else {
        double mu_fm = std::accumulate(fm.v.begin(), fm.v.end(), 0.0) / N;
        double mu_gt = sum_gt / N;
        for (size_t i = 0; i < N; ++i) {
            double afm = fm.v[i] - mu_fm;
            double agt = gt.v[i] - mu_gt;
            double align = 2.0 * agt * afm / (agt * agt + afm * afm + kEps);
            enhanced_sum += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return enhanced_sum / (static_cast<double>(N) - 1 + kEps);
}

CurveStats e_measure(const TensorD& pred, const TensorD& gt, const MetricConfig& cfg) {
    check_pair(pred, gt);
    const int K = cfg.thresholds;
    CurveStats out;
    out.curve.resize(K);
    TensorD fm(1, 1, pred.h, pred.w);
    auto binarize_and_score = [&](double tau) {
        for (size_t i = 0; i < pred.size(); ++i) fm.v[i] = pred.v[i] >= tau ? 1.0 : 0.0;
        return e_measure_binary(fm, gt);
    };
    for (int k = 0; k < K; ++k) out.curve[k] = binarize_and_score(threshold_at(k, K));
    out.max_value = *std::max_element(out.curve.begin(), out.curve.end());
    out.mean_value = mean_of(out.curve);
    double mean_p = std::accumulate(pred.v.begin(), pred.v.end(), 0.0) / pred.size();
    out.adaptive = binarize_and_score(std::min(2.0 * mean_p, 1.0));
    return out;
}

}  // namespace mixscale
