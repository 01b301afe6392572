#include "mixscale/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mixscale/data/dataset.hpp"
#include "mixscale/data/image_io.hpp"

namespace fs = std::filesystem;

namespace mixscale {

namespace {

std::map<std::string, std::string> list_by_stem(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw DatasetError("evaluation directory does not exist: " + dir);
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
        out[entry.path().stem().string()] = entry.path().string();
    }
    return out;
}

TensorD to_unit_map(const TensorF& gray) {
    TensorD out(1, 1, gray.h, gray.w);
    for (size_t i = 0; i < gray.size(); ++i) out.v[i] = gray.v[i] / 255.0;
    return out;
}

TensorD binarize(const TensorF& gray) {
    TensorD out(1, 1, gray.h, gray.w);
    for (size_t i = 0; i < gray.size(); ++i) out.v[i] = gray.v[i] > 127.0f ? 1.0 : 0.0;
    return out;
}

}  // namespace

MetricReport evaluate_folders(const std::string& pred_dir, const std::string& gt_dir,
                              const MetricConfig& cfg, bool fig9_band) {
    auto preds = list_by_stem(pred_dir);
    auto gts = list_by_stem(gt_dir);

    std::vector<std::string> missing;
    for (const auto& [stem, path] : gts)
        if (!preds.count(stem)) missing.push_back(stem);
    if (!missing.empty()) {
        std::string msg = "predictions missing for stems:";
        for (const auto& s : missing) msg += " " + s;
        throw DatasetError(msg);
    }
    check(!gts.empty(), "evaluate_folders: no ground-truth images in " + gt_dir);

    MetricReport rep;
    const int K = cfg.thresholds;
    rep.precision.assign(K, 0.0);
    rep.recall.assign(K, 0.0);
    rep.f_curve.assign(K, 0.0);
    rep.e_curve.assign(K, 0.0);
    rep.histogram.assign(256, 0);

    // Per-image metrics are stored per slot and reduced afterwards, so the
    // aggregate does not depend on evaluation order.
    for (const auto& [stem, gt_path] : gts) {
        TensorF gt_raw = read_image_gray(gt_path);
        TensorF pred_raw = read_image_gray(preds.at(stem));
        if (pred_raw.h != gt_raw.h || pred_raw.w != gt_raw.w) {
            TensorF unit = pred_raw;
            pred_raw = resize_bilinear(unit, gt_raw.h, gt_raw.w);
        }
        TensorD pred = to_unit_map(pred_raw);
        TensorD gt = binarize(gt_raw);

        rep.mae += mae(pred, gt);
        rep.smeasure += s_measure(pred, gt, cfg.s_alpha);
        auto wf = weighted_f_measure(pred, gt);
        rep.weighted_f += wf.value;
        if (wf.degenerate) ++rep.degenerate_gt;
        auto fm = f_measure(pred, gt, cfg);
        for (int k = 0; k < K; ++k) {
            rep.precision[k] += fm.precision[k];
            rep.recall[k] += fm.recall[k];
            rep.f_curve[k] += fm.f.curve[k];
        }
        rep.f_adaptive += fm.f.adaptive;
        auto em = e_measure(pred, gt, cfg);
        for (int k = 0; k < K; ++k) rep.e_curve[k] += em.curve[k];
        rep.e_adaptive += em.adaptive;

        for (double p : pred.v) {
            int bin = static_cast<int>(std::lround(p * 255.0));
            bin = std::clamp(bin, 0, 255);
            if (fig9_band && (bin < 20 || bin > 245)) continue;
            ++rep.histogram[bin];
        }
        ++rep.num_images;
    }

    const double n = static_cast<double>(rep.num_images);
    rep.mae /= n;
    rep.smeasure /= n;
    rep.weighted_f /= n;
    rep.f_adaptive /= n;
    rep.e_adaptive /= n;
    for (int k = 0; k < K; ++k) {
        rep.precision[k] /= n;
        rep.recall[k] /= n;
        rep.f_curve[k] /= n;
        rep.e_curve[k] /= n;
    }
    rep.f_max = *std::max_element(rep.f_curve.begin(), rep.f_curve.end());
    rep.f_mean = std::accumulate(rep.f_curve.begin(), rep.f_curve.end(), 0.0) / K;
    rep.e_max = *std::max_element(rep.e_curve.begin(), rep.e_curve.end());
    rep.e_mean = std::accumulate(rep.e_curve.begin(), rep.e_curve.end(), 0.0) / K;
    return rep;
}

std::string report_to_json(const MetricReport& rep) {
    nlohmann::json j;
    j["num_images"] = rep.num_images;
    j["smeasure"] = rep.smeasure;
    j["weighted_fmeasure"] = rep.weighted_f;
    j["mae"] = rep.mae;
    j["fmeasure"] = {{"max", rep.f_max}, {"mean", rep.f_mean}, {"adaptive", rep.f_adaptive}};
    j["emeasure"] = {{"max", rep.e_max}, {"mean", rep.e_mean}, {"adaptive", rep.e_adaptive}};
    j["degenerate_gt"] = rep.degenerate_gt;
    return j.dump(2);
}

void write_report_files(const MetricReport& rep, const std::string& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "report.json");
        out << report_to_json(rep) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "pr_curve.csv");
        out << "threshold,precision,recall,fbeta\n";
        const int K = static_cast<int>(rep.f_curve.size());
        char line[160];
        for (int k = 0; k < K; ++k) {
            std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%.9g\n",
                          threshold_at(k, K), rep.precision[k], rep.recall[k],
                          rep.f_curve[k]);
            out << line;
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "em_curve.csv");
        out << "threshold,em\n";
        const int K = static_cast<int>(rep.e_curve.size());
        char line[80];
        for (int k = 0; k < K; ++k) {
            std::snprintf(line, sizeof(line), "%.9g,%.9g\n", threshold_at(k, K),
                          rep.e_curve[k]);
            out << line;
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "histogram.csv");
        out << "bin,count\n";
        for (int b = 0; b < 256; ++b)
            out << b << "," << rep.histogram[b] << "\n";
    }
}

}  // namespace mixscale
