#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixscale {

enum class Backbone { ResNet50, Tiny };
enum class MergeStrategy { Attention, Addition };
enum class DecoderUnit { Mix, Cbr };
enum class UalForm { Pow, Exp, WeightedBce, None };
enum class ScheduleKind { Cosine, Linear, Constant };

struct ModelConfig {
    Backbone backbone = Backbone::ResNet50;
    int base_channels = 64;
    int groups = 6;           // channel groups per mix block
    int group_channels = 32;  // channels per group
    std::vector<double> scales = {0.5, 1.0, 1.5};
    MergeStrategy merge = MergeStrategy::Attention;
    DecoderUnit decoder_unit = DecoderUnit::Mix;
    int fuse_repeat = 1;      // CBR blocks per decoder fusion stage (cbr unit)
    int head_repeat = 1;      // CBR blocks in the prediction head
    int decoder_kernel = 3;
    int head_mid_channels = 32;
    bool pretrained = false;
    std::string pretrained_path;

    bool has_scale(double s) const;
    void validate() const;
};

struct UalSpec {
    UalForm form = UalForm::Pow;
    double alpha = 2.0;
};

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Cosine;
    double lambda_min = 0.0;
    double lambda_max = 1.0;
    double t_start = 0.0;  // iteration fraction, linear kind only
    double t_end = 1.0;
    double constant_value = 1.0;
};

struct TrainConfig {
    double base_lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double warmup_fraction = 0.05;
    int epochs = 40;
    int batch_size = 8;
    int main_scale = 384;
    bool hflip = true;
    bool rotate = true;
    uint64_t seed = 1;
    int workers = 0;  // 0 = synchronous loading
    UalSpec ual;
    ScheduleSpec schedule;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_root;
    std::string out_dir = "out";
    std::string checkpoint;  // for infer/eval
    std::string pred_dir;    // for eval
    std::string gt_dir;      // for eval
    bool fig9_band = false;  // restrict histogram to bins 20..245
    int diag_input_size = 384;
    bool diag_gradcheck = true;
    std::string dump_debug;  // when set, write attention/feature dumps here
};

// Flat key=value config text with dotted key paths; '#' starts a comment.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Applies a single "key=value" override; unknown keys are hard errors.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical serialization used for hashing; covers model and train configs.
std::string canonical_config(const ModelConfig& m, const TrainConfig& t);
uint64_t config_fingerprint(const ModelConfig& m, const TrainConfig& t);

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);

std::string to_string(Backbone b);
std::string to_string(MergeStrategy m);
std::string to_string(DecoderUnit d);
std::string to_string(UalForm f);
std::string to_string(ScheduleKind k);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mixscale
