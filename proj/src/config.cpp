#include "mixscale/config/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mixscale {

bool ModelConfig::has_scale(double s) const {
    for (double e : scales)
        if (std::abs(e - s) < 1e-9) return true;
    return false;
}

void ModelConfig::validate() const {
    if (base_channels <= 0) throw ConfigError("model.base_channels must be positive");
    if (groups < 2) throw ConfigError("model.groups must be >= 2");
    if (group_channels <= 0) throw ConfigError("model.group_channels must be positive");
    if (scales.empty()) throw ConfigError("model.scales must be nonempty");
    if (!has_scale(1.0)) throw ConfigError("model.scales must contain the main scale 1.0");
    for (double s : scales)
        if (std::abs(s - 0.5) > 1e-9 && std::abs(s - 1.0) > 1e-9 && std::abs(s - 1.5) > 1e-9)
            throw ConfigError("model.scales entries must be among {0.5, 1.0, 1.5}");
    if (fuse_repeat <= 0) throw ConfigError("model.fuse_repeat must be positive");
    if (head_repeat <= 0) throw ConfigError("model.head_repeat must be positive");
    if (decoder_kernel <= 0 || decoder_kernel % 2 == 0)
        throw ConfigError("model.decoder_kernel must be odd and positive");
    if (head_mid_channels <= 0) throw ConfigError("model.head_mid_channels must be positive");
    if ((group_channels * groups) % 4 != 0)
        throw ConfigError("model.groups * model.group_channels must be divisible by 4");
}

void TrainConfig::validate() const {
    if (base_lr <= 0) throw ConfigError("train.base_lr must be positive");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (main_scale % 32 != 0) throw ConfigError("train.main_scale must be divisible by 32");
    if (warmup_fraction < 0 || warmup_fraction >= 1)
        throw ConfigError("train.warmup_fraction must be in [0,1)");
    if (ual.alpha <= 0) throw ConfigError("loss.alpha must be positive");
    if (ual.alpha < 1 && (ual.form == UalForm::Pow))
        std::fprintf(stderr,
                     "[warn] loss.alpha < 1 with the pow form is known not to converge\n");
    if (schedule.kind == ScheduleKind::Linear && schedule.t_end <= schedule.t_start)
        throw ConfigError("loss.lambda_t_end must be greater than loss.lambda_t_start");
    if (schedule.lambda_min > schedule.lambda_max)
        throw ConfigError("loss.lambda_min must not exceed loss.lambda_max");
}

std::string to_string(Backbone b) { return b == Backbone::ResNet50 ? "resnet50" : "tiny"; }
std::string to_string(MergeStrategy m) {
    return m == MergeStrategy::Attention ? "attention" : "addition";
}
std::string to_string(DecoderUnit d) { return d == DecoderUnit::Mix ? "mix" : "cbr"; }
std::string to_string(UalForm f) {
    switch (f) {
        case UalForm::Pow: return "pow";
        case UalForm::Exp: return "exp";
        case UalForm::WeightedBce: return "weighted_bce";
        default: return "none";
    }
}
std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::Linear: return "linear";
        default: return "constant";
    }
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for " + key + ": '" + v + "'");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer value for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean value for " + key + ": '" + v + "'");
}

std::vector<double> parse_scales(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(key, item));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              out.end());
    return out;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& m = cfg.model;
    auto& t = cfg.train;
    if (key == "model.backbone") {
        if (value == "resnet50") m.backbone = Backbone::ResNet50;
        else if (value == "tiny") m.backbone = Backbone::Tiny;
        else throw ConfigError("model.backbone must be resnet50|tiny, got '" + value + "'");
    } else if (key == "model.base_channels") m.base_channels = (int)parse_int(key, value);
    else if (key == "model.groups") m.groups = (int)parse_int(key, value);
    else if (key == "model.group_channels") m.group_channels = (int)parse_int(key, value);
    else if (key == "model.scales") m.scales = parse_scales(key, value);
    else if (key == "model.merge") {
        if (value == "attention") m.merge = MergeStrategy::Attention;
        else if (value == "addition") m.merge = MergeStrategy::Addition;
        else throw ConfigError("model.merge must be attention|addition, got '" + value + "'");
    } else if (key == "model.decoder_unit") {
        if (value == "mix") m.decoder_unit = DecoderUnit::Mix;
        else if (value == "cbr") m.decoder_unit = DecoderUnit::Cbr;
        else throw ConfigError("model.decoder_unit must be mix|cbr, got '" + value + "'");
    } else if (key == "model.fuse_repeat") m.fuse_repeat = (int)parse_int(key, value);
    else if (key == "model.head_repeat") m.head_repeat = (int)parse_int(key, value);
    else if (key == "model.decoder_kernel") m.decoder_kernel = (int)parse_int(key, value);
    else if (key == "model.head_mid_channels")
        m.head_mid_channels = (int)parse_int(key, value);
    else if (key == "model.pretrained") m.pretrained = parse_bool(key, value);
    else if (key == "model.pretrained_path") m.pretrained_path = value;
    else if (key == "train.base_lr") t.base_lr = parse_double(key, value);
    else if (key == "train.momentum") t.momentum = parse_double(key, value);
    else if (key == "train.weight_decay") t.weight_decay = parse_double(key, value);
    else if (key == "train.warmup_fraction") t.warmup_fraction = parse_double(key, value);
    else if (key == "train.epochs") t.epochs = (int)parse_int(key, value);
    else if (key == "train.batch_size") t.batch_size = (int)parse_int(key, value);
    else if (key == "train.main_scale") t.main_scale = (int)parse_int(key, value);
    else if (key == "train.hflip") t.hflip = parse_bool(key, value);
    else if (key == "train.rotate") t.rotate = parse_bool(key, value);
    else if (key == "train.seed") t.seed = (uint64_t)parse_int(key, value);
    else if (key == "train.workers") t.workers = (int)parse_int(key, value);
    else if (key == "loss.form") {
        if (value == "pow") t.ual.form = UalForm::Pow;
        else if (value == "exp") t.ual.form = UalForm::Exp;
        else if (value == "weighted_bce") t.ual.form = UalForm::WeightedBce;
        else if (value == "none") t.ual.form = UalForm::None;
        else throw ConfigError("loss.form must be pow|exp|weighted_bce|none, got '" + value + "'");
    } else if (key == "loss.alpha") t.ual.alpha = parse_double(key, value);
    else if (key == "loss.lambda_schedule") {
        if (value == "cosine") t.schedule.kind = ScheduleKind::Cosine;
        else if (value == "linear") t.schedule.kind = ScheduleKind::Linear;
        else if (value == "constant") t.schedule.kind = ScheduleKind::Constant;
        else throw ConfigError("loss.lambda_schedule must be cosine|linear|constant");
    } else if (key == "loss.lambda_min") t.schedule.lambda_min = parse_double(key, value);
    else if (key == "loss.lambda_max") t.schedule.lambda_max = parse_double(key, value);
    else if (key == "loss.lambda_t_start") t.schedule.t_start = parse_double(key, value);
    else if (key == "loss.lambda_t_end") t.schedule.t_end = parse_double(key, value);
    else if (key == "loss.lambda_constant")
        t.schedule.constant_value = parse_double(key, value);
    else if (key == "data.root") cfg.data_root = value;
    else if (key == "run.out_dir") cfg.out_dir = value;
    else if (key == "run.checkpoint") cfg.checkpoint = value;
    else if (key == "eval.pred_dir") cfg.pred_dir = value;
    else if (key == "eval.gt_dir") cfg.gt_dir = value;
    else if (key == "eval.fig9_band") cfg.fig9_band = parse_bool(key, value);
    else if (key == "diag.input_size") cfg.diag_input_size = (int)parse_int(key, value);
    else if (key == "diag.gradcheck") cfg.diag_gradcheck = parse_bool(key, value);
    else if (key == "run.dump_debug") cfg.dump_debug = value;
    else throw ConfigError("unknown config key: '" + key + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value, got '" + assignment + "'");
    std::string key = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    set_key(cfg, key, value);
}

std::string canonical_config(const ModelConfig& m, const TrainConfig& t) {
    char buf[64];
    auto fmt = [&buf](double d) {
        std::snprintf(buf, sizeof(buf), "%.17g", d);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "model.backbone=" << to_string(m.backbone) << "\n"
       << "model.base_channels=" << m.base_channels << "\n"
       << "model.groups=" << m.groups << "\n"
       << "model.group_channels=" << m.group_channels << "\n";
    os << "model.scales=";
    for (size_t i = 0; i < m.scales.size(); ++i)
        os << (i ? "," : "") << fmt(m.scales[i]);
    os << "\n";
    os << "model.merge=" << to_string(m.merge) << "\n"
       << "model.decoder_unit=" << to_string(m.decoder_unit) << "\n"
       << "model.fuse_repeat=" << m.fuse_repeat << "\n"
       << "model.head_repeat=" << m.head_repeat << "\n"
       << "model.decoder_kernel=" << m.decoder_kernel << "\n"
       << "model.head_mid_channels=" << m.head_mid_channels << "\n"
       << "model.pretrained=" << (m.pretrained ? "true" : "false") << "\n"
       << "train.base_lr=" << fmt(t.base_lr) << "\n"
       << "train.momentum=" << fmt(t.momentum) << "\n"
       << "train.weight_decay=" << fmt(t.weight_decay) << "\n"
       << "train.warmup_fraction=" << fmt(t.warmup_fraction) << "\n"
       << "train.epochs=" << t.epochs << "\n"
       << "train.batch_size=" << t.batch_size << "\n"
       << "train.main_scale=" << t.main_scale << "\n"
       << "train.hflip=" << (t.hflip ? "true" : "false") << "\n"
       << "train.rotate=" << (t.rotate ? "true" : "false") << "\n"
       << "train.seed=" << t.seed << "\n"
       << "loss.form=" << to_string(t.ual.form) << "\n"
       << "loss.alpha=" << fmt(t.ual.alpha) << "\n"
       << "loss.lambda_schedule=" << to_string(t.schedule.kind) << "\n"
       << "loss.lambda_min=" << fmt(t.schedule.lambda_min) << "\n"
       << "loss.lambda_max=" << fmt(t.schedule.lambda_max) << "\n"
       << "loss.lambda_t_start=" << fmt(t.schedule.t_start) << "\n"
       << "loss.lambda_t_end=" << fmt(t.schedule.t_end) << "\n"
       << "loss.lambda_constant=" << fmt(t.schedule.constant_value) << "\n";
    return os.str();
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t config_fingerprint(const ModelConfig& m, const TrainConfig& t) {
    std::string s = canonical_config(m, t);
    return fnv1a64(s.data(), s.size());
}

}  // namespace mixscale
