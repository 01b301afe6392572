#include "mixscale/runtime/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "mixscale/loss/objective.hpp"

namespace fs = std::filesystem;

namespace mixscale {

SgdOptimizer::SgdOptimizer(ParamRegistry<float>& reg, double momentum,
                           double weight_decay)
    : reg_(&reg), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& e : reg.entries())
        if (e.kind == EntryKind::Param) velocity_.push_back(TensorF::zeros_like(e.var->value));
}

void SgdOptimizer::step(double lr) {
    size_t vi = 0;
    for (const auto& e : reg_->entries()) {
        if (e.kind != EntryKind::Param) continue;
        TensorF& vel = velocity_[vi++];
        auto& p = e.var->value;
        if (e.var->grad.v.empty()) continue;
        const auto& g = e.var->grad;
        for (size_t i = 0; i < p.v.size(); ++i) {
            float d = g.v[i] + static_cast<float>(weight_decay_) * p.v[i];
            vel.v[i] = static_cast<float>(momentum_) * vel.v[i] + d;
            p.v[i] -= static_cast<float>(lr) * vel.v[i];
        }
    }
}

std::vector<CheckpointEntry> SgdOptimizer::state_entries() const {
    std::vector<CheckpointEntry> out;
    size_t vi = 0;
    for (const auto& e : reg_->entries()) {
        if (e.kind != EntryKind::Param) continue;
        const TensorF& vel = velocity_[vi++];
        out.push_back({2, "opt.momentum." + e.name, vel.n, vel.c, vel.h, vel.w, vel.v});
    }
    return out;
}

void SgdOptimizer::load_state(const std::vector<CheckpointEntry>& entries) {
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name["" + e.name] = &e;
    size_t vi = 0;
    for (const auto& e : reg_->entries()) {
        if (e.kind != EntryKind::Param) continue;
        auto it = by_name.find("opt.momentum." + e.name);
        check(it != by_name.end(), "checkpoint: missing optimizer state for " + e.name);
        check(it->second->data.size() == velocity_[vi].v.size(),
              "checkpoint: optimizer state size mismatch for " + e.name);
        velocity_[vi].v = it->second->data;
        ++vi;
    }
}

double lr_at(const TrainConfig& cfg, long long iter, long long total_iters) {
    long long warmup = static_cast<long long>(std::ceil(cfg.warmup_fraction * total_iters));
    if (warmup > 0 && iter < warmup)
        return cfg.base_lr * static_cast<double>(iter + 1) / static_cast<double>(warmup);
    if (total_iters <= warmup) return cfg.base_lr;
    return cfg.base_lr *
           (1.0 - static_cast<double>(iter - warmup) / static_cast<double>(total_iters - warmup));
}

CheckpointRecord snapshot_model(const SegmentationNetwork<float>& net,
                                const SgdOptimizer* opt, int epoch,
                                uint64_t fingerprint) {
    CheckpointRecord record;
    record.fingerprint = fingerprint;
    record.epoch = epoch;
    for (const auto& e : net.registry().entries()) {
        const auto& t = e.var->value;
        record.entries.push_back({static_cast<uint8_t>(e.kind == EntryKind::Param ? 0 : 1),
                                  e.name, t.n, t.c, t.h, t.w, t.v});
    }
    if (opt) {
        auto state = opt->state_entries();
        record.entries.insert(record.entries.end(), state.begin(), state.end());
    }
    return record;
}

void restore_model(SegmentationNetwork<float>& net, SgdOptimizer* opt,
                   const CheckpointRecord& record, uint64_t expected_fingerprint) {
    if (record.fingerprint != expected_fingerprint) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "checkpoint fingerprint %016llx does not match configured model "
                      "%016llx; refusing to load",
                      static_cast<unsigned long long>(record.fingerprint),
                      static_cast<unsigned long long>(expected_fingerprint));
        throw FingerprintError(buf);
    }
    std::map<std::string, const CheckpointEntry*> by_name;
    std::vector<CheckpointEntry> opt_state;
    for (const auto& e : record.entries) {
        if (e.kind == 2) opt_state.push_back(e);
        else by_name[e.name] = &e;
    }
    for (const auto& e : net.registry().entries()) {
        auto it = by_name.find(e.name);
        check(it != by_name.end(), "checkpoint: missing tensor " + e.name);
        check(it->second->data.size() == e.var->value.v.size(),
              "checkpoint: size mismatch for " + e.name);
        e.var->value.v = it->second->data;
    }
    if (opt) opt->load_state(opt_state);
}

TrainResult train_model(SegmentationNetwork<float>& net, const TrainConfig& cfg,
                        const SampleSource& source, const std::string& out_dir) {
    cfg.validate();
    const size_t n = source.size();
    check(n > 0, "train: empty sample source");
    const long long batches_per_epoch =
        std::max<long long>(1, static_cast<long long>(n) / cfg.batch_size);
    const long long total_iters = batches_per_epoch * cfg.epochs;
    const uint64_t fingerprint = config_fingerprint(net.config(), cfg);

    SgdOptimizer opt(net.registry(), cfg.momentum, cfg.weight_decay);

    TrainResult result;
    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        result.loss_log_path = (fs::path(out_dir) / "loss_log.csv").string();
        log_file.open(result.loss_log_path, std::ios::trunc);
        log_file << "iteration,lr,lambda,bcel,ual,total\n";
    }

    long long iter = 0;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0x5u));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (long long b = 0; b < batches_per_epoch; ++b, ++iter) {
            std::vector<TensorF> images, masks;
            for (int k = 0; k < cfg.batch_size; ++k) {
                size_t idx = order[(b * cfg.batch_size + k) % n];
                LoadedSample s = source.load(idx, static_cast<uint64_t>(epoch));
                images.push_back(std::move(s.image));
                masks.push_back(std::move(s.mask));
            }
            Var<float> batch = make_leaf<float>(stack_batch(images), false);
            TensorF gt = stack_batch(masks);

            net.registry().zero_grad();
            auto pyramid = net.build_pyramid(batch);
            Var<float> pred = net.forward(pyramid, /*training=*/true);
            auto loss = total_loss<float>(pred, gt, cfg.ual, cfg.schedule,
                                          static_cast<double>(iter),
                                          static_cast<double>(total_iters));
            backward(loss.total);
            double lr = lr_at(cfg, iter, total_iters);
            opt.step(lr);

            IterationLog row{iter, lr, loss.lambda, loss.bcel_value, loss.ual_value,
                             static_cast<double>(loss.total->value.v[0])};
            result.log.push_back(row);
            if (log_file) {
                char line[200];
                std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                              row.iteration, row.lr, row.lambda, row.bcel, row.ual,
                              row.total);
                log_file << line;
                log_file.flush();
            }
        }
        if (!out_dir.empty()) {
            result.checkpoint_path = (fs::path(out_dir) / "checkpoint.bin").string();
            save_checkpoint(snapshot_model(net, &opt, epoch + 1, fingerprint),
                            result.checkpoint_path);
        }
    }
    return result;
}

}  // namespace mixscale
