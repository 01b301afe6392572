#include "test_util.hpp"

#include <fstream>

#include "mixscale/runtime/trainer.hpp"

using namespace mixscale;

TEST_CASE("empty record round-trips") {
    testutil::TempDir dir("ckpt_empty");
    CheckpointRecord rec;
    rec.fingerprint = 0xdeadbeef;
    rec.epoch = 3;
    save_checkpoint(rec, dir.sub("empty.bin"));
    CheckpointRecord loaded = load_checkpoint(dir.sub("empty.bin"));
    CHECK(loaded == rec);
}

TEST_CASE("model snapshot round-trips bit-exactly") {
    testutil::TempDir dir("ckpt_model");
    ModelConfig cfg;
    cfg.backbone = Backbone::Tiny;
    TrainConfig tcfg;
    SegmentationNetwork<float> net(cfg, 77);
    SgdOptimizer opt(net.registry(), 0.9, 5e-4);
    uint64_t fp = config_fingerprint(cfg, tcfg);

    CheckpointRecord rec = snapshot_model(net, &opt, 5, fp);
    save_checkpoint(rec, dir.sub("model.bin"));
    CheckpointRecord loaded = load_checkpoint(dir.sub("model.bin"));
    CHECK(loaded == rec);
    CHECK(loaded.epoch == 5);

    // restore into a differently-initialized model: parameters become equal
    SegmentationNetwork<float> other(cfg, 12345);
    bool differed = false;
    for (size_t i = 0; i < net.registry().entries().size(); ++i) {
        if (testutil::max_abs_diff(net.registry().entries()[i].var->value,
                                   other.registry().entries()[i].var->value) > 0)
            differed = true;
    }
    CHECK(differed);
    restore_model(other, nullptr, loaded, fp);
    for (size_t i = 0; i < net.registry().entries().size(); ++i)
        CHECK(testutil::max_abs_diff(net.registry().entries()[i].var->value,
                                     other.registry().entries()[i].var->value) == 0.0);
}

TEST_CASE("fingerprint mismatch is refused (edited group count)") {
    testutil::TempDir dir("ckpt_fp");
    ModelConfig cfg;
    cfg.backbone = Backbone::Tiny;
    TrainConfig tcfg;
    SegmentationNetwork<float> net(cfg, 1);
    CheckpointRecord rec = snapshot_model(net, nullptr, 0, config_fingerprint(cfg, tcfg));
    save_checkpoint(rec, dir.sub("m.bin"));

    ModelConfig edited = cfg;
    edited.groups = 4;  // 6 -> 4
    SegmentationNetwork<float> other(edited, 1);
    CheckpointRecord loaded = load_checkpoint(dir.sub("m.bin"));
    CHECK_THROWS_AS(
        restore_model(other, nullptr, loaded, config_fingerprint(edited, tcfg)),
        FingerprintError);
}

TEST_CASE("corrupted file fails the integrity check") {
    testutil::TempDir dir("ckpt_corrupt");
    ModelConfig cfg;
    cfg.backbone = Backbone::Tiny;
    SegmentationNetwork<float> net(cfg, 1);
    CheckpointRecord rec = snapshot_model(net, nullptr, 0, 42);
    save_checkpoint(rec, dir.sub("c.bin"));

    // flip one byte in the middle of the payload
    std::fstream f(dir.sub("c.bin"),
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4096);
    char b;
    f.seekg(4096);
    f.read(&b, 1);
    b ^= 0x40;
    f.seekp(4096);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_AS((void)load_checkpoint(dir.sub("c.bin")), IntegrityError);
}

TEST_CASE("optimizer momentum state is preserved") {
    testutil::TempDir dir("ckpt_opt");
    ModelConfig cfg;
    cfg.backbone = Backbone::Tiny;
    cfg.groups = 2;
    TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 1;
    tcfg.main_scale = 64;
    tcfg.hflip = false;
    tcfg.rotate = false;
    SegmentationNetwork<float> net(cfg, 3);
    SyntheticSource source(1, 64, 5);
    train_model(net, tcfg, source, dir.str());

    CheckpointRecord rec = load_checkpoint(dir.sub("checkpoint.bin"));
    bool some_momentum_nonzero = false;
    size_t opt_entries = 0;
    for (const auto& e : rec.entries)
        if (e.kind == 2) {
            ++opt_entries;
            for (float v : e.data)
                if (v != 0.f) some_momentum_nonzero = true;
        }
    CHECK(opt_entries > 0);
    CHECK(some_momentum_nonzero);

    SegmentationNetwork<float> resumed(cfg, 999);
    SgdOptimizer opt2(resumed.registry(), tcfg.momentum, tcfg.weight_decay);
    restore_model(resumed, &opt2, rec, config_fingerprint(cfg, tcfg));
    CheckpointRecord rec2 = snapshot_model(resumed, &opt2, rec.epoch,
                                           config_fingerprint(cfg, tcfg));
    CHECK(rec2 == rec);
}
