#include "test_util.hpp"

#include "mixscale/config/config.hpp"

using namespace mixscale;

TEST_CASE("config parsing: defaults, values, comments") {
    RunConfig cfg = parse_config_text(
        "# comment line\n"
        "model.backbone = tiny\n"
        "model.groups=4\n"
        "model.scales = 1.0, 1.5\n"
        "train.base_lr = 0.01   # trailing comment\n"
        "loss.form = exp\n"
        "loss.alpha = 0.5\n");
    CHECK(cfg.model.backbone == Backbone::Tiny);
    CHECK(cfg.model.groups == 4);
    REQUIRE(cfg.model.scales.size() == 2);
    CHECK(cfg.model.scales[0] == doctest::Approx(1.0));
    CHECK(cfg.model.scales[1] == doctest::Approx(1.5));
    CHECK(cfg.train.base_lr == doctest::Approx(0.01));
    CHECK(cfg.train.ual.form == UalForm::Exp);
    CHECK(cfg.train.ual.alpha == doctest::Approx(0.5));
    // untouched defaults survive
    CHECK(cfg.model.base_channels == 64);
    CHECK(cfg.train.epochs == 40);
    CHECK(cfg.train.main_scale == 384);
    CHECK(cfg.train.schedule.kind == ScheduleKind::Cosine);
}

TEST_CASE("unknown keys and malformed lines are hard errors") {
    CHECK_THROWS_AS((void)parse_config_text("model.bogus_field=1\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config_text("no equals sign here\n"), ConfigError);
    CHECK_THROWS_AS((void)parse_config_text("model.groups=six\n"), ConfigError);
    RunConfig cfg;
    CHECK_THROWS_AS(apply_override(cfg, "nope.nothing=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "model.groups"), ConfigError);
    apply_override(cfg, "model.groups=8");
    CHECK(cfg.model.groups == 8);
}

TEST_CASE("validation enforces the documented invariants") {
    RunConfig cfg;
    cfg.model.validate();
    cfg.train.validate();

    SUBCASE("main scale must be present") {
        cfg.model.scales = {0.5, 1.5};
        CHECK_THROWS_AS(cfg.model.validate(), ConfigError);
    }
    SUBCASE("groups lower bound") {
        cfg.model.groups = 1;
        CHECK_THROWS_AS(cfg.model.validate(), ConfigError);
    }
    SUBCASE("kernel must be odd") {
        cfg.model.decoder_kernel = 4;
        CHECK_THROWS_AS(cfg.model.validate(), ConfigError);
    }
    SUBCASE("main_scale divisible by 32") {
        cfg.train.main_scale = 100;
        CHECK_THROWS_AS(cfg.train.validate(), ConfigError);
    }
    SUBCASE("lr positive") {
        cfg.train.base_lr = 0;
        CHECK_THROWS_AS(cfg.train.validate(), ConfigError);
    }
    SUBCASE("linear schedule needs t_end > t_start") {
        cfg.train.schedule.kind = ScheduleKind::Linear;
        cfg.train.schedule.t_start = 0.7;
        cfg.train.schedule.t_end = 0.3;
        CHECK_THROWS_AS(cfg.train.validate(), ConfigError);
    }
    SUBCASE("alpha must be positive") {
        cfg.train.ual.alpha = -1;
        CHECK_THROWS_AS(cfg.train.validate(), ConfigError);
    }
}

TEST_CASE("the extended-baseline variant is expressible") {
    RunConfig cfg = parse_config_text(
        "model.backbone=resnet50\n"
        "model.base_channels=128\n"
        "model.decoder_unit=cbr\n"
        "model.fuse_repeat=3\n"
        "model.head_repeat=3\n"
        "model.decoder_kernel=5\n"
        "model.scales=1.0\n");
    cfg.model.validate();
    CHECK(cfg.model.base_channels == 128);
    CHECK(cfg.model.fuse_repeat == 3);
    CHECK(cfg.model.decoder_kernel == 5);
    CHECK(cfg.model.scales.size() == 1);
}

TEST_CASE("fingerprint covers the model config") {
    ModelConfig m;
    TrainConfig t;
    uint64_t base = config_fingerprint(m, t);
    CHECK(base == config_fingerprint(m, t));  // stable

    ModelConfig m2 = m;
    m2.groups = 4;
    CHECK(config_fingerprint(m2, t) != base);

    TrainConfig t2 = t;
    t2.seed = 99;
    CHECK(config_fingerprint(m, t2) != base);

    ModelConfig m3 = m;
    m3.scales = {1.0};
    CHECK(config_fingerprint(m3, t) != base);
}

TEST_CASE("canonical serialization round-trips through the parser") {
    ModelConfig m;
    m.backbone = Backbone::Tiny;
    m.groups = 4;
    m.scales = {1.0, 1.5};
    TrainConfig t;
    t.base_lr = 0.007;
    t.seed = 321;
    RunConfig parsed = parse_config_text(canonical_config(m, t));
    CHECK(config_fingerprint(parsed.model, parsed.train) == config_fingerprint(m, t));
}
