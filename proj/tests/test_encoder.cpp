#include "test_util.hpp"

#include "mixscale/model/network.hpp"

using namespace mixscale;

namespace {

// independent stride ladder: sizes halve five times starting from the input
std::array<int, 5> expected_level_sizes(int s) {
    std::array<int, 5> out;
    for (int i = 0; i < 5; ++i) {
        s /= 2;
        out[i] = s;
    }
    return out;
}

}  // namespace

TEST_CASE("backbone stride arithmetic: resnet50 at 384 and 576") {
    ParamRegistry<float> reg(1);
    ResNet50Backbone<float> bb(reg, "bb");
    CHECK(bb.channels() == std::array<int, 5>{64, 256, 512, 1024, 2048});

    NoGradGuard no_grad;
    for (int S : {384, 576}) {
        auto x = make_leaf<float>(testutil::random_tensor<float>(1, 3, S, S, 3), false);
        auto feats = bb.forward(x, false);
        auto want = expected_level_sizes(S);
        for (int i = 0; i < 5; ++i) {
            CHECK(feats[i]->value.h == want[i]);
            CHECK(feats[i]->value.w == want[i]);
            CHECK(feats[i]->value.c == bb.channels()[i]);
        }
    }
}

TEST_CASE("tiny backbone at 64: sizes (32,16,8,4,2), channels (8,16,32,64,128)") {
    ParamRegistry<float> reg(1);
    TinyBackbone<float> bb(reg, "bb");
    NoGradGuard no_grad;
    auto x = make_leaf<float>(testutil::random_tensor<float>(1, 3, 64, 64, 3), false);
    auto feats = bb.forward(x, false);
    std::array<int, 5> sizes{32, 16, 8, 4, 2}, chans{8, 16, 32, 64, 128};
    for (int i = 0; i < 5; ++i) {
        CHECK(feats[i]->value.h == sizes[i]);
        CHECK(feats[i]->value.c == chans[i]);
    }
}

TEST_CASE("compression: every level lands at base_channels, sizes preserved") {
    for (int base : {32, 64}) {
        ParamRegistry<float> reg(base);
        TinyBackbone<float> bb(reg, "bb");
        ChannelCompress<float> cc(reg, "cc", bb.channels(), base);
        NoGradGuard no_grad;
        auto x = make_leaf<float>(testutil::random_tensor<float>(1, 3, 64, 64, 3), false);
        auto feats = cc.forward(bb.forward(x, false), false);
        std::array<int, 5> sizes{32, 16, 8, 4, 2};
        for (int i = 0; i < 5; ++i) {
            CHECK(feats[i]->value.c == base);
            CHECK(feats[i]->value.h == sizes[i]);
        }
    }
}

TEST_CASE("dilated pyramid block: 5 branches, fused output keeps the input size") {
    ParamRegistry<float> reg(9);
    AsppBlock<float> aspp(reg, "aspp", 48, 64);
    NoGradGuard no_grad;
    auto x = make_leaf<float>(testutil::random_tensor<float>(1, 48, 12, 12, 5), false);
    Var<float> y = aspp.forward(x, false);
    CHECK(y->value.c == 64);
    CHECK(y->value.h == 12);
    CHECK(y->value.w == 12);

    // exactly five branch CBRs plus the fusion CBR were registered
    int branch_convs = 0;
    for (const auto& e : reg.entries())
        if (e.name.find("branch") != std::string::npos &&
            e.name.find(".conv.weight") != std::string::npos)
            ++branch_convs;
    CHECK(branch_convs == 5);
}

TEST_CASE("global-pooling branch maps constant input to constant response") {
    ParamRegistry<float> reg(10);
    Cbr<float> gap_cbr(reg, "g", 16, 8, 1);
    NoGradGuard no_grad;
    TensorF c(1, 16, 6, 6, 0.37f);
    auto x = make_leaf<float>(c, false);
    // pooling a constant map is the constant itself
    Var<float> pooled = global_avg_pool(x);
    for (float v : pooled->value.v) CHECK(v == doctest::Approx(0.37f));
    // and the upsampled branch output is spatially constant
    Var<float> up = bilinear_resize(gap_cbr.forward(pooled, false), 6, 6);
    for (int j = 0; j < up->value.c; ++j) {
        float first = up->value.at(0, j, 0, 0);
        for (int r = 0; r < 6; ++r)
            for (int s = 0; s < 6; ++s)
                CHECK(up->value.at(0, j, r, s) == doctest::Approx(first));
    }
}

TEST_CASE("weight sharing: one parameter set regardless of the scale subset") {
    std::vector<std::vector<double>> subsets = {{1.0}, {0.5, 1.0}, {1.0, 1.5},
                                                {0.5, 1.0, 1.5}};
    size_t reference = 0;
    for (const auto& scales : subsets) {
        ModelConfig cfg;
        cfg.backbone = Backbone::Tiny;
        cfg.scales = scales;
        SegmentationNetwork<float> net(cfg, 1);
        if (reference == 0) reference = net.parameter_count();
        CHECK(net.parameter_count() == reference);
    }
}

TEST_CASE("triplet encode: shared weights give bit-identical single-scale output") {
    ModelConfig cfg;
    cfg.backbone = Backbone::Tiny;
    SegmentationNetwork<float> net(cfg, 21);
    NoGradGuard no_grad;
    TensorF img = testutil::random_tensor<float>(1, 3, 64, 64, 77, 0.f, 1.f);
    auto x = make_leaf<float>(img, false);

    auto triplet = net.encoder().encode_triplet(net.build_pyramid(x), false);
    REQUIRE(triplet.size() == 3);
    auto alone = net.encoder().encode(x, false);
    for (int i = 0; i < 5; ++i)
        CHECK(testutil::max_abs_diff(alone[i]->value, triplet.at(1.0)[i]->value) == 0.0);

    // stride arithmetic across scales: level-1 sizes 16 / 32 / 48
    CHECK(triplet.at(0.5)[0]->value.h == 16);
    CHECK(triplet.at(1.0)[0]->value.h == 32);
    CHECK(triplet.at(1.5)[0]->value.h == 48);

    // identical content in every slot: outputs differ only by resolution,
    // so re-encoding the 1.0 entry reproduces the 1.0 features exactly
    auto single = net.encoder().encode_triplet({{1.0, x}}, false);
    CHECK(single.size() == 1);
    for (int i = 0; i < 5; ++i)
        CHECK(testutil::max_abs_diff(single.at(1.0)[i]->value,
                                     triplet.at(1.0)[i]->value) == 0.0);
}

TEST_CASE("compressed channel width tracks base_channels over random configs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        ModelConfig cfg;
        cfg.backbone = Backbone::Tiny;
        cfg.base_channels = 16 << (rng() % 3);
        SegmentationNetwork<float> net(cfg, trial);
        NoGradGuard no_grad;
        auto x = make_leaf<float>(testutil::random_tensor<float>(1, 3, 64, 64, rng()),
                                  false);
        auto feats = net.encoder().encode(x, false);
        for (int i = 0; i < 5; ++i) CHECK(feats[i]->value.c == cfg.base_channels);
    }
}
