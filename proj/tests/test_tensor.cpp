#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mmcof/gradcheck.hpp"
#include "mmcof/ops.hpp"
#include "mmcof/optimizer.hpp"
#include "mmcof/params.hpp"
#include "oracles.hpp"

using namespace mmcof;
using oracle::max_abs_diff;
using oracle::rand_tensor;

namespace {
std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("conv2d on all-ones input and kernel sums the receptive field") {
    Tensor x({1, 1, 5, 5}, 1.0f), w({1, 1, 3, 3}, 1.0f), b({1});
    ag::Var out = ag::conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), 1, 0);
    CHECK(out->value.shape == std::vector<int>{1, 1, 3, 3});
    CHECK(out->value.at4(0, 0, 1, 1) == doctest::Approx(9.0f));
}

TEST_CASE("conv2d with a centered identity kernel reproduces the input") {
    std::mt19937 rng(1);
    Tensor x = rand_tensor({2, 1, 6, 6}, rng);
    Tensor w({1, 1, 3, 3});
    w.at4(0, 0, 1, 1) = 1.0f;
    Tensor b({1});
    ag::Var out = ag::conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), 1, 1);
    CHECK(max_abs_diff(out->value, x) == doctest::Approx(0.0f));
}

TEST_CASE("conv2d matches the naive loop oracle on random instances") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 1 + trial % 2, Cin = 1 + trial % 3, Cout = 1 + trial % 4;
        int H = 3 + trial % 6, W = 3 + (trial / 2) % 6;
        int k = trial % 2 ? 1 : 3, pad = trial % 2, stride = 1 + (trial / 3) % 2;
        if (H + 2 * pad < k || W + 2 * pad < k) continue;
        Tensor x = rand_tensor({B, Cin, H, W}, rng);
        Tensor w = rand_tensor({Cout, Cin, k, k}, rng);
        Tensor b = rand_tensor({Cout}, rng);
        ag::Var out =
            ag::conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), stride, pad);
        CHECK(max_abs_diff(out->value, oracle::conv2d(x, w, b, stride, pad)) <= 1e-5f);
    }
}

TEST_CASE("conv2d is linear in its input") {
    std::mt19937 rng(11);
    Tensor x1 = rand_tensor({1, 2, 6, 6}, rng), x2 = rand_tensor({1, 2, 6, 6}, rng);
    Tensor w = rand_tensor({3, 2, 3, 3}, rng), b({3});
    Tensor mix(x1.shape);
    for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0f * x1.data[i] - 3.0f * x2.data[i];
    auto run = [&](const Tensor& x) {
        return ag::conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), 1, 1)->value;
    };
    Tensor y1 = run(x1), y2 = run(x2), ym = run(mix);
    for (size_t i = 0; i < ym.data.size(); ++i)
        CHECK(ym.data[i] == doctest::Approx(2.0f * y1.data[i] - 3.0f * y2.data[i]).epsilon(1e-4));
}

TEST_CASE("depthwise conv matches the naive oracle") {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 1 + trial % 2, C = 1 + trial % 4;
        int H = 3 + trial % 5, W = 3 + (trial / 2) % 5;
        int pad = trial % 2;
        Tensor x = rand_tensor({B, C, H, W}, rng);
        Tensor w = rand_tensor({C, 1, 3, 3}, rng);
        Tensor b = rand_tensor({C}, rng);
        ag::Var out = ag::depthwise_conv2d(ag::make_const(x), ag::make_const(w),
                                           ag::make_const(b), pad);
        CHECK(max_abs_diff(out->value, oracle::depthwise_conv2d(x, w, b, pad)) <= 1e-5f);
    }
}

TEST_CASE("depthwise conv keeps channels independent") {
    std::mt19937 rng(17);
    Tensor x = rand_tensor({1, 3, 5, 5}, rng);
    Tensor w = rand_tensor({3, 1, 3, 3}, rng), b({3});
    Tensor base = ag::depthwise_conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), 1)
                      ->value;
    Tensor x2 = x;
    for (int i = 0; i < 25; ++i) x2.data[25 + static_cast<size_t>(i)] += 1.0f;  // channel 1 only
    Tensor mod = ag::depthwise_conv2d(ag::make_const(x2), ag::make_const(w), ag::make_const(b), 1)
                     ->value;
    for (int c : {0, 2})
        for (int i = 0; i < 25; ++i)
            CHECK(mod.at4(0, c, i / 5, i % 5) == base.at4(0, c, i / 5, i % 5));
}

TEST_CASE("maxpool2d matches the naive oracle") {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 1 + trial % 2, C = 1 + trial % 3;
        int H = 4 + 2 * (trial % 3), W = 4 + 2 * ((trial / 2) % 3);
        Tensor x = rand_tensor({B, C, H, W}, rng);
        ag::Var out = ag::maxpool2d(ag::make_const(x));
        CHECK(max_abs_diff(out->value, oracle::maxpool2d(x)) == 0.0f);
    }
}

TEST_CASE("dense matches the naive oracle") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 1 + trial % 3, K = 1 + trial % 7, M = 1 + (trial / 2) % 5;
        Tensor x = rand_tensor({B, K}, rng);
        Tensor w = rand_tensor({K, M}, rng);
        Tensor b = rand_tensor({M}, rng);
        ag::Var out = ag::dense(ag::make_const(x), ag::make_const(w), ag::make_const(b));
        CHECK(max_abs_diff(out->value, oracle::dense(x, w, b)) <= 1e-5f);
    }
}

TEST_CASE("activations match elementwise oracles") {
    std::mt19937 rng(29);
    Tensor x = rand_tensor({2, 3, 4, 4}, rng, -2.0f, 2.0f);
    CHECK(max_abs_diff(ag::relu(ag::make_const(x))->value, oracle::relu(x)) == 0.0f);
    CHECK(max_abs_diff(ag::sigmoid(ag::make_const(x))->value, oracle::sigmoid(x)) <= 1e-6f);
    Tensor zero({1, 1, 1, 1});
    CHECK(ag::sigmoid(ag::make_const(zero))->value.data[0] == doctest::Approx(0.5f));
}

TEST_CASE("layer_norm_spatial normalizes [1,2,3,4] to zero mean and unit variance") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor s({1}, 1.0f), t({1});
    Tensor out = ag::layer_norm_spatial(ag::make_const(x), ag::make_const(s), ag::make_const(t),
                                        1e-6f)
                     ->value;
    double mean = 0.0, var = 0.0;
    for (float v : out.data) mean += v;
    mean /= 4.0;
    for (float v : out.data) var += (v - mean) * (v - mean);
    var /= 4.0;
    CHECK(std::abs(mean) <= 1e-4);
    CHECK(std::abs(var - 1.0) <= 1e-4);
    CHECK(max_abs_diff(out, oracle::layer_norm_spatial(x, s, t, 1e-6f)) <= 1e-6f);
}

TEST_CASE("layer_norm_spatial matches the oracle on random inputs") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = rand_tensor({1 + trial % 2, 1 + trial % 3, 4, 4}, rng);
        Tensor s = rand_tensor({x.dim(1)}, rng, 0.5f, 1.5f);
        Tensor t = rand_tensor({x.dim(1)}, rng);
        Tensor out = ag::layer_norm_spatial(ag::make_const(x), ag::make_const(s),
                                            ag::make_const(t), 1e-5f)
                         ->value;
        CHECK(max_abs_diff(out, oracle::layer_norm_spatial(x, s, t, 1e-5f)) <= 1e-5f);
    }
}

TEST_CASE("batch_norm2d matches the oracle in both modes and updates running stats") {
    std::mt19937 rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = rand_tensor({2, 2, 3, 3}, rng);
        Tensor s = rand_tensor({2}, rng, 0.5f, 1.5f), t = rand_tensor({2}, rng);
        Tensor rm({2}), rv({2}, 1.0f);
        Tensor train_out = ag::batch_norm2d(ag::make_const(x), ag::make_const(s),
                                            ag::make_const(t), rm, rv, 0.1f, 1e-5f, true)
                               ->value;
        CHECK(max_abs_diff(train_out, oracle::batch_norm_train(x, s, t, 1e-5f)) <= 1e-5f);
        // running stats moved toward the batch statistics
        Tensor rm2 = rm, rv2 = rv;
        Tensor infer_out = ag::batch_norm2d(ag::make_const(x), ag::make_const(s),
                                            ag::make_const(t), rm2, rv2, 0.1f, 1e-5f, false)
                               ->value;
        CHECK(max_abs_diff(infer_out, oracle::batch_norm_infer(x, s, t, rm, rv, 1e-5f)) <= 1e-5f);
        CHECK(rm2.data == rm.data);  // infer mode must not touch the stats
        CHECK(rv2.data == rv.data);
    }
}

TEST_CASE("softmax_cross_entropy equals the log-sum-exp oracle") {
    std::mt19937 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 1 + trial % 3, C = 2 + trial % 4;
        Tensor logits = rand_tensor({B, C}, rng, -3.0f, 3.0f);
        std::vector<int> labels;
        for (int n = 0; n < B; ++n) labels.push_back((trial + n) % C);
        ag::Var loss = ag::softmax_cross_entropy(ag::make_const(logits), labels);
        CHECK(loss->value.data[0] ==
              doctest::Approx(oracle::cross_entropy(logits, labels)).epsilon(1e-5));
    }
}

TEST_CASE("uniform logits over 5 classes give loss ln 5 and zero-sum gradient rows") {
    Tensor logits({2, 5}, 0.3f);
    ag::Var lv = ag::make_leaf(logits);
    ag::Var loss = ag::softmax_cross_entropy(lv, {0, 3});
    CHECK(loss->value.data[0] == doctest::Approx(std::log(5.0)).epsilon(1e-6));
    ag::backward(loss);
    for (int n = 0; n < 2; ++n) {
        float sum = 0.0f;
        for (int c = 0; c < 5; ++c) sum += lv->grad.at2(n, c);
        CHECK(std::abs(sum) <= 1e-6f);
    }
}

TEST_CASE("softmax_rows produces probability rows") {
    std::mt19937 rng(43);
    Tensor logits = rand_tensor({4, 6}, rng, -5.0f, 5.0f);
    Tensor p = ag::softmax_rows(logits);
    for (int n = 0; n < 4; ++n) {
        float sum = 0.0f;
        for (int c = 0; c < 6; ++c) {
            CHECK(p.at2(n, c) >= 0.0f);
            sum += p.at2(n, c);
        }
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
    }
    Tensor uniform({1, 4});
    Tensor pu = ag::softmax_rows(uniform);
    for (int c = 0; c < 4; ++c) CHECK(pu.at2(0, c) == doctest::Approx(0.25f));
}

TEST_CASE("flatten and concat_channels preserve contents") {
    std::mt19937 rng(47);
    Tensor x = rand_tensor({2, 3, 2, 2}, rng);
    ag::Var f = ag::flatten(ag::make_const(x));
    CHECK(f->value.shape == std::vector<int>{2, 12});
    CHECK(f->value.data == x.data);

    Tensor a = rand_tensor({1, 2, 3, 3}, rng), b = rand_tensor({1, 1, 3, 3}, rng);
    ag::Var cat = ag::concat_channels(ag::make_const(a), ag::make_const(b));
    CHECK(cat->value.shape == std::vector<int>{1, 3, 3, 3});
    for (int i = 0; i < 9; ++i) {
        CHECK(cat->value.at4(0, 0, i / 3, i % 3) == a.at4(0, 0, i / 3, i % 3));
        CHECK(cat->value.at4(0, 2, i / 3, i % 3) == b.at4(0, 0, i / 3, i % 3));
    }
}

TEST_CASE("mul broadcasts a single-channel factor across channels") {
    std::mt19937 rng(53);
    Tensor x = rand_tensor({2, 3, 4, 4}, rng);
    Tensor g = rand_tensor({2, 1, 4, 4}, rng);
    Tensor out = ag::mul(ag::make_const(x), ag::make_const(g))->value;
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 16; ++i)
                CHECK(out.at4(n, c, i / 4, i % 4) ==
                      doctest::Approx(x.at4(n, c, i / 4, i % 4) * g.at4(n, 0, i / 4, i % 4)));
}

TEST_CASE("SGD applies the closed-form update and lr=0 is a no-op") {
    ParameterSet ps;
    ag::Var x = ps.add("x", Tensor::from({1, 1}, {2.0f}), ParamRole::DenseWeight);
    auto loss_of = [&] { return ag::scale(ps.get("x"), 3.0f); };

    Optimizer sgd(OptimizerKind::Sgd, 0.1f);
    backward_and_step(loss_of(), ps, sgd);
    CHECK(x->value.data[0] == doctest::Approx(2.0f - 0.1f * 3.0f));

    std::vector<float> before = x->value.data;
    Optimizer frozen(OptimizerKind::Sgd, 0.0f);
    backward_and_step(loss_of(), ps, frozen);
    CHECK(x->value.data == before);
    Optimizer frozen_adam(OptimizerKind::Adam, 0.0f);
    backward_and_step(loss_of(), ps, frozen_adam);
    CHECK(x->value.data == before);
}

TEST_CASE("Adam is deterministic for identical gradient sequences") {
    auto run = [] {
        ParameterSet ps;
        ps.add("w", Tensor::from({2, 1}, {0.4f, -0.7f}), ParamRole::DenseWeight);
        Optimizer adam(OptimizerKind::Adam, 1e-2f);
        std::mt19937 rng(99);
        for (int step = 0; step < 20; ++step) {
            Tensor x = rand_tensor({3, 2}, rng);
            ag::Var logits = ag::dense(ag::make_const(x), ps.get("w"),
                                       ag::make_const(Tensor({1})));
            // squared magnitude of the outputs as a simple smooth loss
            ag::Var loss = ag::mul(logits, logits);
            backward_and_step(loss, ps, adam);
        }
        return ps.get("w")->value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("parameter container round-trips bit-exactly") {
    std::mt19937 rng(61);
    ParameterSet ps;
    ps.add("conv.w", rand_tensor({4, 3, 3, 3}, rng), ParamRole::ConvKernel);
    ps.add("conv.b", rand_tensor({4}, rng), ParamRole::ConvBias);
    ps.add("fc.w", rand_tensor({7, 5}, rng), ParamRole::DenseWeight);
    std::string path = temp_path("mmcof_params_roundtrip.bin");
    ps.save(path);
    ParameterSet back = ParameterSet::load(path);
    REQUIRE(back.entries().size() == ps.entries().size());
    for (size_t i = 0; i < ps.entries().size(); ++i) {
        CHECK(back.entries()[i].name == ps.entries()[i].name);
        CHECK(back.entries()[i].var->value.shape == ps.entries()[i].var->value.shape);
        CHECK(back.entries()[i].var->value.data == ps.entries()[i].var->value.data);
    }
    std::remove(path.c_str());
}

TEST_CASE("parameter container rejects a bad magic") {
    std::string path = temp_path("mmcof_params_bad.bin");
    std::ofstream(path, std::ios::binary) << "NOPE garbage";
    CHECK_THROWS(ParameterSet::load(path));
    std::remove(path.c_str());
}

TEST_CASE("shape mismatches raise argument errors") {
    Tensor x({1, 2, 4, 4}), w({1, 3, 3, 3}), b({1});
    CHECK_THROWS_AS(ag::conv2d(ag::make_const(x), ag::make_const(w), ag::make_const(b), 1, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(ag::softmax_cross_entropy(ag::make_const(Tensor({2, 3})), {0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(ag::add(ag::make_const(Tensor({1, 2})), ag::make_const(Tensor({2, 1}))),
                    std::invalid_argument);
}
