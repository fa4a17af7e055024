#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snnergy/layers.hpp"

using namespace snnergy;

TEST_CASE("1x1 conv with identity weight passes input through") {
    Tensor w = Tensor::from({2, 2, 1, 1}, {1, 0, 0, 1});
    Rng rng(1);
    Tensor x = oracles::random_tensor({1, 1, 2, 4, 4}, rng);
    Tensor y = conv2d(x, w, 1);
    CHECK(y.values() == x.values());
}

TEST_CASE("3x3 conv with zero weight gives zero output") {
    Tensor w = Tensor::zeros({3, 2, 3, 3});
    Rng rng(2);
    Tensor x = oracles::random_tensor({1, 1, 2, 6, 6}, rng);
    Tensor y = conv2d(x, w, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 6, 6});
    for (Dim i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
}

TEST_CASE("conv2d matches the sliding-window oracle") {
    Rng rng(3);
    for (int stride : {1, 2}) {
        for (int k : {1, 3}) {
            Tensor x = oracles::random_tensor({1, 1, 3, 8, 8}, rng);
            Tensor w = oracles::random_tensor({4, 3, k, k}, rng);
            Tensor y = conv2d(x, w, stride);
            int pad = k == 3 ? 1 : 0;
            auto ref = oracles::conv2d_ref(x.data(), w.data(), 3, 8, 8, 4, k, pad, stride);
            REQUIRE(static_cast<size_t>(y.numel()) == ref.size());
            for (Dim i = 0; i < y.numel(); ++i)
                CHECK(y.data()[i] == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-5));
        }
    }
}

TEST_CASE("conv1d kernel-3 matches an explicit loop and preserves length") {
    Rng rng(4);
    Tensor x = oracles::random_tensor({2, 3, 6}, rng);
    Tensor w = oracles::random_tensor({5, 3, 3}, rng);
    Tensor y = conv1d(x, w);
    CHECK(y.shape() == Shape{2, 5, 6});
    for (Dim b = 0; b < 2; ++b)
        for (Dim co = 0; co < 5; ++co)
            for (Dim l = 0; l < 6; ++l) {
                float acc = 0;
                for (Dim ci = 0; ci < 3; ++ci)
                    for (int kk = 0; kk < 3; ++kk) {
                        Dim ll = l + kk - 1;
                        if (ll < 0 || ll >= 6) continue;
                        acc += x.at({b, ci, ll}) * w.at({co, ci, kk});
                    }
                CHECK(y.at({b, co, l}) == doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("conv rejects channel mismatches") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 4, 4}), Tensor::zeros({3, 5, 3, 3}), 1),
                    ShapeError);
    CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 2, 4}), Tensor::zeros({3, 5, 1})), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(5);
    Tensor x = oracles::random_tensor({1, 1, 2, 4, 4}, rng);
    Tensor w = oracles::random_tensor({3, 2, 3, 3}, rng);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    Tape tape;
    {
        Tape::Use use(tape);
        reduce_all_sum(hadamard(conv2d(x, w, 1), conv2d(x, w, 1))).backward();
    }
    auto f = [&](const Tensor& t) {
        Tensor y = conv2d(t, w, 1);
        double s = 0;
        for (Dim i = 0; i < y.numel(); ++i) s += static_cast<double>(y.data()[i]) * y.data()[i];
        return s;
    };
    auto fd = oracles::finite_diff(f, x.clone(), 1e-3f);
    CHECK(oracles::grad_violation(fd, x.grad()) <= 1.0);
}

TEST_CASE("batchnorm training normalizes to beta/gamma moments") {
    Rng rng(7);
    BatchNorm bn(3);
    bn.set_training(true);
    Tensor x = oracles::random_tensor({4, 2, 3, 5}, rng, -2.0f, 3.0f);
    Tensor y = bn.forward(x, 2);
    // per-channel mean ~ 0 (beta), biased variance ~ 1 (gamma^2)
    for (Dim c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        Dim count = 0;
        for (Dim a = 0; a < 4; ++a)
            for (Dim b = 0; b < 2; ++b)
                for (Dim i = 0; i < 5; ++i) {
                    float v = y.at({a, b, c, i});
                    sum += v;
                    sq += static_cast<double>(v) * v;
                    ++count;
                }
        double mean = sum / count;
        double var = sq / count - mean * mean;
        CHECK(std::abs(mean) < 1e-4);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("batchnorm fixed point and beta broadcast") {
    // already zero-mean unit-variance input stays put
    Tensor x = Tensor::from({2, 1, 1, 1}, {1.0f, -1.0f});
    BatchNorm bn(1);
    Tensor y = bn.forward(x, 2);
    CHECK(y.data()[0] == doctest::Approx(1.0f).epsilon(1e-4));
    CHECK(y.data()[1] == doctest::Approx(-1.0f).epsilon(1e-4));

    // gamma = 0 collapses output onto beta
    BatchNorm bn2(2);
    std::fill(bn2.buffers().gamma.values().begin(), bn2.buffers().gamma.values().end(), 0.0f);
    bn2.buffers().beta.values() = {0.5f, -0.25f};
    Rng rng(8);
    Tensor x2 = oracles::random_tensor({3, 1, 2, 4}, rng);
    Tensor y2 = bn2.forward(x2, 2);
    for (Dim a = 0; a < 3; ++a)
        for (Dim c = 0; c < 2; ++c)
            for (Dim i = 0; i < 4; ++i)
                CHECK(y2.at({a, 0, c, i}) == doctest::Approx(c == 0 ? 0.5f : -0.25f));
}

TEST_CASE("batchnorm eval mode is a per-channel affine map, no batch coupling") {
    BatchNorm bn(2);
    bn.buffers().running_mean.values() = {0.5f, -1.0f};
    bn.buffers().running_var.values() = {4.0f, 0.25f};
    bn.set_training(false);
    Tensor a = Tensor::from({1, 1, 2, 1}, {1.5f, 0.0f});
    Tensor b = Tensor::from({2, 1, 2, 1}, {1.5f, 0.0f, -3.0f, 9.0f});
    Tensor ya = bn.forward(a, 2);
    Tensor yb = bn.forward(b, 2);
    CHECK(ya.data()[0] == doctest::Approx(yb.data()[0]));
    CHECK(ya.data()[1] == doctest::Approx(yb.data()[1]));
    CHECK(ya.data()[0] == doctest::Approx((1.5f - 0.5f) / std::sqrt(4.0f + 1e-5f)));
}

TEST_CASE("batchnorm training gradients match finite differences") {
    Rng rng(9);
    BatchNorm bn(2);
    bn.set_training(true);
    bn.set_track_running(false);
    Tensor x = oracles::random_tensor({3, 1, 2, 4}, rng);
    x.set_requires_grad(true);
    Tape tape;
    {
        Tape::Use use(tape);
        Tensor w = Tensor::from({2}, {0.7f, -1.3f});
        reduce_all_sum(hadamard(bn.forward(x, 2), reshape(w, {1, 1, 2, 1}))).backward();
    }
    Tensor w = Tensor::from({2}, {0.7f, -1.3f});
    auto f = [&](const Tensor& t) {
        Tensor y = bn.forward(t, 2);
        return oracles::dsum(hadamard(y, reshape(w, {1, 1, 2, 1})));
    };
    auto fd = oracles::finite_diff(f, x.clone(), 1e-3f);
    CHECK(oracles::grad_violation(fd, x.grad()) <= 1.0);
}

TEST_CASE("batchnorm rejects zero-size batches and channel mismatch") {
    BatchNorm bn(3);
    CHECK_THROWS_AS(bn.forward(Tensor::zeros({1, 1, 4, 2}), 2), ShapeError);
}

TEST_CASE("maxpool2d constants, single window, and oracle equality") {
    Tensor c = Tensor::full({1, 1, 1, 4, 4}, 2.5f);
    Tensor yc = maxpool2d(c);
    CHECK(yc.shape() == Shape{1, 1, 1, 2, 2});
    for (Dim i = 0; i < yc.numel(); ++i) CHECK(yc.data()[i] == 2.5f);

    Tensor w = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    CHECK(maxpool2d(w).item() == 4.0f);

    Rng rng(10);
    Tensor x = oracles::random_tensor({2, 8, 8}, rng);
    Tensor y = maxpool2d(x);
    for (Dim b = 0; b < 2; ++b)
        for (Dim i = 0; i < 4; ++i)
            for (Dim j = 0; j < 4; ++j) {
                float m = -1e30f;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj)
                        m = std::max(m, x.at({b, 2 * i + di, 2 * j + dj}));
                CHECK(y.at({b, i, j}) == m);
            }

    CHECK_THROWS_AS(maxpool2d(Tensor::zeros({1, 5, 4})), ShapeError);
}

TEST_CASE("maxpool gradient routes to the argmax") {
    Tensor x = Tensor::from({1, 2, 2}, {1, 4, 3, 2});
    x.set_requires_grad(true);
    Tape tape;
    {
        Tape::Use use(tape);
        reduce_all_sum(maxpool2d(x)).backward();
    }
    CHECK(x.grad() == std::vector<float>{0, 1, 0, 0});
}

TEST_CASE("linear layer: zero features produce the bias vector") {
    Rng rng(11);
    Linear lin(4, 3, rng);
    lin.bias().values() = {0.1f, -0.2f, 0.3f};
    Tensor y = lin.forward(Tensor::zeros({2, 4}));
    for (Dim b = 0; b < 2; ++b) {
        CHECK(y.at({b, 0}) == doctest::Approx(0.1f));
        CHECK(y.at({b, 1}) == doctest::Approx(-0.2f));
        CHECK(y.at({b, 2}) == doctest::Approx(0.3f));
    }
}

TEST_CASE("spiking MLP: zero weights silence it, binary outputs, live rates") {
    LifParams lif;
    Rng rng(12);

    SpikingMlp zero_mlp(4, 2, lif, rng);
    ParamList pl;
    zero_mlp.collect(pl, "mlp");
    for (auto& p : pl) {
        if (p.name.find("fc") != std::string::npos)
            std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0f);
    }
    Tensor x = oracles::random_binary({2, 1, 4, 6}, rng);
    Tensor y = zero_mlp.forward(x);
    for (Dim i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);

    // standard init: binary output, both layers fire somewhere but not everywhere
    int alive = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng wr(100 + seed);
        SpikingMlp mlp(8, 4, lif, wr);
        FiringRecorder rec;
        mlp.set_probes("t", 0, "");
        Tensor xin = oracles::random_binary({2, 2, 8, 16}, wr, 0.5f);
        Tensor out;
        {
            FiringRecorder::Scope scope(rec);
            out = mlp.forward(xin);
        }
        CHECK(is_binary(out));
        auto rates = rec.rates();
        double r1 = rates.at({"t", 0, "MLP1"});
        double r2 = rates.at({"t", 0, "MLP2"});
        CHECK(r1 >= 0.0);
        CHECK(r2 >= 0.0);
        CHECK(r1 < 1.0);
        CHECK(r2 < 1.0);
        if (r1 > 0.0 && r2 > 0.0) ++alive;
    }
    CHECK(alive >= 8);  // (0,1) rates for nearly every seed
}

TEST_CASE("spiking MLP preserves shape and rejects channel mismatch") {
    LifParams lif;
    Rng rng(13);
    SpikingMlp mlp(6, 4, lif, rng);
    Tensor x = oracles::random_binary({2, 1, 6, 9}, rng);
    CHECK(mlp.forward(x).shape() == x.shape());
    CHECK_THROWS_AS(mlp.forward(Tensor::zeros({2, 1, 5, 9})), ShapeError);
}
