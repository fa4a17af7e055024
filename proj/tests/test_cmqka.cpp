#include <doctest.h>

#include "oracles.hpp"
#include "snnergy/cmqka.hpp"
#include "snnergy/counters.hpp"
#include "snnergy/profiler.hpp"

using namespace snnergy;

namespace {

// identity projections + eval-mode BN with fresh running stats make the
// pathway a pure mask-and-select of its binary inputs
void make_transparent(ComplementPathway& p, Dim channels) {
    std::fill(p.proj_q.weight().values().begin(), p.proj_q.weight().values().end(), 0.0f);
    std::fill(p.proj_k.weight().values().begin(), p.proj_k.weight().values().end(), 0.0f);
    for (Dim c = 0; c < channels; ++c) {
        p.proj_q.weight().values()[static_cast<size_t>(c * channels + c)] = 1.0f;
        p.proj_k.weight().values()[static_cast<size_t>(c * channels + c)] = 1.0f;
    }
    p.set_training(false);
}

ComplementPathway transparent_pathway(Dim channels, int heads, bool temporal, Rng& rng) {
    ComplementPathway p(channels, heads, temporal, 1, LifParams{}, rng);
    make_transparent(p, channels);
    return p;
}

}  // namespace

TEST_CASE("spatial complement reproduces the hand example") {
    Rng rng(1);
    ComplementPathway p = transparent_pathway(2, 1, false, rng);
    // channel-major Q: c0 = [1,1,0], c1 = [1,0,0]; sums per token = [2,1,0]
    SpikeTensor q{Tensor::from({1, 1, 2, 3}, {1, 1, 0, 1, 0, 0})};
    SpikeTensor k{Tensor::from({1, 1, 2, 3}, {1, 0, 1, 0, 1, 1})};
    SpikeTensor s = spatial_complement(q, k, p);
    CHECK(s.t.values() == std::vector<float>{1, 0, 0, 0, 1, 0});
}

TEST_CASE("transparent mask passes K; zero mask silences everything") {
    Rng rng(2);
    Dim T = 2, C = 4, N = 6;
    ComplementPathway p = transparent_pathway(C, 1, false, rng);

    SpikeTensor q_ones{Tensor::full({T, 1, C, N}, 1.0f)};
    SpikeTensor k{oracles::random_binary({T, 1, C, N}, rng)};
    SpikeTensor s = spatial_complement(q_ones, k, p);
    CHECK(s.t.values() == k.t.values());

    ComplementPathway p2 = transparent_pathway(C, 1, false, rng);
    SpikeTensor q_zero{Tensor::zeros({T, 1, C, N})};
    SpikeTensor s2 = spatial_complement(q_zero, k, p2);
    for (Dim i = 0; i < s2.t.numel(); ++i) CHECK(s2.t.data()[i] == 0.0f);
}

TEST_CASE("spatial complement rejects mismatched modality shapes") {
    Rng rng(3);
    ComplementPathway p(4, 1, false, 1, LifParams{}, rng);
    SpikeTensor a{Tensor::zeros({1, 1, 4, 5})};
    SpikeTensor b{Tensor::zeros({1, 1, 4, 6})};
    CHECK_THROWS_AS(spatial_complement(a, b, p), ShapeError);
}

TEST_CASE("temporal complement: T=1 degenerates to a per-token mask-and-select") {
    Rng rng(4);
    Dim C = 4, N = 5;
    ComplementPathway pt = transparent_pathway(C, 1, true, rng);
    ComplementPathway ps = transparent_pathway(C, 1, false, rng);
    SpikeTensor q{oracles::random_binary({1, 1, C, N}, rng, 0.4f)};
    SpikeTensor k{oracles::random_binary({1, 1, C, N}, rng)};
    SpikeTensor yt = temporal_complement(q, k, pt);
    SpikeTensor ys = spatial_complement(q, k, ps);
    CHECK(yt.shape() == q.shape());
    CHECK(yt.t.values() == ys.t.values());

    SpikeTensor zero{Tensor::zeros({1, 1, C, N})};
    ComplementPathway pz = transparent_pathway(C, 1, true, rng);
    SpikeTensor yz = temporal_complement(zero, k, pz);
    for (Dim i = 0; i < yz.t.numel(); ++i) CHECK(yz.t.data()[i] == 0.0f);
}

TEST_CASE("pathways equal the explicit-loop oracle on random instances") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Dim T = 1 + static_cast<Dim>(rng.below(3));
        Dim N = 2 + static_cast<Dim>(rng.below(5));
        int h = rng.below(2) == 0 ? 1 : 2;
        Dim C = h * (1 + static_cast<Dim>(rng.below(3)));
        bool temporal = rng.below(2) == 0;
        ComplementPathway p = transparent_pathway(C, h, temporal, rng);
        SpikeTensor q{oracles::random_binary({T, 2, C, N}, rng, 0.4f)};
        SpikeTensor k{oracles::random_binary({T, 2, C, N}, rng)};
        SpikeTensor out = temporal ? temporal_complement(q, k, p) : spatial_complement(q, k, p);
        auto ref = oracles::mask_select_channel_major_ref(q.t.values(), k.t.values(), T, 2, C, N, h,
                                                          0.5f, 0.6f);
        CHECK(out.t.values() == ref);
    }
}

TEST_CASE("attention masks are binary with shape [T,B,h,1,N]") {
    Rng rng(6);
    Dim T = 3, B = 2, C = 8, N = 10;
    int h = 2;
    Tensor q = oracles::random_binary({T, B, C, N}, rng, 0.4f);
    Tensor qh = split_heads_channels(q, h);
    Tensor sums = reduce(qh, 3, Reduce::Sum);
    CHECK(sums.shape() == Shape{T, B, h, 1, N});
    LifNeuron sn{LifParams{}};
    Tensor mask = sn.forward_time_major(sums);
    CHECK(is_binary(mask));
    CHECK(mask.shape() == Shape{T, B, h, 1, N});
}

TEST_CASE("fusion: H_cross equals the pooled-product oracle; trivial cases") {
    Rng rng(7);
    Dim T = 3, B = 2, C = 4, H = 2, W = 3;
    Dim N = H * W;
    CmqkaConfig cfg;
    cfg.channels = C;
    cfg.heads = 1;
    cfg.alpha_init = 1.0f;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);
    // silence the MLP so out = original + H_cross
    ParamList pl;
    block.mlp_video.collect(pl, "m");
    for (auto& p : pl)
        if (p.name.find("fc") != std::string::npos)
            std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0f);

    SpikeTensor original{oracles::random_binary({T, B, C, H, W}, rng)};
    SpikeTensor s_feat{oracles::random_binary({T, B, C, N}, rng)};
    SpikeTensor t_feat{oracles::random_binary({T, B, C, N}, rng)};
    Tensor out = block.fuse_and_integrate(original, s_feat, t_feat, block.alpha_video,
                                          block.mlp_video, block.sn_mlp_in_video, H, W);
    CHECK(out.shape() == original.shape());
    for (Dim t = 0; t < T; ++t)
        for (Dim b = 0; b < B; ++b)
            for (Dim c = 0; c < C; ++c)
                for (Dim y = 0; y < H; ++y)
                    for (Dim x = 0; x < W; ++x) {
                        double s_red = 0;
                        for (Dim n = 0; n < N; ++n) s_red += s_feat.t.at({t, b, c, n});
                        s_red /= static_cast<double>(N);
                        double t_red = 0;
                        for (Dim tt = 0; tt < T; ++tt) t_red += t_feat.t.at({tt, b, c, y * W + x});
                        t_red /= static_cast<double>(T);
                        double expect = original.t.at({t, b, c, y, x}) + s_red * t_red;
                        CHECK(std::abs(out.at({t, b, c, y, x}) - expect) < 1e-6);
                    }

    // zero cross features leave the original untouched regardless of alpha
    block.alpha_video.values() = {123.0f};
    SpikeTensor zeros_s{Tensor::zeros({T, B, C, N})};
    SpikeTensor zeros_t{Tensor::zeros({T, B, C, N})};
    Tensor out2 = block.fuse_and_integrate(original, zeros_s, zeros_t, block.alpha_video,
                                           block.mlp_video, block.sn_mlp_in_video, H, W);
    CHECK(out2.values() == original.t.values());

    // saturated features add exactly alpha
    block.alpha_video.values() = {1.5f};
    SpikeTensor ones_s{Tensor::full({T, B, C, N}, 1.0f)};
    SpikeTensor ones_t{Tensor::full({T, B, C, N}, 1.0f)};
    Tensor out3 = block.fuse_and_integrate(original, ones_s, ones_t, block.alpha_video,
                                           block.mlp_video, block.sn_mlp_in_video, H, W);
    for (Dim i = 0; i < out3.numel(); ++i)
        CHECK(out3.data()[i] == doctest::Approx(original.t.data()[i] + 1.5f));
}

TEST_CASE("fusion rejects token-count mismatches") {
    Rng rng(8);
    CmqkaConfig cfg;
    cfg.channels = 2;
    cfg.heads = 1;
    CmqkaBlock block(cfg, rng);
    SpikeTensor original{Tensor::zeros({1, 1, 2, 2, 2})};
    SpikeTensor s_feat{Tensor::zeros({1, 1, 2, 3})};
    CHECK_THROWS_AS(block.fuse_and_integrate(original, s_feat, s_feat, block.alpha_video,
                                             block.mlp_video, block.sn_mlp_in_video, 2, 2),
                    ShapeError);
}

TEST_CASE("weight-tied block maps identical modalities to identical outputs") {
    Rng rng(9);
    CmqkaConfig cfg;
    cfg.channels = 4;
    cfg.heads = 2;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);

    // mirror the a<-v direction onto v<-a, tie MLPs and alphas
    auto tie = [](ComplementPathway& dst, ComplementPathway& src) {
        dst.proj_q.weight().values() = src.proj_q.weight().values();
        dst.proj_k.weight().values() = src.proj_k.weight().values();
    };
    tie(block.spatial_av, block.spatial_va);
    tie(block.temporal_av, block.temporal_va);
    ParamList mv, ma;
    block.mlp_video.collect(mv, "m");
    block.mlp_audio.collect(ma, "m");
    for (size_t i = 0; i < mv.size(); ++i) ma[i].tensor.values() = mv[i].tensor.values();

    Tensor x = oracles::random_binary({2, 1, 4, 4, 4}, rng);
    CmqkaOutput out = block.forward(x, x);
    CHECK(out.video_out.values() == out.audio_out.values());
}

TEST_CASE("zero inputs produce zero outputs") {
    Rng rng(10);
    CmqkaConfig cfg;
    cfg.channels = 4;
    cfg.heads = 1;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);
    Tensor z = Tensor::zeros({2, 1, 4, 4, 4});
    CmqkaOutput out = block.forward(z, z);
    for (Dim i = 0; i < out.video_out.numel(); ++i) CHECK(out.video_out.data()[i] == 0.0f);
    for (Dim i = 0; i < out.audio_out.numel(); ++i) CHECK(out.audio_out.data()[i] == 0.0f);
}

TEST_CASE("zeroing the cross projections makes video_out independent of audio") {
    Rng rng(11);
    CmqkaConfig cfg;
    cfg.channels = 4;
    cfg.heads = 1;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);
    std::fill(block.spatial_va.proj_k.weight().values().begin(),
              block.spatial_va.proj_k.weight().values().end(), 0.0f);
    std::fill(block.temporal_va.proj_k.weight().values().begin(),
              block.temporal_va.proj_k.weight().values().end(), 0.0f);

    Tensor video = oracles::random_binary({2, 1, 4, 4, 4}, rng);
    Tensor audio1 = oracles::random_binary({2, 1, 4, 4, 4}, rng);
    Tensor audio2 = oracles::random_binary({2, 1, 4, 4, 4}, rng);
    Tensor v1 = block.forward(video, audio1).video_out;
    Tensor v2 = block.forward(video, audio2).video_out;
    CHECK(v1.values() == v2.values());
}

TEST_CASE("no NxN buffer is allocated by attention in a CMQKA forward") {
    Rng rng(12);
    Dim side = 16;  // N = 256
    Dim N = side * side;
    CmqkaConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);
    Tensor v = oracles::random_binary({2, 1, 8, side, side}, rng);
    Tensor a = oracles::random_binary({2, 1, 8, side, side}, rng);
    prof::AllocAudit audit;
    {
        prof::AuditScope scope(audit);
        block.forward(v, a);
    }
    uint64_t quad = static_cast<uint64_t>(N) * static_cast<uint64_t>(N) * 4;
    CHECK(audit.max_single(prof::Cat::AttnMatmul) == 0);
    CHECK(audit.max_single(prof::Cat::Proj) < quad);
    CHECK(audit.max_single(prof::Cat::Mask) < quad);
    CHECK(audit.max_single(prof::Cat::Fuse) < quad);
}

TEST_CASE("block attention op count stays under 12*T*N*C^2 and matches the formula") {
    Rng rng(13);
    Dim T = 2, side = 8, C = 16;
    Dim N = side * side;
    CmqkaConfig cfg;
    cfg.channels = C;
    cfg.heads = 2;
    CmqkaBlock block(cfg, rng);
    block.set_training(false);
    Tensor v = oracles::random_binary({T, 1, C, side, side}, rng);
    Tensor a = oracles::random_binary({T, 1, C, side, side}, rng);
    prof::OpCounters counters;
    {
        prof::CounterScope scope(counters);
        block.forward(v, a);
    }
    uint64_t scope_ops = counters.attention_scope();
    CHECK(scope_ops == cmqka_block_attention_macs(T, 1, N, C));
    CHECK(static_cast<double>(scope_ops) <=
          12.0 * static_cast<double>(T) * static_cast<double>(N) * static_cast<double>(C) * C);
}

TEST_CASE("gradients reach all four directional projections from a video loss") {
    Rng rng(14);
    CmqkaConfig cfg;
    cfg.channels = 4;
    cfg.heads = 1;
    CmqkaBlock block(cfg, rng);
    block.set_training(true);
    Tensor v = oracles::random_binary({2, 2, 4, 2, 2}, rng);
    Tensor a = oracles::random_binary({2, 2, 4, 2, 2}, rng);
    Tape tape;
    {
        Tape::Use use(tape);
        CmqkaOutput out = block.forward(v, a);
        reduce_all_sum(out.video_out).backward();
    }
    auto norm = [](const Tensor& t) {
        double s = 0;
        if (!t.has_grad()) return 0.0;
        for (float g : t.grad()) s += static_cast<double>(g) * g;
        return s;
    };
    CHECK(norm(block.spatial_va.proj_q.weight()) > 0.0);
    CHECK(norm(block.spatial_va.proj_k.weight()) > 0.0);
    CHECK(norm(block.temporal_va.proj_q.weight()) > 0.0);
    CHECK(norm(block.temporal_va.proj_k.weight()) > 0.0);
}

TEST_CASE("smoothed-mode spatial and temporal pathways match finite differences") {
    Rng rng(15);
    LifParams lif;
    lif.detach_reset = false;
    for (bool temporal : {false, true}) {
        CAPTURE(temporal);
        ComplementPathway p(4, 1, temporal, 1, lif, rng);
        p.set_training(true);
        p.bn_q.set_track_running(false);
        p.bn_k.set_track_running(false);
        Tensor q = oracles::random_tensor({2, 1, 4, 6}, rng);
        Tensor k = oracles::random_tensor({2, 1, 4, 6}, rng);
        q.set_requires_grad(true);
        SmoothedSpikeGuard smoothed;
        auto run = [&](const Tensor& qq) {
            SpikeTensor qs{qq}, ks{k};
            return (temporal ? temporal_complement(qs, ks, p) : spatial_complement(qs, ks, p)).t;
        };
        Tape tape;
        {
            Tape::Use use(tape);
            reduce_all_sum(run(q)).backward();
        }
        auto fd = oracles::finite_diff([&](const Tensor& t) { return oracles::dsum(run(t)); },
                                       q.clone(), 1e-3f);
        CHECK(oracles::grad_violation(fd, q.grad()) <= 1.0);
    }
}
