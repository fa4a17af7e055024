#include "snnergy/cmqka.hpp"

#include "snnergy/counters.hpp"

namespace snnergy {

Tensor split_heads_channels(const Tensor& x, int heads) {
    SNN_CHECK_SHAPE(x.rank() == 4, "split_heads_channels: want [T,B,C,N], got ",
                    shape_str(x.shape()));
    Dim T = x.dim(0), B = x.dim(1), C = x.dim(2), N = x.dim(3);
    SNN_CHECK_SHAPE(C % heads == 0, "split_heads_channels: C=", C, " not divisible by h=", heads);
    return reshape(x, {T, B, heads, C / heads, N});
}

Tensor merge_heads_channels(const Tensor& x) {
    SNN_CHECK_SHAPE(x.rank() == 5, "merge_heads_channels: want [T,B,h,Ch,N]");
    return reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3), x.dim(4)});
}

ComplementPathway::ComplementPathway(Dim channels, int heads_, bool temporal_, int kernel,
                                     const LifParams& lif, Rng& rng)
    : temporal(temporal_), heads(heads_) {
    SNN_CHECK_CONTRACT(channels % heads == 0, "ComplementPathway: C=", channels,
                       " not divisible by h=", heads);
    proj_q = Conv1dLayer(channels, channels, kernel, rng);
    proj_k = Conv1dLayer(channels, channels, kernel, rng);
    bn_q = BatchNorm(channels);
    bn_k = BatchNorm(channels);
    sn_q = LifNeuron(lif);
    sn_k = LifNeuron(lif);
    sn_mask = LifNeuron(lif);
}

void ComplementPathway::collect(ParamList& out, const std::string& prefix) {
    proj_q.collect(out, prefix + ".proj_q");
    proj_k.collect(out, prefix + ".proj_k");
    bn_q.collect(out, prefix + ".bn_q");
    bn_k.collect(out, prefix + ".bn_k");
}

void ComplementPathway::set_training(bool on) {
    bn_q.set_training(on);
    bn_k.set_training(on);
}

void ComplementPathway::set_probes(const std::string& stage, int block) {
    sn_q.set_probe({stage, block, "Q"});
    sn_k.set_probe({stage, block, "K"});
    sn_mask.set_probe({stage, block, "Attn"});
}

namespace {

// shared mask-and-select, inputs already projected+spiked [T,B,C,N]
SpikeTensor masked_select(const Tensor& q, const Tensor& k, int heads, LifNeuron& sn_mask) {
    prof::CatScope cat(prof::Cat::Mask);
    Tensor qh = split_heads_channels(q, heads);
    Tensor sums = reduce(qh, 3, Reduce::Sum);  // [T,B,h,1,N]
    Tensor mask = sn_mask.forward_time_major(sums);
    Tensor kh = split_heads_channels(k, heads);
    Tensor masked = hadamard(mask, kh);
    return SpikeTensor(merge_heads_channels(masked));
}

Tensor project_spike(const Tensor& x, Conv1dLayer& proj, BatchNorm& bn, LifNeuron& sn,
                     bool temporal) {
    prof::CatScope cat(prof::Cat::Proj);
    Tensor pre;
    if (temporal) {
        // operate along the time axis: [T,B,C,N] -> [N,B,C,T], conv over T,
        // permute back; BN statistics are layout-invariant per channel.
        static const std::vector<int> kTimeMajor = {3, 1, 2, 0};
        Tensor xp = permute(x, kTimeMajor);
        Tensor yp = proj.forward(xp);
        pre = permute(yp, kTimeMajor);
    } else {
        pre = proj.forward(x);
    }
    Tensor normed = bn.forward(pre, 2);
    return sn.forward_time_major(normed);
}

}  // namespace

SpikeTensor spatial_complement(const SpikeTensor& query_mod, const SpikeTensor& key_mod,
                               ComplementPathway& p) {
    SNN_CHECK_SHAPE(same_shape(query_mod.shape(), key_mod.shape()),
                    "spatial_complement: modality shapes differ: ", shape_str(query_mod.shape()),
                    " vs ", shape_str(key_mod.shape()));
    Tensor q = project_spike(query_mod.t, p.proj_q, p.bn_q, p.sn_q, false);
    Tensor k = project_spike(key_mod.t, p.proj_k, p.bn_k, p.sn_k, false);
    return masked_select(q, k, p.heads, p.sn_mask);
}

SpikeTensor temporal_complement(const SpikeTensor& query_mod, const SpikeTensor& key_mod,
                                ComplementPathway& p) {
    SNN_CHECK_SHAPE(same_shape(query_mod.shape(), key_mod.shape()),
                    "temporal_complement: modality shapes differ: ", shape_str(query_mod.shape()),
                    " vs ", shape_str(key_mod.shape()));
    Tensor q = project_spike(query_mod.t, p.proj_q, p.bn_q, p.sn_q, true);
    Tensor k = project_spike(key_mod.t, p.proj_k, p.bn_k, p.sn_k, true);
    return masked_select(q, k, p.heads, p.sn_mask);
}

// ---- block ----

CmqkaBlock::CmqkaBlock(const CmqkaConfig& c, Rng& rng) : cfg(c) {
    sn_in_video = LifNeuron(c.lif);
    sn_in_audio = LifNeuron(c.lif);
    spatial_va = ComplementPathway(c.channels, c.heads, false, 1, c.lif, rng);
    temporal_va = ComplementPathway(c.channels, c.heads, true, c.temporal_kernel, c.lif, rng);
    spatial_av = ComplementPathway(c.channels, c.heads, false, 1, c.lif, rng);
    temporal_av = ComplementPathway(c.channels, c.heads, true, c.temporal_kernel, c.lif, rng);
    alpha_video = Tensor::scalar(c.alpha_init);
    alpha_video.set_requires_grad(true);
    alpha_audio = Tensor::scalar(c.alpha_init);
    alpha_audio.set_requires_grad(true);
    mlp_video = SpikingMlp(c.channels, c.mlp_ratio, c.lif, rng);
    mlp_audio = SpikingMlp(c.channels, c.mlp_ratio, c.lif, rng);
    sn_mlp_in_video = LifNeuron(c.lif);
    sn_mlp_in_audio = LifNeuron(c.lif);
    if (c.pathway_mlps) {
        mlp_s_va.emplace(c.channels, c.mlp_ratio, c.lif, rng);
        mlp_t_va.emplace(c.channels, c.mlp_ratio, c.lif, rng);
        mlp_s_av.emplace(c.channels, c.mlp_ratio, c.lif, rng);
        mlp_t_av.emplace(c.channels, c.mlp_ratio, c.lif, rng);
    }
}

Tensor CmqkaBlock::fuse_and_integrate(const SpikeTensor& original, const SpikeTensor& s_feat,
                                      const SpikeTensor& t_feat, Tensor& alpha, SpikingMlp& mlp,
                                      LifNeuron& sn_mlp_in, Dim H, Dim W) {
    const Shape& os = original.shape();
    Dim T = os[0], B = os[1], C = os[2];
    SNN_CHECK_SHAPE(s_feat.t.dim(3) == H * W, "fuse_and_integrate: token count ", s_feat.t.dim(3),
                    " != H*W = ", H * W);
    Tensor h_cross;
    {
        prof::CatScope cat(prof::Cat::Fuse);
        Tensor s_red = reshape(reduce(s_feat.t, 3, Reduce::Mean), {T, B, C, 1, 1});
        Tensor t_red = reduce(reshape(t_feat.t, {T, B, C, H, W}), 0, Reduce::Mean);
        switch (cfg.mode) {
            case PathwayMode::Spatiotemporal:
                h_cross = hadamard(s_red, t_red);
                break;
            case PathwayMode::SpatialOnly:
                h_cross = hadamard(s_red, Tensor::full({1, 1, 1, H, W}, 1.0f));
                break;
            case PathwayMode::TemporalOnly:
                h_cross = hadamard(t_red, Tensor::full({T, 1, 1, 1, 1}, 1.0f));
                break;
        }
        h_cross = hadamard(h_cross, alpha);
    }
    Tensor out_pre = add(original.t, h_cross);
    Tensor mlp_in = sn_mlp_in.forward_time_major(out_pre);
    Tensor refined = mlp.forward(reshape(mlp_in, {T, B, C, H * W}));
    return add(out_pre, reshape(refined, {T, B, C, H, W}));
}

CmqkaOutput CmqkaBlock::forward(const Tensor& video, const Tensor& audio) {
    SNN_CHECK_SHAPE(same_shape(video.shape(), audio.shape()),
                    "cmqka_block: modality shapes differ: ", shape_str(video.shape()), " vs ",
                    shape_str(audio.shape()));
    SNN_CHECK_SHAPE(video.rank() == 5 && video.dim(2) == cfg.channels, "cmqka_block: want [T,B,C,H,W] with C=",
                    cfg.channels, ", got ", shape_str(video.shape()));
    Dim T = video.dim(0), B = video.dim(1), C = video.dim(2), H = video.dim(3), W = video.dim(4);
    SpikeTensor v_spk(sn_in_video.forward_time_major(video));
    SpikeTensor a_spk(sn_in_audio.forward_time_major(audio));
    SpikeTensor vf(reshape(v_spk.t, {T, B, C, H * W}));
    SpikeTensor af(reshape(a_spk.t, {T, B, C, H * W}));

    SpikeTensor s_va = spatial_complement(vf, af, spatial_va);
    SpikeTensor t_va = temporal_complement(vf, af, temporal_va);
    SpikeTensor s_av = spatial_complement(af, vf, spatial_av);
    SpikeTensor t_av = temporal_complement(af, vf, temporal_av);

    if (cfg.pathway_mlps) {
        s_va = SpikeTensor(mlp_s_va->forward(s_va.t));
        t_va = SpikeTensor(mlp_t_va->forward(t_va.t));
        s_av = SpikeTensor(mlp_s_av->forward(s_av.t));
        t_av = SpikeTensor(mlp_t_av->forward(t_av.t));
    }

    CmqkaOutput out;
    out.video_out = fuse_and_integrate(v_spk, s_va, t_va, alpha_video, mlp_video, sn_mlp_in_video, H, W);
    out.audio_out = fuse_and_integrate(a_spk, s_av, t_av, alpha_audio, mlp_audio, sn_mlp_in_audio, H, W);
    return out;
}

void CmqkaBlock::collect(ParamList& out, const std::string& prefix) {
    spatial_va.collect(out, prefix + ".spatial_va");
    temporal_va.collect(out, prefix + ".temporal_va");
    spatial_av.collect(out, prefix + ".spatial_av");
    temporal_av.collect(out, prefix + ".temporal_av");
    out.push_back({prefix + ".alpha_video", alpha_video, true});
    out.push_back({prefix + ".alpha_audio", alpha_audio, true});
    mlp_video.collect(out, prefix + ".mlp_video");
    mlp_audio.collect(out, prefix + ".mlp_audio");
    if (cfg.pathway_mlps) {
        mlp_s_va->collect(out, prefix + ".mlp_s_va");
        mlp_t_va->collect(out, prefix + ".mlp_t_va");
        mlp_s_av->collect(out, prefix + ".mlp_s_av");
        mlp_t_av->collect(out, prefix + ".mlp_t_av");
    }
}

void CmqkaBlock::set_training(bool on) {
    spatial_va.set_training(on);
    temporal_va.set_training(on);
    spatial_av.set_training(on);
    temporal_av.set_training(on);
    mlp_video.set_training(on);
    mlp_audio.set_training(on);
    if (cfg.pathway_mlps) {
        mlp_s_va->set_training(on);
        mlp_t_va->set_training(on);
        mlp_s_av->set_training(on);
        mlp_t_av->set_training(on);
    }
}

void CmqkaBlock::set_probes(const std::string& stage, int block) {
    sn_in_video.set_probe({stage, block, "Recast"});
    sn_in_audio.set_probe({stage, block, "Recast"});
    sn_mlp_in_video.set_probe({stage, block, "MlpIn"});
    sn_mlp_in_audio.set_probe({stage, block, "MlpIn"});
    spatial_va.set_probes(stage, block);
    temporal_va.set_probes(stage, block);
    spatial_av.set_probes(stage, block);
    temporal_av.set_probes(stage, block);
    mlp_video.set_probes(stage, block, "");
    mlp_audio.set_probes(stage, block, "");
}

}  // namespace snnergy
