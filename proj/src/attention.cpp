#include "snnergy/attention.hpp"

#include <cmath>

#include "snnergy/counters.hpp"

namespace snnergy {

TokenProj::TokenProj(Dim in_ch, Dim out_ch, Rng& rng) : in_ch_(in_ch), out_ch_(out_ch) {
    float bound = std::sqrt(6.0f / static_cast<float>(in_ch));
    weight_ = Tensor::zeros({in_ch, out_ch});
    float* p = weight_.data();
    for (Dim i = 0; i < weight_.numel(); ++i) p[i] = rng.uniform(-bound, bound);
    weight_.set_requires_grad(true);
}

void TokenProj::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight_, true});
}

Tensor split_heads_tokens(const Tensor& x, int heads) {
    SNN_CHECK_SHAPE(x.rank() == 4, "split_heads: want [T,B,N,C], got ", shape_str(x.shape()));
    Dim T = x.dim(0), B = x.dim(1), N = x.dim(2), C = x.dim(3);
    SNN_CHECK_SHAPE(C % heads == 0, "split_heads: C=", C, " not divisible by heads=", heads);
    Tensor r = reshape(x, {T, B, N, heads, C / heads});
    return permute(r, {0, 1, 3, 2, 4});
}

Tensor merge_heads_tokens(const Tensor& x) {
    SNN_CHECK_SHAPE(x.rank() == 5, "merge_heads: want [T,B,h,N,Ch]");
    Dim T = x.dim(0), B = x.dim(1), h = x.dim(2), N = x.dim(3), Ch = x.dim(4);
    Tensor p = permute(x, {0, 1, 3, 2, 4});
    return reshape(p, {T, B, N, h * Ch});
}

// ---- SSA ----

SsaParams::SsaParams(Dim channels_, int heads_, const LifParams& lif_, Rng& rng, float scale_init)
    : channels(channels_), heads(heads_), lif(lif_) {
    SNN_CHECK_CONTRACT(channels % heads == 0, "SsaParams: C=", channels, " not divisible by h=", heads);
    SNN_CHECK_CONTRACT(scale_init > 0.0f, "SsaParams: scale must start positive");
    w_q = TokenProj(channels, channels, rng);
    w_k = TokenProj(channels, channels, rng);
    w_v = TokenProj(channels, channels, rng);
    bn_q = BatchNorm(channels);
    bn_k = BatchNorm(channels);
    bn_v = BatchNorm(channels);
    sn_q = LifNeuron(lif);
    sn_k = LifNeuron(lif);
    sn_v = LifNeuron(lif);
    sn_out = LifNeuron(lif);
    scale_s = Tensor::scalar(scale_init);
    scale_s.set_requires_grad(true);
}

void SsaParams::collect(ParamList& out, const std::string& prefix) {
    w_q.collect(out, prefix + ".w_q");
    w_k.collect(out, prefix + ".w_k");
    w_v.collect(out, prefix + ".w_v");
    bn_q.collect(out, prefix + ".bn_q");
    bn_k.collect(out, prefix + ".bn_k");
    bn_v.collect(out, prefix + ".bn_v");
    out.push_back({prefix + ".scale_s", scale_s, true});
}

void SsaParams::set_training(bool on) {
    bn_q.set_training(on);
    bn_k.set_training(on);
    bn_v.set_training(on);
}

Tensor ssa_attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& scale_s,
                          int heads, LifNeuron& sn_out) {
    Tensor qh = split_heads_tokens(q, heads);
    Tensor kh = split_heads_tokens(k, heads);
    Tensor vh = split_heads_tokens(v, heads);
    Tensor av;
    {
        prof::CatScope cat(prof::Cat::AttnMatmul);
        Tensor qk = matmul(qh, transpose_last2(kh));  // [T,B,h,N,N]
        av = matmul(qk, vh);                          // [T,B,h,N,Ch]
    }
    Tensor scaled = hadamard(av, scale_s);
    Tensor membrane = merge_heads_tokens(scaled);
    return sn_out.forward_time_major(membrane);
}

SpikeTensor ssa_forward(const SpikeTensor& x, SsaParams& p) {
    SNN_CHECK_SHAPE(x.t.rank() == 4 && x.t.dim(3) == p.channels, "ssa_forward: want [T,B,N,C] with C=",
                    p.channels, ", got ", shape_str(x.t.shape()));
    Tensor q, k, v;
    {
        prof::CatScope cat(prof::Cat::Proj);
        q = p.sn_q.forward_time_major(p.bn_q.forward(p.w_q.forward(x.t), 3));
        k = p.sn_k.forward_time_major(p.bn_k.forward(p.w_k.forward(x.t), 3));
        v = p.sn_v.forward_time_major(p.bn_v.forward(p.w_v.forward(x.t), 3));
    }
    return SpikeTensor(ssa_attention_core(q, k, v, p.scale_s, p.heads, p.sn_out));
}

// ---- QKTA ----

QktaParams::QktaParams(Dim channels_, int heads_, const LifParams& lif_, Rng& rng)
    : channels(channels_), heads(heads_), lif(lif_) {
    SNN_CHECK_CONTRACT(channels % heads == 0, "QktaParams: C=", channels, " not divisible by h=", heads);
    w_q = TokenProj(channels, channels, rng);
    w_k = TokenProj(channels, channels, rng);
    post_linear = TokenProj(channels, channels, rng);
    bn_q = BatchNorm(channels);
    bn_k = BatchNorm(channels);
    bn_post = BatchNorm(channels);
    sn_q = LifNeuron(lif);
    sn_k = LifNeuron(lif);
    sn_mask = LifNeuron(lif);
    sn_out = LifNeuron(lif);
}

void QktaParams::collect(ParamList& out, const std::string& prefix) {
    w_q.collect(out, prefix + ".w_q");
    w_k.collect(out, prefix + ".w_k");
    post_linear.collect(out, prefix + ".post");
    bn_q.collect(out, prefix + ".bn_q");
    bn_k.collect(out, prefix + ".bn_k");
    bn_post.collect(out, prefix + ".bn_post");
}

void QktaParams::set_training(bool on) {
    bn_q.set_training(on);
    bn_k.set_training(on);
    bn_post.set_training(on);
}

std::pair<Tensor, Tensor> qkta_mask_core(const Tensor& q, const Tensor& k, int heads,
                                         LifNeuron& sn_mask) {
    Tensor qh = split_heads_tokens(q, heads);
    Tensor kh = split_heads_tokens(k, heads);
    Tensor mask, masked;
    {
        prof::CatScope cat(prof::Cat::Mask);
        Tensor sums = reduce(qh, 4, Reduce::Sum);  // [T,B,h,N,1]
        mask = sn_mask.forward_time_major(sums);
        masked = hadamard(mask, kh);  // broadcast over per-head channels
    }
    return {mask, merge_heads_tokens(masked)};
}

SpikeTensor qkta_forward(const SpikeTensor& x, QktaParams& p) {
    SNN_CHECK_SHAPE(x.t.rank() == 4 && x.t.dim(3) == p.channels, "qkta_forward: want [T,B,N,C] with C=",
                    p.channels, ", got ", shape_str(x.t.shape()));
    Tensor q, k;
    {
        prof::CatScope cat(prof::Cat::Proj);
        q = p.sn_q.forward_time_major(p.bn_q.forward(p.w_q.forward(x.t), 3));
        k = p.sn_k.forward_time_major(p.bn_k.forward(p.w_k.forward(x.t), 3));
    }
    auto [mask, masked] = qkta_mask_core(q, k, p.heads, p.sn_mask);
    Tensor out;
    {
        prof::CatScope cat(prof::Cat::Proj);
        out = p.bn_post.forward(p.post_linear.forward(masked), 3);
    }
    return SpikeTensor(p.sn_out.forward_time_major(out));
}

}  // namespace snnergy
