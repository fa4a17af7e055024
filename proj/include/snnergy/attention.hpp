#pragma once

#include "snnergy/layers.hpp"
#include "snnergy/lif.hpp"

namespace snnergy {

// Pointwise channel projection for token-major layouts [..., N, C].
class TokenProj {
public:
    TokenProj() = default;
    TokenProj(Dim in_ch, Dim out_ch, Rng& rng);
    Tensor forward(const Tensor& x) const { return matmul(x, weight_); }
    void collect(ParamList& out, const std::string& prefix);
    Tensor& weight() { return weight_; }
    uint64_t macs_per_token() const { return static_cast<uint64_t>(in_ch_ * out_ch_); }

private:
    Dim in_ch_ = 0, out_ch_ = 0;
    Tensor weight_;  // [in, out]
};

// Spiking self-attention: SN(Q K^T V * s), softmax-free, quadratic in N.
struct SsaParams {
    Dim channels = 0;
    int heads = 1;
    TokenProj w_q, w_k, w_v;
    BatchNorm bn_q, bn_k, bn_v;
    LifNeuron sn_q, sn_k, sn_v, sn_out;
    Tensor scale_s;  // learnable, init 0.125
    LifParams lif;

    SsaParams() = default;
    SsaParams(Dim channels, int heads, const LifParams& lif, Rng& rng, float scale_init = 0.125f);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
};

// Attention core on pre-spiked inputs, exposed for oracles and benchmarks.
// q,k,v: [T,B,N,C] binary; returns output spikes [T,B,N,C].
Tensor ssa_attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& scale_s,
                          int heads, LifNeuron& sn_out);

SpikeTensor ssa_forward(const SpikeTensor& x, SsaParams& p);

// Query-Key token attention: channel sums -> binary token mask -> Hadamard
// mask on K -> post projection. Linear in N; never forms an N x N object.
struct QktaParams {
    Dim channels = 0;
    int heads = 1;
    TokenProj w_q, w_k, post_linear;
    BatchNorm bn_q, bn_k, bn_post;
    LifNeuron sn_q, sn_k, sn_mask, sn_out;
    LifParams lif;

    QktaParams() = default;
    QktaParams(Dim channels, int heads, const LifParams& lif, Rng& rng);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
};

// Mask-and-select core on pre-spiked q,k [T,B,N,C]; returns {mask [T,B,h,N,1],
// masked K merged back to [T,B,N,C]}.
std::pair<Tensor, Tensor> qkta_mask_core(const Tensor& q, const Tensor& k, int heads,
                                         LifNeuron& sn_mask);

SpikeTensor qkta_forward(const SpikeTensor& x, QktaParams& p);

// head utilities for token-major tensors
Tensor split_heads_tokens(const Tensor& x, int heads);   // [T,B,N,C] -> [T,B,h,N,Ch]
Tensor merge_heads_tokens(const Tensor& x);              // inverse

}  // namespace snnergy
