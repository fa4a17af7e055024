#pragma once

#include <optional>

#include "snnergy/attention.hpp"
#include "snnergy/layers.hpp"

namespace snnergy {

// Which pooled factors enter the multiplicative fusion. Disabling a pathway
// replaces its factor with ones (ablation support).
enum class PathwayMode { Spatiotemporal, SpatialOnly, TemporalOnly };

struct CmqkaConfig {
    Dim channels = 0;
    int heads = 8;
    LifParams lif;
    int mlp_ratio = 4;
    int temporal_kernel = 1;  // kernel of the time-axis projections
    float alpha_init = 1.5f;
    PathwayMode mode = PathwayMode::Spatiotemporal;
    bool pathway_mlps = false;  // extra MLP refinement on S and T features
};

// One directional attention pathway: Query from one modality, Key from the
// other, channel-aggregated binary mask, selective masking. `temporal` runs
// the projections along the time axis (inputs permuted to token-major time
// sequences and back).
struct ComplementPathway {
    bool temporal = false;
    int heads = 1;
    Conv1dLayer proj_q, proj_k;
    BatchNorm bn_q, bn_k;
    LifNeuron sn_q, sn_k, sn_mask;

    ComplementPathway() = default;
    ComplementPathway(Dim channels, int heads, bool temporal, int kernel, const LifParams& lif,
                      Rng& rng);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
    void set_probes(const std::string& stage, int block);
};

// channel-major head utilities: [T,B,C,N] <-> [T,B,h,Ch,N]
Tensor split_heads_channels(const Tensor& x, int heads);
Tensor merge_heads_channels(const Tensor& x);

// S = A(s) (*) K with A(s)[t,:,n] = SN(sum_c Q[t,c,n]) per head.
SpikeTensor spatial_complement(const SpikeTensor& query_mod, const SpikeTensor& key_mod,
                               ComplementPathway& p);

// Same computation with projections applied along the time axis.
SpikeTensor temporal_complement(const SpikeTensor& query_mod, const SpikeTensor& key_mod,
                                ComplementPathway& p);

struct CmqkaOutput {
    Tensor video_out;  // [T,B,C,H,W], real-valued (residual domain)
    Tensor audio_out;
};

// Bidirectional block; every neuron is stateful across the T loop.
struct CmqkaBlock {
    CmqkaConfig cfg;
    LifNeuron sn_in_video, sn_in_audio;      // re-binarize the incoming residual stream
    ComplementPathway spatial_va, temporal_va;  // video queries audio
    ComplementPathway spatial_av, temporal_av;  // audio queries video
    Tensor alpha_video, alpha_audio;            // learnable residual gains
    SpikingMlp mlp_video, mlp_audio;
    LifNeuron sn_mlp_in_video, sn_mlp_in_audio;
    std::optional<SpikingMlp> mlp_s_va, mlp_t_va, mlp_s_av, mlp_t_av;  // draft variant, off by default

    CmqkaBlock() = default;
    CmqkaBlock(const CmqkaConfig& cfg, Rng& rng);

    CmqkaOutput forward(const Tensor& video, const Tensor& audio);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
    void set_probes(const std::string& stage, int block);

    // pooled multiplicative fusion + learnable residual + final spiking MLP
    Tensor fuse_and_integrate(const SpikeTensor& original, const SpikeTensor& s_feat,
                              const SpikeTensor& t_feat, Tensor& alpha, SpikingMlp& mlp,
                              LifNeuron& sn_mlp_in, Dim H, Dim W);
};

}  // namespace snnergy
