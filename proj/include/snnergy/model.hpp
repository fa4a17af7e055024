#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "snnergy/attention.hpp"
#include "snnergy/cmqka.hpp"
#include "snnergy/spds.hpp"

namespace snnergy {

enum class AttentionKind { Cmqka, SsaCross };
enum class FusionMode { Concat, Average };

struct StageSpec {
    int index = 1;
    Dim channels = 0;
    int depth = 1;
    AttentionKind kind = AttentionKind::Cmqka;
    int heads = 8;
};

struct ModelConfig {
    Dim height = 128, width = 128;
    int timesteps = 6;
    Dim base_dim = 192;
    int num_classes = 10;
    std::array<StageSpec, 3> stages{};
    FusionMode fusion = FusionMode::Average;
    LifParams lif;
    uint64_t seed = 1;
    int mlp_ratio = 4;
    int temporal_kernel = 1;
    float alpha_init = 1.5f;
    float ssa_scale_init = 0.125f;
    PathwayMode pathway_mode = PathwayMode::Spatiotemporal;
    bool stage3_mlp = true;
    bool pathway_mlps = false;

    // stage channel/depth/kind progression from base_dim and depths {1,1,2}
    static ModelConfig preset(Dim height, Dim width, int timesteps, Dim base_dim, int num_classes,
                              int heads, uint64_t seed);
    static ModelConfig toy(int num_classes = 4, uint64_t seed = 1);
    static ModelConfig paper(int num_classes = 6, uint64_t seed = 1);

    void validate() const;
    Dim stage_tokens(int stage_index) const;  // N at stage 1..3
};

void config_to_json(const ModelConfig& cfg, nlohmann::json& j);
ModelConfig config_from_json(const nlohmann::json& j);

// Cross-modal spiking self-attention block (stage 3): Query from the modality
// being updated, Key/Value from the other; residual into the query modality;
// binary re-cast at the block output.
struct SsaCrossDirection {
    TokenProj w_q, w_k, w_v;
    BatchNorm bn_q, bn_k, bn_v;
    LifNeuron sn_q, sn_k, sn_v, sn_attn;
    Tensor scale_s;

    SsaCrossDirection() = default;
    SsaCrossDirection(Dim channels, const LifParams& lif, float scale_init, Rng& rng);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
};

struct SsaCrossBlock {
    Dim channels = 0;
    int heads = 1;
    bool with_mlp = true;
    LifNeuron sn_in_video, sn_in_audio;
    SsaCrossDirection dir_video, dir_audio;  // dir_video updates the video stream
    SpikingMlp mlp_video, mlp_audio;
    LifNeuron sn_mlp_in_video, sn_mlp_in_audio;
    LifNeuron sn_out_video, sn_out_audio;

    SsaCrossBlock() = default;
    SsaCrossBlock(Dim channels, int heads, const LifParams& lif, int mlp_ratio, bool with_mlp,
                  float scale_init, Rng& rng);
    std::pair<SpikeTensor, SpikeTensor> forward(const Tensor& video, const Tensor& audio);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
    void set_probes(const std::string& stage, int block);
};

Tensor classify_head(const Tensor& f_video, const Tensor& f_audio, FusionMode mode,
                     const Linear& classifier);

class SnnergyModel {
public:
    explicit SnnergyModel(const ModelConfig& cfg);

    // video [T,B,3,H,W], audio [T,B,1,H,W] (real-valued); returns logits [B,K]
    Tensor forward(const Tensor& video, const Tensor& audio);
    // per-modality pooled features f_v, f_a in R^{B x C3}
    std::pair<Tensor, Tensor> features(const Tensor& video, const Tensor& audio);

    ParamList params();
    Dim trainable_param_count();
    void set_training(bool on);
    const ModelConfig& config() const { return cfg_; }

    void save(const std::string& path);
    static SnnergyModel load(const std::string& path);

    // sub-structures exposed for tests and the profiler
    SpdsBlock& stem_video() { return stem_v_; }
    SpdsBlock& stem_audio() { return stem_a_; }
    std::vector<CmqkaBlock>& stage1() { return stage1_; }
    std::vector<CmqkaBlock>& stage2() { return stage2_; }
    std::vector<SsaCrossBlock>& stage3() { return stage3_; }

private:
    ModelConfig cfg_;
    SpdsBlock stem_v_, stem_a_, down2_v_, down2_a_, down3_v_, down3_a_;
    std::vector<CmqkaBlock> stage1_, stage2_;
    std::vector<SsaCrossBlock> stage3_;
    LifNeuron recast1_v_, recast1_a_, recast2_v_, recast2_a_;
    Linear classifier_;
};

}  // namespace snnergy
