#include "snnergy/model.hpp"

#include <nlohmann/json.hpp>

#include "snnergy/counters.hpp"
#include "snnergy/dataio.hpp"

namespace snnergy {

ModelConfig ModelConfig::preset(Dim height, Dim width, int timesteps, Dim base_dim,
                                int num_classes, int heads, uint64_t seed) {
    ModelConfig cfg;
    cfg.height = height;
    cfg.width = width;
    cfg.timesteps = timesteps;
    cfg.base_dim = base_dim;
    cfg.num_classes = num_classes;
    cfg.seed = seed;
    int depths[3] = {1, 1, 2};
    for (int i = 0; i < 3; ++i) {
        cfg.stages[static_cast<size_t>(i)] =
            StageSpec{i + 1, base_dim << i, depths[i],
                      i == 2 ? AttentionKind::SsaCross : AttentionKind::Cmqka, heads};
    }
    return cfg;
}

ModelConfig ModelConfig::toy(int num_classes, uint64_t seed) {
    return preset(32, 32, 2, 8, num_classes, 2, seed);
}

ModelConfig ModelConfig::paper(int num_classes, uint64_t seed) {
    return preset(128, 128, 6, 192, num_classes, 8, seed);
}

void ModelConfig::validate() const {
    SNN_CHECK(height % 16 == 0 && width % 16 == 0,
              "ModelConfig: input size must be divisible by 16, got ", height, "x", width);
    SNN_CHECK(timesteps >= 1, "ModelConfig: timesteps must be positive");
    SNN_CHECK(num_classes >= 2, "ModelConfig: need at least 2 classes");
    SNN_CHECK(stages[0].channels == base_dim, "ModelConfig: stage 1 channels must equal base_dim");
    SNN_CHECK(stages[1].channels == 2 * stages[0].channels &&
                  stages[2].channels == 2 * stages[1].channels,
              "ModelConfig: channel progression must double per stage");
    SNN_CHECK(stages[2].kind == AttentionKind::SsaCross, "ModelConfig: stage 3 must use cross-modal SSA");
    for (const auto& s : stages) {
        SNN_CHECK(s.depth >= 1, "ModelConfig: stage depth must be positive");
        SNN_CHECK(s.channels % s.heads == 0, "ModelConfig: stage ", s.index, " channels ",
                  s.channels, " not divisible by heads ", s.heads);
    }
    lif.validate();
}

Dim ModelConfig::stage_tokens(int stage_index) const {
    Dim div = 4ll << (stage_index - 1);  // H/4, H/8, H/16
    return (height / div) * (width / div);
}

void config_to_json(const ModelConfig& cfg, nlohmann::json& j) {
    j = nlohmann::json{
        {"height", cfg.height},
        {"width", cfg.width},
        {"timesteps", cfg.timesteps},
        {"base_dim", cfg.base_dim},
        {"num_classes", cfg.num_classes},
        {"fusion", cfg.fusion == FusionMode::Concat ? "concat" : "average"},
        {"seed", cfg.seed},
        {"mlp_ratio", cfg.mlp_ratio},
        {"temporal_kernel", cfg.temporal_kernel},
        {"alpha_init", cfg.alpha_init},
        {"ssa_scale_init", cfg.ssa_scale_init},
        {"pathway_mode", cfg.pathway_mode == PathwayMode::Spatiotemporal ? "spatiotemporal"
                         : cfg.pathway_mode == PathwayMode::SpatialOnly  ? "spatial"
                                                                         : "temporal"},
        {"stage3_mlp", cfg.stage3_mlp},
        {"pathway_mlps", cfg.pathway_mlps},
        {"lif",
         {{"v_threshold", cfg.lif.v_threshold},
          {"tau", cfg.lif.tau},
          {"surrogate_slope", cfg.lif.surrogate_slope},
          {"detach_reset", cfg.lif.detach_reset}}},
    };
    j["stages"] = nlohmann::json::array();
    for (const auto& s : cfg.stages) {
        j["stages"].push_back({{"index", s.index},
                               {"channels", s.channels},
                               {"depth", s.depth},
                               {"kind", s.kind == AttentionKind::Cmqka ? "cmqka" : "ssa_cross"},
                               {"heads", s.heads}});
    }
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.height = j.at("height");
    cfg.width = j.at("width");
    cfg.timesteps = j.at("timesteps");
    cfg.base_dim = j.at("base_dim");
    cfg.num_classes = j.at("num_classes");
    std::string fusion = j.value("fusion", "average");
    if (fusion == "concat")
        cfg.fusion = FusionMode::Concat;
    else if (fusion == "average")
        cfg.fusion = FusionMode::Average;
    else
        throw ConfigError("unknown fusion mode: " + fusion);
    cfg.seed = j.at("seed");
    cfg.mlp_ratio = j.value("mlp_ratio", 4);
    cfg.temporal_kernel = j.value("temporal_kernel", 1);
    cfg.alpha_init = j.value("alpha_init", 1.5f);
    cfg.ssa_scale_init = j.value("ssa_scale_init", 0.125f);
    std::string mode = j.value("pathway_mode", "spatiotemporal");
    if (mode == "spatiotemporal")
        cfg.pathway_mode = PathwayMode::Spatiotemporal;
    else if (mode == "spatial")
        cfg.pathway_mode = PathwayMode::SpatialOnly;
    else if (mode == "temporal")
        cfg.pathway_mode = PathwayMode::TemporalOnly;
    else
        throw ConfigError("unknown pathway mode: " + mode);
    cfg.stage3_mlp = j.value("stage3_mlp", true);
    cfg.pathway_mlps = j.value("pathway_mlps", false);
    if (j.contains("lif")) {
        const auto& l = j.at("lif");
        cfg.lif.v_threshold = l.value("v_threshold", 0.6f);
        cfg.lif.tau = l.value("tau", 2.0f);
        cfg.lif.surrogate_slope = l.value("surrogate_slope", 4.0f);
        cfg.lif.detach_reset = l.value("detach_reset", true);
    }
    const auto& stages = j.at("stages");
    SNN_CHECK(stages.size() == 3, "config: want exactly 3 stages");
    for (size_t i = 0; i < 3; ++i) {
        const auto& s = stages[i];
        std::string kind = s.at("kind");
        cfg.stages[i] = StageSpec{
            s.at("index"), s.at("channels"), s.at("depth"),
            kind == "cmqka" ? AttentionKind::Cmqka : AttentionKind::SsaCross, s.at("heads")};
    }
    cfg.validate();
    return cfg;
}

// ---- stage-3 cross-modal SSA ----

SsaCrossDirection::SsaCrossDirection(Dim channels, const LifParams& lif, float scale_init, Rng& rng) {
    w_q = TokenProj(channels, channels, rng);
    w_k = TokenProj(channels, channels, rng);
    w_v = TokenProj(channels, channels, rng);
    bn_q = BatchNorm(channels);
    bn_k = BatchNorm(channels);
    bn_v = BatchNorm(channels);
    sn_q = LifNeuron(lif);
    sn_k = LifNeuron(lif);
    sn_v = LifNeuron(lif);
    sn_attn = LifNeuron(lif);
    scale_s = Tensor::scalar(scale_init);
    scale_s.set_requires_grad(true);
}

void SsaCrossDirection::collect(ParamList& out, const std::string& prefix) {
    w_q.collect(out, prefix + ".w_q");
    w_k.collect(out, prefix + ".w_k");
    w_v.collect(out, prefix + ".w_v");
    bn_q.collect(out, prefix + ".bn_q");
    bn_k.collect(out, prefix + ".bn_k");
    bn_v.collect(out, prefix + ".bn_v");
    out.push_back({prefix + ".scale_s", scale_s, true});
}

void SsaCrossDirection::set_training(bool on) {
    bn_q.set_training(on);
    bn_k.set_training(on);
    bn_v.set_training(on);
}

SsaCrossBlock::SsaCrossBlock(Dim channels_, int heads_, const LifParams& lif, int mlp_ratio,
                             bool with_mlp_, float scale_init, Rng& rng)
    : channels(channels_), heads(heads_), with_mlp(with_mlp_) {
    sn_in_video = LifNeuron(lif);
    sn_in_audio = LifNeuron(lif);
    dir_video = SsaCrossDirection(channels, lif, scale_init, rng);
    dir_audio = SsaCrossDirection(channels, lif, scale_init, rng);
    if (with_mlp) {
        mlp_video = SpikingMlp(channels, mlp_ratio, lif, rng);
        mlp_audio = SpikingMlp(channels, mlp_ratio, lif, rng);
        sn_mlp_in_video = LifNeuron(lif);
        sn_mlp_in_audio = LifNeuron(lif);
    }
    sn_out_video = LifNeuron(lif);
    sn_out_audio = LifNeuron(lif);
}

namespace {
Tensor to_tokens(const Tensor& x5) {  // [T,B,C,H,W] -> [T,B,N,C]
    Dim T = x5.dim(0), B = x5.dim(1), C = x5.dim(2), H = x5.dim(3), W = x5.dim(4);
    return permute(reshape(x5, {T, B, C, H * W}), {0, 1, 3, 2});
}
Tensor from_tokens(const Tensor& xt, Dim H, Dim W) {  // [T,B,N,C] -> [T,B,C,H,W]
    Dim T = xt.dim(0), B = xt.dim(1), C = xt.dim(3);
    return reshape(permute(xt, {0, 1, 3, 2}), {T, B, C, H, W});
}
}  // namespace

std::pair<SpikeTensor, SpikeTensor> SsaCrossBlock::forward(const Tensor& video, const Tensor& audio) {
    SNN_CHECK_SHAPE(same_shape(video.shape(), audio.shape()),
                    "ssa_cross_block: modality shapes differ");
    SNN_CHECK_SHAPE(video.rank() == 5 && video.dim(2) == channels,
                    "ssa_cross_block: want [T,B,C,H,W] with C=", channels, ", got ",
                    shape_str(video.shape()));
    Dim H = video.dim(3), W = video.dim(4);
    Tensor v_spk = sn_in_video.forward_time_major(video);
    Tensor a_spk = sn_in_audio.forward_time_major(audio);
    Tensor vt = to_tokens(v_spk);
    Tensor at = to_tokens(a_spk);

    auto project = [](SsaCrossDirection& d, const Tensor& q_src, const Tensor& kv_src) {
        prof::CatScope cat(prof::Cat::Proj);
        Tensor q = d.sn_q.forward_time_major(d.bn_q.forward(d.w_q.forward(q_src), 3));
        Tensor k = d.sn_k.forward_time_major(d.bn_k.forward(d.w_k.forward(kv_src), 3));
        Tensor v = d.sn_v.forward_time_major(d.bn_v.forward(d.w_v.forward(kv_src), 3));
        return std::array<Tensor, 3>{q, k, v};
    };

    auto [qv, ka, va] = project(dir_video, vt, at);
    Tensor attn_v = ssa_attention_core(qv, ka, va, dir_video.scale_s, heads, dir_video.sn_attn);
    auto [qa, kv, vv] = project(dir_audio, at, vt);
    Tensor attn_a = ssa_attention_core(qa, kv, vv, dir_audio.scale_s, heads, dir_audio.sn_attn);

    Tensor v1 = add(vt, attn_v);
    Tensor a1 = add(at, attn_a);
    if (with_mlp) {
        // SpikingMlp wants channel-major [T,B,C,N]
        Tensor v_sp = sn_mlp_in_video.forward_time_major(v1);
        Tensor refined_v = mlp_video.forward(permute(v_sp, {0, 1, 3, 2}));
        v1 = add(v1, permute(refined_v, {0, 1, 3, 2}));
        Tensor a_sp = sn_mlp_in_audio.forward_time_major(a1);
        Tensor refined_a = mlp_audio.forward(permute(a_sp, {0, 1, 3, 2}));
        a1 = add(a1, permute(refined_a, {0, 1, 3, 2}));
    }
    Tensor out_v = sn_out_video.forward_time_major(v1);
    Tensor out_a = sn_out_audio.forward_time_major(a1);
    return {SpikeTensor(from_tokens(out_v, H, W)), SpikeTensor(from_tokens(out_a, H, W))};
}

void SsaCrossBlock::collect(ParamList& out, const std::string& prefix) {
    dir_video.collect(out, prefix + ".dir_video");
    dir_audio.collect(out, prefix + ".dir_audio");
    if (with_mlp) {
        mlp_video.collect(out, prefix + ".mlp_video");
        mlp_audio.collect(out, prefix + ".mlp_audio");
    }
}

void SsaCrossBlock::set_training(bool on) {
    dir_video.set_training(on);
    dir_audio.set_training(on);
    if (with_mlp) {
        mlp_video.set_training(on);
        mlp_audio.set_training(on);
    }
}

void SsaCrossBlock::set_probes(const std::string& stage, int block) {
    dir_video.sn_q.set_probe({stage, block, "Q"});
    dir_video.sn_k.set_probe({stage, block, "K"});
    dir_video.sn_v.set_probe({stage, block, "V"});
    dir_video.sn_attn.set_probe({stage, block, "Attn"});
    dir_audio.sn_q.set_probe({stage, block, "Q"});
    dir_audio.sn_k.set_probe({stage, block, "K"});
    dir_audio.sn_v.set_probe({stage, block, "V"});
    dir_audio.sn_attn.set_probe({stage, block, "Attn"});
    if (with_mlp) {
        sn_mlp_in_video.set_probe({stage, block, "MlpIn"});
        sn_mlp_in_audio.set_probe({stage, block, "MlpIn"});
        mlp_video.set_probes(stage, block, "");
        mlp_audio.set_probes(stage, block, "");
    }
}

Tensor classify_head(const Tensor& f_video, const Tensor& f_audio, FusionMode mode,
                     const Linear& classifier) {
    SNN_CHECK_SHAPE(same_shape(f_video.shape(), f_audio.shape()),
                    "classify_head: feature shapes differ");
    prof::CatScope cat(prof::Cat::Head);
    Tensor fused;
    switch (mode) {
        case FusionMode::Concat:
            fused = concat_last(f_video, f_audio);
            break;
        case FusionMode::Average:
            fused = scale(add(f_video, f_audio), 0.5f);
            break;
        default:
            throw ConfigError("classify_head: unknown fusion mode");
    }
    return classifier.forward(fused);
}

// ---- full model ----

SnnergyModel::SnnergyModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(cfg.seed, 0x6d6f64656cull));
    const Dim c1 = cfg.stages[0].channels, c2 = cfg.stages[1].channels, c3 = cfg.stages[2].channels;
    stem_v_ = SpdsBlock({3, c1, 4, cfg.lif}, rng);
    stem_a_ = SpdsBlock({1, c1, 4, cfg.lif}, rng);
    down2_v_ = SpdsBlock({c1, c2, 2, cfg.lif}, rng);
    down2_a_ = SpdsBlock({c1, c2, 2, cfg.lif}, rng);
    down3_v_ = SpdsBlock({c2, c3, 2, cfg.lif}, rng);
    down3_a_ = SpdsBlock({c2, c3, 2, cfg.lif}, rng);

    CmqkaConfig b1{c1, cfg.stages[0].heads, cfg.lif, cfg.mlp_ratio, cfg.temporal_kernel,
                   cfg.alpha_init, cfg.pathway_mode, cfg.pathway_mlps};
    for (int d = 0; d < cfg.stages[0].depth; ++d) stage1_.emplace_back(b1, rng);
    CmqkaConfig b2 = b1;
    b2.channels = c2;
    b2.heads = cfg.stages[1].heads;
    for (int d = 0; d < cfg.stages[1].depth; ++d) stage2_.emplace_back(b2, rng);
    for (int d = 0; d < cfg.stages[2].depth; ++d)
        stage3_.emplace_back(c3, cfg.stages[2].heads, cfg.lif, cfg.mlp_ratio, cfg.stage3_mlp,
                             cfg.ssa_scale_init, rng);

    recast1_v_ = LifNeuron(cfg.lif);
    recast1_a_ = LifNeuron(cfg.lif);
    recast2_v_ = LifNeuron(cfg.lif);
    recast2_a_ = LifNeuron(cfg.lif);

    Dim feat = cfg.fusion == FusionMode::Concat ? 2 * c3 : c3;
    classifier_ = Linear(feat, cfg.num_classes, rng);

    stem_v_.set_probes("stem_v");
    stem_a_.set_probes("stem_a");
    down2_v_.set_probes("down2_v");
    down2_a_.set_probes("down2_a");
    down3_v_.set_probes("down3_v");
    down3_a_.set_probes("down3_a");
    for (size_t i = 0; i < stage1_.size(); ++i) stage1_[i].set_probes("stage1", static_cast<int>(i));
    for (size_t i = 0; i < stage2_.size(); ++i) stage2_[i].set_probes("stage2", static_cast<int>(i));
    for (size_t i = 0; i < stage3_.size(); ++i) stage3_[i].set_probes("stage3", static_cast<int>(i));
    recast1_v_.set_probe({"stage1", -1, "RecastOut"});
    recast1_a_.set_probe({"stage1", -1, "RecastOut"});
    recast2_v_.set_probe({"stage2", -1, "RecastOut"});
    recast2_a_.set_probe({"stage2", -1, "RecastOut"});
}

namespace {
Tensor gap_features(const Tensor& spikes5) {  // [T,B,C,H,W] -> [B,C]
    prof::CatScope cat(prof::Cat::Head);
    Tensor t = reduce(spikes5, 4, Reduce::Mean);
    t = reduce(t, 3, Reduce::Mean);
    t = reduce(t, 0, Reduce::Mean);  // temporal mean after GAP
    return reshape(t, {t.dim(1), t.dim(2)});
}
}  // namespace

std::pair<Tensor, Tensor> SnnergyModel::features(const Tensor& video, const Tensor& audio) {
    SNN_CHECK_SHAPE(video.rank() == 5 && video.dim(2) == 3, "model: video must be [T,B,3,H,W], got ",
                    shape_str(video.shape()));
    SNN_CHECK_SHAPE(audio.rank() == 5 && audio.dim(2) == 1, "model: audio must be [T,B,1,H,W], got ",
                    shape_str(audio.shape()));
    SNN_CHECK_SHAPE(video.dim(3) == cfg_.height && video.dim(4) == cfg_.width,
                    "model: input size ", video.dim(3), "x", video.dim(4),
                    " does not match config ", cfg_.height, "x", cfg_.width);
    SNN_CHECK_SHAPE(video.dim(0) == cfg_.timesteps, "model: expected T=", cfg_.timesteps,
                    " timesteps, got ", video.dim(0));

    Tensor v, a;
    {
        prof::LabelScope label("stem");
        v = stem_v_.forward(video).t;
        a = stem_a_.forward(audio).t;
    }
    {
        prof::LabelScope label("stage1");
        for (size_t i = 0; i < stage1_.size(); ++i) {
            try {
                CmqkaOutput out = stage1_[i].forward(v, a);
                v = out.video_out;
                a = out.audio_out;
            } catch (const Error& e) {
                throw Error(strcat_msg("stage1/block", i, ": ", e.what()));
            }
        }
        v = recast1_v_.forward_time_major(v);
        a = recast1_a_.forward_time_major(a);
    }
    {
        prof::LabelScope label("stage2");
        v = down2_v_.forward(v).t;
        a = down2_a_.forward(a).t;
        for (size_t i = 0; i < stage2_.size(); ++i) {
            try {
                CmqkaOutput out = stage2_[i].forward(v, a);
                v = out.video_out;
                a = out.audio_out;
            } catch (const Error& e) {
                throw Error(strcat_msg("stage2/block", i, ": ", e.what()));
            }
        }
        v = recast2_v_.forward_time_major(v);
        a = recast2_a_.forward_time_major(a);
    }
    {
        prof::LabelScope label("stage3");
        v = down3_v_.forward(v).t;
        a = down3_a_.forward(a).t;
        for (size_t i = 0; i < stage3_.size(); ++i) {
            try {
                auto [vo, ao] = stage3_[i].forward(v, a);
                v = vo.t;
                a = ao.t;
            } catch (const Error& e) {
                throw Error(strcat_msg("stage3/block", i, ": ", e.what()));
            }
        }
    }
    return {gap_features(v), gap_features(a)};
}

Tensor SnnergyModel::forward(const Tensor& video, const Tensor& audio) {
    auto [fv, fa] = features(video, audio);
    return classify_head(fv, fa, cfg_.fusion, classifier_);
}

ParamList SnnergyModel::params() {
    ParamList out;
    stem_v_.collect(out, "stem_v");
    stem_a_.collect(out, "stem_a");
    down2_v_.collect(out, "down2_v");
    down2_a_.collect(out, "down2_a");
    down3_v_.collect(out, "down3_v");
    down3_a_.collect(out, "down3_a");
    for (size_t i = 0; i < stage1_.size(); ++i)
        stage1_[i].collect(out, "stage1.b" + std::to_string(i));
    for (size_t i = 0; i < stage2_.size(); ++i)
        stage2_[i].collect(out, "stage2.b" + std::to_string(i));
    for (size_t i = 0; i < stage3_.size(); ++i)
        stage3_[i].collect(out, "stage3.b" + std::to_string(i));
    classifier_.collect(out, "head.classifier");
    return out;
}

Dim SnnergyModel::trainable_param_count() {
    Dim n = 0;
    for (auto& p : params())
        if (p.trainable) n += p.tensor.numel();
    return n;
}

void SnnergyModel::set_training(bool on) {
    stem_v_.set_training(on);
    stem_a_.set_training(on);
    down2_v_.set_training(on);
    down2_a_.set_training(on);
    down3_v_.set_training(on);
    down3_a_.set_training(on);
    for (auto& b : stage1_) b.set_training(on);
    for (auto& b : stage2_) b.set_training(on);
    for (auto& b : stage3_) b.set_training(on);
}

void SnnergyModel::save(const std::string& path) {
    nlohmann::json j;
    config_to_json(cfg_, j);
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (auto& p : params()) tensors.emplace_back(p.name, p.tensor);
    save_checkpoint(path, j, tensors);
}

SnnergyModel SnnergyModel::load(const std::string& path) {
    auto [config, tensors] = load_checkpoint(path);
    SnnergyModel model(config_from_json(config));
    for (auto& p : model.params()) {
        auto it = tensors.find(p.name);
        SNN_CHECK(it != tensors.end(), "checkpoint missing tensor: ", p.name);
        SNN_CHECK_SHAPE(same_shape(it->second.shape(), p.tensor.shape()),
                        "checkpoint tensor ", p.name, " has shape ", shape_str(it->second.shape()),
                        ", model wants ", shape_str(p.tensor.shape()));
        std::copy(it->second.values().begin(), it->second.values().end(), p.tensor.values().begin());
    }
    return model;
}

}  // namespace snnergy
