#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snnergy/layers.hpp"

namespace snnergy {

struct SpdsConfig {
    Dim in_channels = 0;
    Dim out_channels = 0;
    int reduction = 2;  // 4 for the stem, 2 between stages
    LifParams lif;

    void validate() const {
        SNN_CHECK_CONTRACT(reduction == 2 || reduction == 4, "SpdsConfig: reduction must be 2 or 4");
        SNN_CHECK_CONTRACT(in_channels >= 1 && out_channels >= 1, "SpdsConfig: bad channel counts");
    }
};

// Spiking patch downsampling with shortcut. Extraction branch:
// [conv3x3 -> BN -> maxpool -> LIF] x (r/2) -> conv3x3 -> BN. Shortcut:
// 1x1 strided conv -> BN (tapped at the first unit's spikes for the stem,
// at the block input for r=2). Output: LIF(extraction + shortcut).
struct SpdsBlock {
    SpdsConfig cfg;
    Conv2dLayer conv1;
    BatchNorm bn1;
    LifNeuron sn1;
    std::optional<Conv2dLayer> conv2;  // stem only
    std::optional<BatchNorm> bn2;
    std::optional<LifNeuron> sn2;
    Conv2dLayer refine_conv;
    BatchNorm refine_bn;
    Conv2dLayer shortcut_conv;
    BatchNorm shortcut_bn;
    LifNeuron sn_out;

    SpdsBlock() = default;
    SpdsBlock(const SpdsConfig& cfg, Rng& rng);

    SpikeTensor forward(const Tensor& x);  // [T,B,Cin,H,W] -> [T,B,Cout,H/r,W/r]
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
    void set_probes(const std::string& stage);

    // extraction-branch operation order, for structural checks
    std::vector<std::string> layer_order() const;
};

}  // namespace snnergy
