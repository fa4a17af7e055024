#include "snnergy/spds.hpp"

#include "snnergy/counters.hpp"

namespace snnergy {

SpdsBlock::SpdsBlock(const SpdsConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const Dim cin = cfg.in_channels, cout = cfg.out_channels;
    if (cfg.reduction == 4) {
        Dim mid = cout / 2;
        SNN_CHECK_CONTRACT(mid >= 1, "SpdsBlock: out_channels too small for a 4x stem");
        conv1 = Conv2dLayer(cin, mid, 3, 1, rng);
        bn1 = BatchNorm(mid);
        sn1 = LifNeuron(cfg.lif);
        conv2.emplace(mid, cout, 3, 1, rng);
        bn2.emplace(cout);
        sn2.emplace(cfg.lif);
        shortcut_conv = Conv2dLayer(mid, cout, 1, 2, rng);
    } else {
        conv1 = Conv2dLayer(cin, cout, 3, 1, rng);
        bn1 = BatchNorm(cout);
        sn1 = LifNeuron(cfg.lif);
        shortcut_conv = Conv2dLayer(cin, cout, 1, 2, rng);
    }
    refine_conv = Conv2dLayer(cout, cout, 3, 1, rng);
    refine_bn = BatchNorm(cout);
    shortcut_bn = BatchNorm(cout);
    sn_out = LifNeuron(cfg.lif);
}

SpikeTensor SpdsBlock::forward(const Tensor& x) {
    prof::CatScope cat(prof::Cat::Conv);
    SNN_CHECK_SHAPE(x.rank() == 5 && x.dim(2) == cfg.in_channels, "spds_forward: want [T,B,",
                    cfg.in_channels, ",H,W], got ", shape_str(x.shape()));
    const Dim H = x.dim(3), W = x.dim(4);
    SNN_CHECK_SHAPE(H % cfg.reduction == 0 && W % cfg.reduction == 0, "spds_forward: spatial ",
                    H, "x", W, " not divisible by reduction ", cfg.reduction);

    Tensor x1 = sn1.forward_time_major(maxpool2d(bn1.forward(conv1.forward(x), 2)));
    Tensor ext, sc;
    if (cfg.reduction == 4) {
        Tensor x2 = sn2->forward_time_major(maxpool2d(bn2->forward(conv2->forward(x1), 2)));
        ext = refine_bn.forward(refine_conv.forward(x2), 2);
        sc = shortcut_bn.forward(shortcut_conv.forward(x1), 2);
    } else {
        ext = refine_bn.forward(refine_conv.forward(x1), 2);
        sc = shortcut_bn.forward(shortcut_conv.forward(x), 2);
    }
    return SpikeTensor(sn_out.forward_time_major(add(ext, sc)));
}

void SpdsBlock::collect(ParamList& out, const std::string& prefix) {
    conv1.collect(out, prefix + ".conv1");
    bn1.collect(out, prefix + ".bn1");
    if (conv2) {
        conv2->collect(out, prefix + ".conv2");
        bn2->collect(out, prefix + ".bn2");
    }
    refine_conv.collect(out, prefix + ".refine_conv");
    refine_bn.collect(out, prefix + ".refine_bn");
    shortcut_conv.collect(out, prefix + ".shortcut_conv");
    shortcut_bn.collect(out, prefix + ".shortcut_bn");
}

void SpdsBlock::set_training(bool on) {
    bn1.set_training(on);
    if (bn2) bn2->set_training(on);
    refine_bn.set_training(on);
    shortcut_bn.set_training(on);
}

void SpdsBlock::set_probes(const std::string& stage) {
    sn1.set_probe({stage, -1, "Down1"});
    if (sn2) sn2->set_probe({stage, -1, "Down2"});
    sn_out.set_probe({stage, -1, "Out"});
}

std::vector<std::string> SpdsBlock::layer_order() const {
    std::vector<std::string> order = {"conv", "bn", "maxpool", "lif"};
    if (conv2) {
        order.insert(order.end(), {"conv", "bn", "maxpool", "lif"});
    }
    order.insert(order.end(), {"conv", "bn", "add_shortcut", "lif"});
    return order;
}

}  // namespace snnergy
