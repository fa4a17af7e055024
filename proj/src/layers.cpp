#include "snnergy/layers.hpp"

#include <cmath>

#include "snnergy/counters.hpp"

namespace snnergy {

namespace {
Tensor kaiming_uniform(Shape shape, Dim fan_in, Rng& rng) {
    float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    Tensor t = Tensor::zeros(shape);
    float* p = t.data();
    for (Dim i = 0; i < t.numel(); ++i) p[i] = rng.uniform(-bound, bound);
    t.set_requires_grad(true);
    return t;
}
}  // namespace

Conv2dLayer::Conv2dLayer(Dim in_ch, Dim out_ch, int kernel, int stride, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride) {
    weight_ = kaiming_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng);
}

void Conv2dLayer::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight_, true});
}

Conv1dLayer::Conv1dLayer(Dim in_ch, Dim out_ch, int kernel, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel) {
    weight_ = kaiming_uniform({out_ch, in_ch, kernel}, in_ch * kernel, rng);
}

void Conv1dLayer::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight_, true});
}

BatchNorm::BatchNorm(Dim channels) {
    buf_.gamma = Tensor::full({channels}, 1.0f);
    buf_.gamma.set_requires_grad(true);
    buf_.beta = Tensor::zeros({channels});
    buf_.beta.set_requires_grad(true);
    buf_.running_mean = Tensor::zeros({channels});
    buf_.running_var = Tensor::full({channels}, 1.0f);
}

void BatchNorm::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", buf_.gamma, true});
    out.push_back({prefix + ".beta", buf_.beta, true});
    out.push_back({prefix + ".running_mean", buf_.running_mean, false});
    out.push_back({prefix + ".running_var", buf_.running_var, false});
}

Linear::Linear(Dim in_features, Dim out_features, Rng& rng) : in_f_(in_features), out_f_(out_features) {
    weight_ = kaiming_uniform({in_features, out_features}, in_features, rng);
    bias_ = Tensor::zeros({out_features});
    bias_.set_requires_grad(true);
}

Tensor Linear::forward(const Tensor& x) const {
    SNN_CHECK_SHAPE(x.rank() == 2 && x.dim(1) == in_f_, "Linear: input ", shape_str(x.shape()),
                    " does not match in_features ", in_f_);
    Tensor y = matmul(x, weight_);
    return add(y, reshape(bias_, {1, out_f_}));
}

void Linear::collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight_, true});
    out.push_back({prefix + ".bias", bias_, true});
}

SpikingMlp::SpikingMlp(Dim channels, int ratio, const LifParams& lif, Rng& rng)
    : channels_(channels), ratio_(ratio) {
    Dim hidden = channels * ratio;
    fc1_ = Conv1dLayer(channels, hidden, 1, rng);
    fc2_ = Conv1dLayer(hidden, channels, 1, rng);
    bn1_ = BatchNorm(hidden);
    bn2_ = BatchNorm(channels);
    sn1_ = LifNeuron(lif);
    sn2_ = LifNeuron(lif);
}

Tensor SpikingMlp::forward(const Tensor& x) {
    prof::CatScope cat(prof::Cat::Mlp);
    SNN_CHECK_SHAPE(x.rank() == 4 && x.dim(2) == channels_, "SpikingMlp: want [T,B,C,N] with C=",
                    channels_, ", got ", shape_str(x.shape()));
    Tensor h = bn1_.forward(fc1_.forward(x), 2);
    Tensor s1 = sn1_.forward_time_major(h);
    Tensor h2 = bn2_.forward(fc2_.forward(s1), 2);
    return sn2_.forward_time_major(h2);
}

void SpikingMlp::collect(ParamList& out, const std::string& prefix) {
    fc1_.collect(out, prefix + ".fc1");
    bn1_.collect(out, prefix + ".bn1");
    fc2_.collect(out, prefix + ".fc2");
    bn2_.collect(out, prefix + ".bn2");
}

void SpikingMlp::set_training(bool on) {
    bn1_.set_training(on);
    bn2_.set_training(on);
}

void SpikingMlp::set_probes(const std::string& stage, int block, const std::string& role_prefix) {
    sn1_.set_probe({stage, block, role_prefix + "MLP1"});
    sn2_.set_probe({stage, block, role_prefix + "MLP2"});
}

}  // namespace snnergy
