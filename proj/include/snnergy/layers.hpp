#pragma once

#include <string>
#include <vector>

#include "snnergy/lif.hpp"
#include "snnergy/nn.hpp"
#include "snnergy/rng.hpp"
#include "snnergy/tensor.hpp"

namespace snnergy {

// Named parameter/buffer handle for optimizers and checkpoints.
struct ParamRef {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};
using ParamList = std::vector<ParamRef>;

class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(Dim in_ch, Dim out_ch, int kernel, int stride, Rng& rng);

    Tensor forward(const Tensor& x) const { return conv2d(x, weight_, stride_); }
    void collect(ParamList& out, const std::string& prefix);
    Tensor& weight() { return weight_; }
    int kernel() const { return kernel_; }
    Dim in_channels() const { return in_ch_; }
    Dim out_channels() const { return out_ch_; }
    uint64_t macs_per_sample(Dim h_out, Dim w_out) const {
        return static_cast<uint64_t>(out_ch_ * in_ch_ * kernel_ * kernel_ * h_out * w_out);
    }

private:
    Dim in_ch_ = 0, out_ch_ = 0;
    int kernel_ = 1, stride_ = 1;
    Tensor weight_;
};

class Conv1dLayer {
public:
    Conv1dLayer() = default;
    Conv1dLayer(Dim in_ch, Dim out_ch, int kernel, Rng& rng);

    Tensor forward(const Tensor& x) const { return conv1d(x, weight_); }
    void collect(ParamList& out, const std::string& prefix);
    Tensor& weight() { return weight_; }
    Dim out_channels() const { return out_ch_; }
    uint64_t macs_per_token() const { return static_cast<uint64_t>(out_ch_ * in_ch_ * kernel_); }

private:
    Dim in_ch_ = 0, out_ch_ = 0;
    int kernel_ = 1;
    Tensor weight_;
};

class BatchNorm {
public:
    BatchNorm() = default;
    explicit BatchNorm(Dim channels);

    Tensor forward(const Tensor& x, int c_axis = 2) {
        return batchnorm(x, buf_, c_axis, training_, track_running_);
    }
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }
    void set_track_running(bool on) { track_running_ = on; }
    BnBuffers& buffers() { return buf_; }

private:
    BnBuffers buf_;
    bool training_ = true;
    bool track_running_ = true;
};

class Linear {
public:
    Linear() = default;
    Linear(Dim in_features, Dim out_features, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [B, in] -> [B, out]
    void collect(ParamList& out, const std::string& prefix);
    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }
    uint64_t macs_per_sample() const { return static_cast<uint64_t>(in_f_ * out_f_); }

private:
    Dim in_f_ = 0, out_f_ = 0;
    Tensor weight_;  // [in, out]
    Tensor bias_;    // [out]
};

// Two pointwise-conv layers with BN and LIF after each:
// SN(BN(W2 * SN(BN(W1 * x)))); channel count preserved, hidden = ratio * C.
class SpikingMlp {
public:
    SpikingMlp() = default;
    SpikingMlp(Dim channels, int ratio, const LifParams& lif, Rng& rng);

    // x: spike train [T, B, C, N]
    Tensor forward(const Tensor& x);
    void collect(ParamList& out, const std::string& prefix);
    void set_training(bool on);
    void set_probes(const std::string& stage, int block, const std::string& role_prefix);
    Dim channels() const { return channels_; }
    int ratio() const { return ratio_; }
    uint64_t macs_per_token() const {
        return fc1_.macs_per_token() + fc2_.macs_per_token();
    }

private:
    Dim channels_ = 0;
    int ratio_ = 4;
    Conv1dLayer fc1_, fc2_;
    BatchNorm bn1_, bn2_;
    LifNeuron sn1_, sn2_;
};

}  // namespace snnergy
