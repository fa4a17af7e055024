#include "snnergy/lif.hpp"

#include <cmath>

#include "snnergy/counters.hpp"

namespace snnergy {

void LifParams::validate() const {
    SNN_CHECK_CONTRACT(tau > 1.0f, "LifParams: tau must exceed 1 so decay = 1/tau lies in (0,1), got ", tau);
    SNN_CHECK_CONTRACT(v_threshold > 0.0f, "LifParams: v_threshold must be positive");
    SNN_CHECK_CONTRACT(surrogate_slope > 0.0f, "LifParams: surrogate_slope must be positive");
}

namespace {
thread_local SpikeMode g_mode = SpikeMode::Binary;
thread_local bool g_checks = true;
thread_local bool g_verify = false;
thread_local uint64_t g_verify_count = 0;
thread_local FiringRecorder* g_recorder = nullptr;

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }
}  // namespace

SpikeMode spike_mode() { return g_mode; }
void set_spike_mode(SpikeMode m) { g_mode = m; }

SmoothedSpikeGuard::SmoothedSpikeGuard() : prev_(g_mode), checks_prev_(g_checks) {
    g_mode = SpikeMode::Smoothed;
    g_checks = false;
}
SmoothedSpikeGuard::~SmoothedSpikeGuard() {
    g_mode = prev_;
    g_checks = checks_prev_;
}

bool spike_checks_enabled() { return g_checks; }
void set_spike_checks(bool on) { g_checks = on; }

void set_spike_verification(bool on) {
    g_verify = on;
    if (on) g_verify_count = 0;
}
uint64_t spike_verification_count() { return g_verify_count; }

bool is_binary(const Tensor& t) {
    const float* p = t.data();
    for (Dim i = 0; i < t.numel(); ++i) {
        if (p[i] != 0.0f && p[i] != 1.0f) return false;
    }
    return true;
}

SpikeTensor::SpikeTensor(Tensor v) : t(std::move(v)) {
    if (g_checks) {
        SNN_CHECK_CONTRACT(is_binary(t), "SpikeTensor: non-binary element present");
    }
}

Tensor surrogate_grad(const Tensor& v_minus_th, float slope) {
    SNN_CHECK_CONTRACT(slope > 0.0f, "surrogate_grad: slope must be positive");
    Tensor out = Tensor::zeros(v_minus_th.shape());
    const float* p = v_minus_th.data();
    float* o = out.data();
    for (Dim i = 0; i < v_minus_th.numel(); ++i) {
        float s = sigmoidf(slope * p[i]);
        o[i] = slope * s * (1.0f - s);
    }
    return out;
}

Tensor spike(const Tensor& membrane, const LifParams& params) {
    Tensor out = Tensor::zeros(membrane.shape());
    Dim n = membrane.numel();
    prof::add_ops(static_cast<uint64_t>(n));
    const float* pv = membrane.data();
    float* po = out.data();
    const float th = params.v_threshold;
    const float k = params.surrogate_slope;
    if (g_mode == SpikeMode::Binary) {
        for (Dim i = 0; i < n; ++i) po[i] = pv[i] >= th ? 1.0f : 0.0f;
    } else {
        for (Dim i = 0; i < n; ++i) po[i] = sigmoidf(k * (pv[i] - th));
    }
    if (grad::tracking({&membrane})) {
        auto iv = membrane.impl(), io = out.impl();
        grad::record(out, [iv, io, th, k]() {
            if (io->grad.empty()) return;
            std::vector<float> g(io->grad.size());
            const float* pv = iv->data.data();
            for (size_t i = 0; i < g.size(); ++i) {
                float s = sigmoidf(k * (pv[i] - th));
                g[static_cast<size_t>(i)] = io->grad[i] * k * s * (1.0f - s);
            }
            grad::accum(*iv, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

std::pair<LifState, Tensor> lif_step(const LifState& state, const Tensor& input_current,
                                     const LifParams& params) {
    // neuron state updates are not synaptic MACs; keep them out of the
    // attention/projection counters
    prof::CatScope cat(prof::Cat::Other);
    Tensor v;
    if (state.defined()) {
        SNN_CHECK_SHAPE(same_shape(state.membrane.shape(), input_current.shape()),
                        "lif_step: state shape ", shape_str(state.membrane.shape()),
                        " does not match input shape ", shape_str(input_current.shape()));
        Tensor keep = params.detach_reset ? rsub_const(1.0f, state.last_spike.detached())
                                          : rsub_const(1.0f, state.last_spike);
        Tensor leak = scale(hadamard(state.membrane, keep), params.decay());
        v = add(leak, input_current);
    } else {
        v = input_current;  // fresh zero state: V = x
    }
    Tensor s = spike(v, params);
    return {LifState{v, s}, s};
}

std::vector<Tensor> lif_forward_seq(const std::vector<Tensor>& inputs, const LifParams& params) {
    SNN_CHECK_CONTRACT(!inputs.empty(), "lif_forward_seq: empty input sequence");
    LifState state;
    std::vector<Tensor> spikes;
    spikes.reserve(inputs.size());
    for (const Tensor& x : inputs) {
        auto [next, s] = lif_step(state, x, params);
        state = next;
        spikes.push_back(s);
    }
    return spikes;
}

// ---- FiringRecorder ----

std::string ProbeKey::str() const {
    std::string s = stage;
    if (block >= 0) s += ".b" + std::to_string(block);
    if (!role.empty()) s += "." + role;
    return s;
}

FiringRecorder* FiringRecorder::active() { return g_recorder; }

FiringRecorder::Scope::Scope(FiringRecorder& r) : prev_(g_recorder) { g_recorder = &r; }
FiringRecorder::Scope::~Scope() { g_recorder = prev_; }

void FiringRecorder::record(const ProbeKey& key, const Tensor& spikes) {
    double s = 0.0;
    const float* p = spikes.data();
    for (Dim i = 0; i < spikes.numel(); ++i) s += p[i];
    auto& a = acc_[key];
    a.sum += s;
    a.count += static_cast<double>(spikes.numel());
}

std::map<ProbeKey, double> FiringRecorder::rates() const {
    std::map<ProbeKey, double> out;
    for (const auto& [k, a] : acc_) out[k] = a.count > 0 ? a.sum / a.count : 0.0;
    return out;
}

void FiringRecorder::reset() { acc_.clear(); }

// ---- LifNeuron ----

Tensor LifNeuron::step(const Tensor& input_current) {
    auto [next, s] = lif_step(state_, input_current, params_);
    state_ = next;
    if (g_verify) {
        SNN_CHECK_CONTRACT(is_binary(s), "spike verification: non-binary neuron output");
        ++g_verify_count;
    }
    if (has_probe_ && g_recorder) g_recorder->record(probe_, s);
    return s;
}

Tensor LifNeuron::forward_time_major(const Tensor& x) {
    SNN_CHECK_SHAPE(x.rank() >= 2, "LifNeuron: time-major input needs rank >= 2, got ",
                    shape_str(x.shape()));
    reset_state();
    Dim T = x.dim(0);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(T));
    for (Dim t = 0; t < T; ++t) outs.push_back(step(select0(x, t)));
    return stack0(outs);
}

}  // namespace snnergy
