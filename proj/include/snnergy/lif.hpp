#pragma once

#include <map>
#include <string>
#include <vector>

#include "snnergy/tensor.hpp"

namespace snnergy {

struct LifParams {
    float v_threshold = 0.6f;
    float tau = 2.0f;             // decay applied in the recursion is 1/tau
    float surrogate_slope = 4.0f;
    bool detach_reset = true;     // (1 - S_prev) treated as constant in backward

    float decay() const { return 1.0f / tau; }
    void validate() const;
};

// Backward pass always uses the scaled logistic derivative. In Smoothed mode
// the forward emits the logistic itself instead of the Heaviside step; used by
// gradient checks so finite differences see a differentiable function.
enum class SpikeMode { Binary, Smoothed };
SpikeMode spike_mode();
void set_spike_mode(SpikeMode m);

class SmoothedSpikeGuard {
public:
    SmoothedSpikeGuard();
    ~SmoothedSpikeGuard();
private:
    SpikeMode prev_;
    bool checks_prev_;
};

// Binarity assertions on SpikeTensor construction (test/debug tool).
bool spike_checks_enabled();
void set_spike_checks(bool on);

// When enabled, every LifNeuron::step output is scanned for exact binarity
// (throws on violation) and counted; covers all neurons of a forward pass.
void set_spike_verification(bool on);
uint64_t spike_verification_count();

// Tensor whose elements are all exactly 0 or 1.
struct SpikeTensor {
    Tensor t;

    SpikeTensor() = default;
    explicit SpikeTensor(Tensor v);

    const Shape& shape() const { return t.shape(); }
    bool defined() const { return t.defined(); }
};

bool is_binary(const Tensor& t);

// dS/dV stand-in: k * sigmoid(k*x) * (1 - sigmoid(k*x)), x = V - V_th.
Tensor surrogate_grad(const Tensor& v_minus_th, float slope);

// Heaviside(V - V_th) with surrogate backward (autodiff op).
Tensor spike(const Tensor& membrane, const LifParams& params);

struct LifState {
    Tensor membrane;
    Tensor last_spike;
    bool defined() const { return membrane.defined(); }
};

// One membrane update: V = decay * V_prev * (1 - S_prev) + input; S = H(V - th).
std::pair<LifState, Tensor> lif_step(const LifState& state, const Tensor& input_current,
                                     const LifParams& params);

// Iterated lif_step from a fresh zero state.
std::vector<Tensor> lif_forward_seq(const std::vector<Tensor>& inputs, const LifParams& params);

// ---- firing-rate instrumentation ----

struct ProbeKey {
    std::string stage;  // "stem", "stage1", ...
    int block = -1;
    std::string role;   // "Q", "K", "Attn", "MLP1", "MLP2", ...

    std::string str() const;
    bool operator<(const ProbeKey& o) const {
        if (stage != o.stage) return stage < o.stage;
        if (block != o.block) return block < o.block;
        return role < o.role;
    }
};

class FiringRecorder {
public:
    void record(const ProbeKey& key, const Tensor& spikes);
    // mean spike fraction per key
    std::map<ProbeKey, double> rates() const;
    void reset();

    static FiringRecorder* active();
    class Scope {
    public:
        explicit Scope(FiringRecorder& r);
        ~Scope();
    private:
        FiringRecorder* prev_;
    };

private:
    struct Acc {
        double sum = 0.0;
        double count = 0.0;
    };
    std::map<ProbeKey, Acc> acc_;
};

// Stateful neuron layer: the membrane persists across the T loop of one
// forward pass and is reset at the start of the next.
class LifNeuron {
public:
    LifNeuron() = default;
    explicit LifNeuron(LifParams p) : params_(p) {}

    void set_params(const LifParams& p) { params_ = p; }
    const LifParams& params() const { return params_; }
    void set_probe(ProbeKey key) { probe_ = std::move(key); has_probe_ = true; }

    void reset_state() { state_ = LifState{}; }

    // Single timestep. Input shape must stay constant between resets.
    Tensor step(const Tensor& input_current);

    // x is [T, ...]; runs the T loop with a fresh state and restacks.
    Tensor forward_time_major(const Tensor& x);

private:
    LifParams params_;
    LifState state_;
    ProbeKey probe_;
    bool has_probe_ = false;
};

}  // namespace snnergy
