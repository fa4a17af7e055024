#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snnergy/dataio.hpp"
#include "snnergy/model.hpp"
#include "snnergy/profiler.hpp"

namespace snnergy {

struct TrainingDiverged : Error {
    explicit TrainingDiverged(const std::string& msg) : Error(msg) {}
};

// 0 silent (default), 1 per-epoch progress on stderr, 2 per-step.
// Read once from the SNNERGY_LOG environment variable.
int log_verbosity();

struct TrainConfig {
    double lr = 5e-3;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int warmup_epochs = 5;
    int epochs = 30;
    Dim batch_size = 16;
    double clip_norm = 5.0;
    uint64_t seed = 1;
    std::string checkpoint_path;

    void validate() const {
        SNN_CHECK(lr > 0.0, "TrainConfig: lr must be positive");
        SNN_CHECK(epochs >= 1 && batch_size >= 1, "TrainConfig: bad epochs/batch");
        SNN_CHECK(warmup_epochs >= 0 && warmup_epochs <= epochs,
                  "TrainConfig: warmup_epochs must not exceed epochs");
    }
};

// Linear warmup to lr, then cosine annealing to lr_min, per optimizer step.
// Warmup step s (0-based) gives lr * (s+1)/warmup_steps; the final step lands
// exactly on lr_min.
double lr_at_step(const TrainConfig& cfg, long long step, long long total_steps,
                  long long warmup_steps);

class AdamW {
public:
    explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
    void attach(const ParamList& params);  // trainable entries only
    void step(double lr);
    void zero_grad();
    long long steps_taken() const { return t_; }

private:
    struct Slot {
        Tensor param;
        std::vector<float> m, v;
    };
    TrainConfig cfg_;
    std::vector<Slot> slots_;
    long long t_ = 0;
};

// clip gradients to a global L2 norm; returns the pre-clip norm
double clip_grad_norm(const ParamList& params, double max_norm);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_top1 = 0;
    double lr_last = 0;
};

struct Metrics {
    std::vector<EpochMetrics> epochs;
    double final_val_top1 = 0;
    double final_val_loss = 0;
    double test_top1 = -1;
    FiringRateStats firing;
};

struct Batch {
    Tensor video;  // [T,B,3,H,W]
    Tensor audio;  // [T,B,1,H,W]
    std::vector<int> labels;
};

Batch make_batch(const Dataset& ds, const std::vector<Dim>& indices, int timesteps);

Metrics train_model(SnnergyModel& model, const TrainConfig& cfg, const Dataset& train_set,
                    const Dataset& val_set);

// eval-mode top-1 and mean loss; firing rates recorded when a recorder is active
struct EvalResult {
    double top1 = 0;
    double loss = 0;
};
EvalResult evaluate_model(SnnergyModel& model, const Dataset& ds, Dim batch_size);

// load checkpoint, evaluate a split, attach firing-rate snapshot
Metrics evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& ds, Dim batch_size);

// ---- ablations ----

enum class AblationKind { Timesteps, Pathway };

struct AblationRow {
    std::string value;
    double top1 = 0;
    double loss = 0;
};

// Trains one variant per value with a shared seed. Timesteps values are
// integers; pathway values are {"spatial","temporal","spatiotemporal"}.
std::vector<AblationRow> ablation_sweep(AblationKind kind, const std::vector<std::string>& values,
                                        const ModelConfig& base_model, const TrainConfig& base_train,
                                        const DatasetSpec& data_spec);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace snnergy
