#include "snnergy/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "snnergy/nn.hpp"
#include "snnergy/rng.hpp"

namespace snnergy {

int log_verbosity() {
    static int level = [] {
        const char* v = std::getenv("SNNERGY_LOG");
        return v ? std::atoi(v) : 0;
    }();
    return level;
}

double lr_at_step(const TrainConfig& cfg, long long step, long long total_steps,
                  long long warmup_steps) {
    SNN_CHECK(step >= 0 && step < total_steps, "lr_at_step: step out of range");
    if (step < warmup_steps) {
        return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    long long span = total_steps - 1 - warmup_steps;
    double progress = span <= 0 ? 1.0
                                : static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    progress = std::min(1.0, progress);
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

void AdamW::attach(const ParamList& params) {
    slots_.clear();
    for (const auto& p : params) {
        if (!p.trainable) continue;
        Slot s;
        s.param = p.tensor;
        s.m.assign(static_cast<size_t>(p.tensor.numel()), 0.0f);
        s.v.assign(static_cast<size_t>(p.tensor.numel()), 0.0f);
        slots_.push_back(std::move(s));
    }
    t_ = 0;
}

void AdamW::step(double lr) {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const float shrink = static_cast<float>(1.0 - lr * cfg_.weight_decay);
    for (auto& s : slots_) {
        float* p = s.param.data();
        const Dim n = s.param.numel();
        const float* g = s.param.has_grad() ? s.param.grad().data() : nullptr;
        for (Dim i = 0; i < n; ++i) {
            float gi = g ? g[i] : 0.0f;
            s.m[static_cast<size_t>(i)] =
                static_cast<float>(b1 * s.m[static_cast<size_t>(i)] + (1.0 - b1) * gi);
            s.v[static_cast<size_t>(i)] = static_cast<float>(
                b2 * s.v[static_cast<size_t>(i)] + (1.0 - b2) * static_cast<double>(gi) * gi);
            double mhat = s.m[static_cast<size_t>(i)] / bc1;
            double vhat = s.v[static_cast<size_t>(i)] / bc2;
            // decoupled weight decay: multiplicative shrink, then the Adam update
            p[i] = shrink * p[i] - static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
}

double clip_grad_norm(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        float s = static_cast<float>(max_norm / norm);
        for (const auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            Tensor t = p.tensor;
            for (float& g : t.grad_ref()) g *= s;
        }
    }
    return norm;
}

Batch make_batch(const Dataset& ds, const std::vector<Dim>& indices, int timesteps) {
    SNN_CHECK_CONTRACT(!indices.empty(), "make_batch: empty index list");
    const Dim T_data = ds.video.dim(1);
    const Dim T = timesteps, B = static_cast<Dim>(indices.size());
    const Dim H = ds.video.dim(3), W = ds.video.dim(4);
    Batch b;
    b.video = Tensor::zeros({T, B, 3, H, W});
    b.audio = Tensor::zeros({T, B, 1, H, W});
    const Dim hw = H * W;
    for (Dim bi = 0; bi < B; ++bi) {
        Dim s = indices[static_cast<size_t>(bi)];
        SNN_CHECK_CONTRACT(s >= 0 && s < ds.size(), "make_batch: index out of range");
        b.labels.push_back(ds.labels[static_cast<size_t>(s)]);
        for (Dim t = 0; t < T; ++t) {
            Dim td = std::min(t, T_data - 1);  // replicate the last frame if the model runs longer
            const float* vsrc = ds.video.data() + ((s * T_data + td) * 3) * hw;
            float* vdst = b.video.data() + ((t * B + bi) * 3) * hw;
            std::copy(vsrc, vsrc + 3 * hw, vdst);
            const float* asrc = ds.audio.data() + (s * T_data + td) * hw;
            float* adst = b.audio.data() + (t * B + bi) * hw;
            std::copy(asrc, asrc + hw, adst);
        }
    }
    return b;
}

EvalResult evaluate_model(SnnergyModel& model, const Dataset& ds, Dim batch_size) {
    SNN_CHECK_CONTRACT(ds.size() > 0, "evaluate: empty split");
    model.set_training(false);
    const int T = model.config().timesteps;
    Dim correct = 0;
    double loss_sum = 0.0;
    Dim seen = 0;
    for (Dim start = 0; start < ds.size(); start += batch_size) {
        std::vector<Dim> idx;
        for (Dim i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
        Batch b = make_batch(ds, idx, T);
        Tensor logits = model.forward(b.video, b.audio);
        Tensor loss = cross_entropy(logits, b.labels);
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(idx.size());
        const Dim K = logits.dim(1);
        for (Dim r = 0; r < logits.dim(0); ++r) {
            const float* row = logits.data() + r * K;
            Dim best = 0;
            for (Dim k = 1; k < K; ++k)
                if (row[k] > row[best]) best = k;
            if (static_cast<int>(best) == b.labels[static_cast<size_t>(r)]) ++correct;
        }
        seen += static_cast<Dim>(idx.size());
    }
    return {static_cast<double>(correct) / static_cast<double>(seen), loss_sum / static_cast<double>(seen)};
}

Metrics train_model(SnnergyModel& model, const TrainConfig& cfg, const Dataset& train_set,
                    const Dataset& val_set) {
    cfg.validate();
    SNN_CHECK_CONTRACT(train_set.size() > 0 && val_set.size() > 0, "train: empty split");
    SNN_CHECK_SHAPE(train_set.video.dim(3) == model.config().height,
                    "train: dataset spatial size does not match model config");

    ParamList params = model.params();
    AdamW opt(cfg);
    opt.attach(params);

    const Dim S = train_set.size();
    const long long steps_per_epoch = (S + cfg.batch_size - 1) / cfg.batch_size;
    const long long total_steps = steps_per_epoch * cfg.epochs;
    const long long warmup_steps = steps_per_epoch * cfg.warmup_epochs;
    const int T = model.config().timesteps;

    // snapshot of the last epoch that finished without divergence
    std::vector<std::vector<float>> last_good;
    auto snapshot = [&]() {
        last_good.clear();
        for (auto& p : params) last_good.push_back(p.tensor.values());
    };
    auto restore = [&]() {
        for (size_t i = 0; i < params.size(); ++i) params[i].tensor.values() = last_good[i];
    };
    snapshot();

    Metrics metrics;
    long long step = 0;
    std::vector<Dim> order(static_cast<size_t>(S));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.set_training(true);
        // seeded Fisher-Yates, independent of library shuffle implementations
        Rng shuffle_rng(derive_seed(cfg.seed, 0x65706f6368ull, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        double lr_last = cfg.lr;
        for (Dim start = 0; start < S; start += cfg.batch_size) {
            std::vector<Dim> idx(order.begin() + start,
                                 order.begin() + std::min<Dim>(S, start + cfg.batch_size));
            Batch b = make_batch(train_set, idx, T);
            Tape tape;
            double loss_val;
            {
                Tape::Use use(tape);
                Tensor logits = model.forward(b.video, b.audio);
                Tensor loss = cross_entropy(logits, b.labels);
                loss_val = loss.item();
                if (!std::isfinite(loss_val)) {
                    restore();
                    if (!cfg.checkpoint_path.empty()) model.save(cfg.checkpoint_path);
                    throw TrainingDiverged(strcat_msg("loss became ", loss_val, " at step ", step,
                                                      "; last-good checkpoint restored"));
                }
                loss.backward();
            }
            tape.reset();
            clip_grad_norm(params, cfg.clip_norm);
            lr_last = lr_at_step(cfg, step, total_steps, warmup_steps);
            opt.step(lr_last);
            opt.zero_grad();
            epoch_loss += loss_val * static_cast<double>(idx.size());
            if (log_verbosity() >= 2)
                std::fprintf(stderr, "step %lld loss %.4f lr %.5f\n", step, loss_val, lr_last);
            ++step;
        }
        EvalResult val = evaluate_model(model, val_set, cfg.batch_size);
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = epoch_loss / static_cast<double>(S);
        em.val_loss = val.loss;
        em.val_top1 = val.top1;
        em.lr_last = lr_last;
        metrics.epochs.push_back(em);
        metrics.final_val_top1 = val.top1;
        metrics.final_val_loss = val.loss;
        if (log_verbosity() >= 1) {
            std::fprintf(stderr, "epoch %d train_loss %.4f val_loss %.4f val_top1 %.4f\n", epoch,
                         em.train_loss, em.val_loss, em.val_top1);
            // residual gains are unconstrained and worth watching
            for (const auto& p : params) {
                if (p.name.find(".alpha_") != std::string::npos)
                    std::fprintf(stderr, "  %s = %.4f\n", p.name.c_str(), p.tensor.data()[0]);
            }
        }
        snapshot();
        if (!cfg.checkpoint_path.empty()) model.save(cfg.checkpoint_path);
    }

    // firing snapshot on the validation set
    FiringRecorder rec;
    {
        FiringRecorder::Scope scope(rec);
        evaluate_model(model, val_set, cfg.batch_size);
    }
    metrics.firing = measure_firing_rates(rec);
    return metrics;
}

Metrics evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& ds, Dim batch_size) {
    SnnergyModel model = SnnergyModel::load(checkpoint_path);
    FiringRecorder rec;
    EvalResult r;
    {
        FiringRecorder::Scope scope(rec);
        r = evaluate_model(model, ds, batch_size);
    }
    Metrics m;
    m.final_val_top1 = r.top1;
    m.final_val_loss = r.loss;
    m.firing = measure_firing_rates(rec);
    return m;
}

std::vector<AblationRow> ablation_sweep(AblationKind kind, const std::vector<std::string>& values,
                                        const ModelConfig& base_model, const TrainConfig& base_train,
                                        const DatasetSpec& data_spec) {
    SNN_CHECK(!values.empty(), "ablation_sweep: no values");
    std::vector<AblationRow> rows;
    for (const std::string& value : values) {
        ModelConfig mc = base_model;
        DatasetSpec dspec = data_spec;
        if (kind == AblationKind::Timesteps) {
            int T = std::stoi(value);
            SNN_CHECK(T >= 1, "ablation_sweep: bad timestep value ", value);
            mc.timesteps = T;
            dspec.timesteps = T;
        } else {
            if (value == "spatial")
                mc.pathway_mode = PathwayMode::SpatialOnly;
            else if (value == "temporal")
                mc.pathway_mode = PathwayMode::TemporalOnly;
            else if (value == "spatiotemporal")
                mc.pathway_mode = PathwayMode::Spatiotemporal;
            else
                throw ConfigError("ablation_sweep: unknown pathway value: " + value);
        }
        Dataset train_set = generate_dataset(dspec, Split::Train);
        Dataset val_set = generate_dataset(dspec, Split::Val);
        SnnergyModel model(mc);
        TrainConfig tc = base_train;
        tc.checkpoint_path.clear();
        Metrics m = train_model(model, tc, train_set, val_set);
        rows.push_back({value, m.final_val_top1, m.final_val_loss});
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "value,top1,loss\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f\n", r.value.c_str(), r.top1, r.loss);
        out += buf;
    }
    return out;
}

}  // namespace snnergy
