#include "snnergy/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "snnergy/counters.hpp"
#include "snnergy/rng.hpp"

namespace snnergy {

namespace {
double round1(double x) { return std::round(x * 10.0) / 10.0; }

std::string fmt1(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", x);
    return buf;
}
}  // namespace

ComplexityReport complexity_table(const std::vector<std::pair<Dim, Dim>>& stages,
                                  const std::vector<AttentionKind>& hybrid_kinds) {
    SNN_CHECK(stages.size() == hybrid_kinds.size(), "complexity_table: stage/kind count mismatch");
    ComplexityReport r;
    r.hybrid_kinds = hybrid_kinds;
    for (size_t i = 0; i < stages.size(); ++i) {
        auto [n, c] = stages[i];
        SNN_CHECK(n > 0 && c > 0, "complexity_table: N and C must be positive");
        StageCost sc;
        sc.tokens = n;
        sc.channels = c;
        sc.cmqka_mops = round1(static_cast<double>(n) * c * c / 1e6);
        sc.ssa_mops = round1(static_cast<double>(n) * n * c / 1e6);
        r.stages.push_back(sc);
        r.all_cmqka_total += sc.cmqka_mops;
        r.all_ssa_total += sc.ssa_mops;
        r.hybrid_total += hybrid_kinds[i] == AttentionKind::Cmqka ? sc.cmqka_mops : sc.ssa_mops;
    }
    r.hybrid_total = round1(r.hybrid_total);
    r.all_cmqka_total = round1(r.all_cmqka_total);
    r.all_ssa_total = round1(r.all_ssa_total);
    return r;
}

const PaperTable& paper_table_base192() {
    static const PaperTable t{
        {{1024, 192}, {256, 384}, {64, 768}},
        {AttentionKind::Cmqka, AttentionKind::Cmqka, AttentionKind::SsaCross},
        {37.7, 37.7, 37.7},
        {201.3, 25.2, 3.1},
        78.5,
        113.1,
        229.6,
    };
    return t;
}

const PaperTable& paper_table_base96() {
    static const PaperTable t{
        {{1024, 96}, {256, 192}, {64, 384}},
        {AttentionKind::Cmqka, AttentionKind::Cmqka, AttentionKind::SsaCross},
        {9.4, 9.4, 9.4},
        {100.7, 12.6, 1.6},
        20.4,
        28.2,
        114.9,
    };
    return t;
}

bool matches_paper_table(const ComplexityReport& r, const PaperTable& expected) {
    if (r.stages.size() != expected.stages.size()) return false;
    auto close = [](double a, double b) { return std::abs(a - b) < 0.05; };
    for (size_t i = 0; i < r.stages.size(); ++i) {
        if (!close(r.stages[i].cmqka_mops, expected.cmqka_cells[i])) return false;
        if (!close(r.stages[i].ssa_mops, expected.ssa_cells[i])) return false;
    }
    return close(r.hybrid_total, expected.hybrid_total) &&
           close(r.all_cmqka_total, expected.all_cmqka_total) &&
           close(r.all_ssa_total, expected.all_ssa_total);
}

std::string render_complexity_table(const ComplexityReport& r) {
    std::string out;
    out += "stage        N      C    CMQKA(Mops)   SSA(Mops)   hybrid pick\n";
    for (size_t i = 0; i < r.stages.size(); ++i) {
        const auto& s = r.stages[i];
        Dim side = static_cast<Dim>(std::llround(std::sqrt(static_cast<double>(s.tokens))));
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%zu (%lldx%lld)  %6lld %6lld %12s %11s   %s\n", i + 1,
                      static_cast<long long>(side), static_cast<long long>(side),
                      static_cast<long long>(s.tokens), static_cast<long long>(s.channels),
                      fmt1(s.cmqka_mops).c_str(), fmt1(s.ssa_mops).c_str(),
                      r.hybrid_kinds[i] == AttentionKind::Cmqka ? "cmqka" : "ssa");
        out += buf;
    }
    out += "hybrid total (Mops):    " + fmt1(r.hybrid_total) + "\n";
    out += "all-CMQKA total (Mops): " + fmt1(r.all_cmqka_total) + "\n";
    out += "all-SSA total (Mops):   " + fmt1(r.all_ssa_total) + "\n";
    return out;
}

// ---- energy ----

EnergyReport energy_estimate(const std::vector<EnergyLayer>& layers, int timesteps) {
    SNN_CHECK(timesteps >= 1, "energy_estimate: timesteps must be positive");
    EnergyReport r;
    r.timesteps = timesteps;
    for (const auto& l : layers) {
        if (!(l.rate >= 0.0 && l.rate <= 1.0))
            throw ValidationError("energy_estimate: rate of layer '" + l.name +
                                  "' outside [0,1]: " + std::to_string(l.rate));
        if (!(l.macs >= 0.0))
            throw ValidationError("energy_estimate: negative MAC count for layer '" + l.name + "'");
        EnergyLayer e = l;
        e.sop = e.rate * static_cast<double>(timesteps) * e.macs;
        r.total_sop += e.sop;
        r.total_macs += e.macs;
        r.layers.push_back(e);
    }
    r.energy_snn_pj = kEnergyAcPj * r.total_sop;
    r.energy_ann_pj = kEnergyMacPj * r.total_macs;
    r.ratio = r.energy_snn_pj > 0 ? r.energy_ann_pj / r.energy_snn_pj : 0.0;
    return r;
}

std::string render_energy_report(const EnergyReport& r) {
    std::string out;
    out += "op counts are MACs (multiply-accumulate), one timestep, batch 1; BN fused/excluded\n";
    out += "SOP = rate x T x MACs, T = " + std::to_string(r.timesteps) + "\n";
    char buf[256];
    for (const auto& l : r.layers) {
        std::snprintf(buf, sizeof(buf), "%-40s macs=%.3e rate=%.3f sop=%.3e\n", l.name.c_str(),
                      l.macs, l.rate, l.sop);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "total: sop=%.4e macs=%.4e  E_snn=%.4f uJ  E_ann=%.4f uJ  ann/snn=%.2f\n",
                  r.total_sop, r.total_macs, r.energy_snn_pj * 1e-6, r.energy_ann_pj * 1e-6,
                  r.ratio);
    out += buf;
    return out;
}

FiringRateStats measure_firing_rates(const FiringRecorder& recorder) {
    FiringRateStats s;
    s.rates = recorder.rates();
    SNN_CHECK_CONTRACT(!s.rates.empty(),
                       "measure_firing_rates: no instrumentation hooks recorded anything");
    return s;
}

std::string render_firing_rates(const FiringRateStats& s) {
    std::string out = "layer firing rates (mean spike fraction)\n";
    char buf[160];
    for (const auto& [k, v] : s.rates) {
        std::snprintf(buf, sizeof(buf), "%-32s %.4f\n", k.str().c_str(), v);
        out += buf;
    }
    return out;
}

// ---- scaling bench ----

uint64_t cmqka_block_attention_macs(Dim T, Dim B, Dim N, Dim C) {
    // 8 pointwise projections + per-pathway mask sum & select + fusion pools
    return 8ull * T * B * N * C * C + 16ull * T * B * N * C;
}

uint64_t cmqka_block_attention_dominant(Dim T, Dim B, Dim N, Dim C) {
    return 8ull * T * B * N * C * C;
}

uint64_t ssa_core_macs(Dim T, Dim B, Dim N, Dim C) {
    return 2ull * T * B * N * N * C;
}

namespace {

Tensor random_binary(Shape shape, float rate, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    float* p = t.data();
    for (Dim i = 0; i < t.numel(); ++i) p[i] = rng.uniform() < rate ? 1.0f : 0.0f;
    return t;
}

struct RunResult {
    uint64_t ops_dominant;
    uint64_t ops_total;
    uint64_t peak_bytes;
    uint64_t wall_ns;
};

RunResult run_cmqka_once(CmqkaBlock& block, const Tensor& video, const Tensor& audio) {
    prof::OpCounters counters;
    prof::AllocAudit audit;
    auto t0 = std::chrono::steady_clock::now();
    {
        prof::CounterScope cs(counters);
        prof::AuditScope as(audit);
        CmqkaOutput out = block.forward(video, audio);
        (void)out;
    }
    auto t1 = std::chrono::steady_clock::now();
    RunResult r;
    r.ops_dominant = counters.attention_scope();
    r.ops_total = counters.total();
    r.peak_bytes = std::max({audit.max_single(prof::Cat::Proj), audit.max_single(prof::Cat::Mask),
                             audit.max_single(prof::Cat::Fuse),
                             audit.max_single(prof::Cat::AttnMatmul)});
    r.wall_ns = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    return r;
}

RunResult run_ssa_once(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& scale_s,
                       LifNeuron& sn) {
    prof::OpCounters counters;
    prof::AllocAudit audit;
    auto t0 = std::chrono::steady_clock::now();
    {
        prof::CounterScope cs(counters);
        prof::AuditScope as(audit);
        Tensor out = ssa_attention_core(q, k, v, scale_s, 1, sn);
        (void)out;
    }
    auto t1 = std::chrono::steady_clock::now();
    RunResult r;
    r.ops_dominant = counters[prof::Cat::AttnMatmul];
    r.ops_total = counters.total();
    r.peak_bytes = audit.max_single(prof::Cat::AttnMatmul);
    r.wall_ns = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    return r;
}

}  // namespace

std::vector<BenchPoint> scaling_bench(BenchKind kind, const std::vector<Dim>& tokens_list,
                                      Dim channels, int repeats, uint64_t seed) {
    SNN_CHECK(tokens_list.size() >= 1, "scaling_bench: need at least one N");
    SNN_CHECK(repeats >= 1, "scaling_bench: repeats must be positive");
    for (size_t i = 1; i < tokens_list.size(); ++i)
        SNN_CHECK(tokens_list[i] > tokens_list[i - 1], "scaling_bench: N_list must ascend");

    std::vector<BenchPoint> points;
    for (Dim n : tokens_list) {
        Rng rng(derive_seed(seed, 0x62656e6368ull, static_cast<uint64_t>(n)));
        std::vector<RunResult> runs;
        if (kind == BenchKind::Cmqka) {
            Dim side = static_cast<Dim>(std::llround(std::sqrt(static_cast<double>(n))));
            SNN_CHECK(side * side == n, "scaling_bench: CMQKA needs a square token count, got ", n);
            CmqkaConfig cfg;
            cfg.channels = channels;
            cfg.heads = 1;
            Rng wr(derive_seed(seed, 0x776569676874ull, static_cast<uint64_t>(n)));
            CmqkaBlock block(cfg, wr);
            block.set_training(false);
            Tensor video = random_binary({1, 1, channels, side, side}, 0.3f, rng);
            Tensor audio = random_binary({1, 1, channels, side, side}, 0.3f, rng);
            for (int r = 0; r < repeats; ++r) runs.push_back(run_cmqka_once(block, video, audio));
        } else {
            Tensor q = random_binary({1, 1, n, channels}, 0.3f, rng);
            Tensor k = random_binary({1, 1, n, channels}, 0.3f, rng);
            Tensor v = random_binary({1, 1, n, channels}, 0.3f, rng);
            Tensor scale_s = Tensor::scalar(0.125f);
            LifNeuron sn{LifParams{}};
            for (int r = 0; r < repeats; ++r) runs.push_back(run_ssa_once(q, k, v, scale_s, sn));
        }
        std::vector<uint64_t> times;
        times.reserve(runs.size());
        for (const auto& r : runs) times.push_back(r.wall_ns);
        std::sort(times.begin(), times.end());
        uint64_t median = times[times.size() / 2];
        bool flagged = !times.empty() && median > 0 &&
                       static_cast<double>(times.back() - times.front()) > 0.3 * static_cast<double>(median);
        BenchPoint p;
        p.kind = kind;
        p.tokens = n;
        p.channels = channels;
        p.ops = runs[0].ops_dominant;
        p.ops_total = runs[0].ops_total;
        p.wall_ns_median = median;
        p.peak_bytes = runs[0].peak_bytes;
        p.variance_flagged = flagged;
        points.push_back(p);
    }
    return points;
}

double loglog_slope(const std::vector<BenchPoint>& points) {
    SNN_CHECK(points.size() >= 2, "loglog_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = static_cast<double>(points.size());
    for (const auto& p : points) {
        double x = std::log(static_cast<double>(p.tokens));
        double y = std::log(std::max<double>(1.0, static_cast<double>(p.wall_ns_median)));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string bench_csv(const std::vector<BenchPoint>& points) {
    std::string out = "kind,N,C,ops,wall_ns_median,peak_bytes\n";
    for (const auto& p : points) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%llu,%llu,%llu\n",
                      p.kind == BenchKind::Cmqka ? "cmqka" : "ssa",
                      static_cast<long long>(p.tokens), static_cast<long long>(p.channels),
                      static_cast<unsigned long long>(p.ops),
                      static_cast<unsigned long long>(p.wall_ns_median),
                      static_cast<unsigned long long>(p.peak_bytes));
        out += buf;
    }
    return out;
}

// ---- whole-model accounting ----

namespace {

double rate_of(const FiringRateStats& rates, const ProbeKey& key, double fallback) {
    auto it = rates.rates.find(key);
    return it == rates.rates.end() ? fallback : it->second;
}

void spds_layers(std::vector<EnergyLayer>& out, const FiringRateStats& rates,
                 const std::string& name, const SpdsConfig& cfg, Dim h_in, Dim w_in,
                 double input_rate) {
    const Dim cin = cfg.in_channels, cout = cfg.out_channels;
    double down1 = rate_of(rates, {name, -1, "Down1"}, 0.5);
    if (cfg.reduction == 4) {
        Dim mid = cout / 2;
        out.push_back({name + ".conv1", static_cast<double>(mid * cin * 9 * h_in * w_in), input_rate});
        out.push_back({name + ".conv2",
                       static_cast<double>(cout * mid * 9 * (h_in / 2) * (w_in / 2)), down1});
        double down2 = rate_of(rates, {name, -1, "Down2"}, 0.5);
        out.push_back({name + ".refine",
                       static_cast<double>(cout * cout * 9 * (h_in / 4) * (w_in / 4)), down2});
        out.push_back({name + ".shortcut",
                       static_cast<double>(cout * mid * (h_in / 4) * (w_in / 4)), down1});
    } else {
        out.push_back({name + ".conv1", static_cast<double>(cout * cin * 9 * h_in * w_in), input_rate});
        out.push_back({name + ".refine",
                       static_cast<double>(cout * cout * 9 * (h_in / 2) * (w_in / 2)), down1});
        out.push_back({name + ".shortcut",
                       static_cast<double>(cout * cin * (h_in / 2) * (w_in / 2)), input_rate});
    }
}

}  // namespace

std::vector<EnergyLayer> model_energy_layers(SnnergyModel& model, const FiringRateStats& rates) {
    const ModelConfig& cfg = model.config();
    std::vector<EnergyLayer> out;
    const Dim H = cfg.height, W = cfg.width;
    const Dim c1 = cfg.stages[0].channels, c2 = cfg.stages[1].channels, c3 = cfg.stages[2].channels;

    // encoding convs see analog input: rate 1.0
    spds_layers(out, rates, "stem_v", {3, c1, 4, cfg.lif}, H, W, 1.0);
    spds_layers(out, rates, "stem_a", {1, c1, 4, cfg.lif}, H, W, 1.0);

    double stem_v_out = rate_of(rates, {"stem_v", -1, "Out"}, 0.5);
    double stem_a_out = rate_of(rates, {"stem_a", -1, "Out"}, 0.5);

    auto cmqka_stage = [&](const std::string& stage, int depth, Dim n, Dim c, double in_rate) {
        for (int b = 0; b < depth; ++b) {
            double recast = rate_of(rates, {stage, b, "Recast"}, in_rate);
            double mlp_in = rate_of(rates, {stage, b, "MlpIn"}, recast);
            double mlp1 = rate_of(rates, {stage, b, "MLP1"}, recast);
            std::string base = stage + ".b" + std::to_string(b);
            // 8 directional projections (2 dirs x 2 pathways x Q,K)
            out.push_back({base + ".projections", 8.0 * static_cast<double>(n) * c * c, recast});
            out.push_back({base + ".mlp.fc1",
                           2.0 * static_cast<double>(n) * c * (cfg.mlp_ratio * c), mlp_in});
            out.push_back({base + ".mlp.fc2",
                           2.0 * static_cast<double>(n) * (cfg.mlp_ratio * c) * c, mlp1});
        }
    };

    Dim n1 = cfg.stage_tokens(1), n2 = cfg.stage_tokens(2), n3 = cfg.stage_tokens(3);
    cmqka_stage("stage1", cfg.stages[0].depth, n1, c1, 0.5 * (stem_v_out + stem_a_out));

    spds_layers(out, rates, "down2_v", {c1, c2, 2, cfg.lif}, H / 4, W / 4,
                rate_of(rates, {"stage1", -1, "RecastOut"}, stem_v_out));
    spds_layers(out, rates, "down2_a", {c1, c2, 2, cfg.lif}, H / 4, W / 4,
                rate_of(rates, {"stage1", -1, "RecastOut"}, stem_a_out));
    double down2_out = 0.5 * (rate_of(rates, {"down2_v", -1, "Out"}, 0.5) +
                              rate_of(rates, {"down2_a", -1, "Out"}, 0.5));
    cmqka_stage("stage2", cfg.stages[1].depth, n2, c2, down2_out);

    spds_layers(out, rates, "down3_v", {c2, c3, 2, cfg.lif}, H / 8, W / 8,
                rate_of(rates, {"stage2", -1, "RecastOut"}, down2_out));
    spds_layers(out, rates, "down3_a", {c2, c3, 2, cfg.lif}, H / 8, W / 8,
                rate_of(rates, {"stage2", -1, "RecastOut"}, down2_out));

    for (int b = 0; b < cfg.stages[2].depth; ++b) {
        double recast = rate_of(rates, {"stage3", b, "Recast"}, 0.5);
        double q = rate_of(rates, {"stage3", b, "Q"}, 0.5);
        double v = rate_of(rates, {"stage3", b, "V"}, 0.5);
        std::string base = "stage3.b" + std::to_string(b);
        out.push_back({base + ".projections", 6.0 * static_cast<double>(n3) * c3 * c3, recast});
        out.push_back({base + ".attn.qk", 2.0 * static_cast<double>(n3) * n3 * c3, q});
        out.push_back({base + ".attn.av", 2.0 * static_cast<double>(n3) * n3 * c3, v});
        if (cfg.stage3_mlp) {
            double mlp_in = rate_of(rates, {"stage3", b, "MlpIn"}, recast);
            double mlp1 = rate_of(rates, {"stage3", b, "MLP1"}, recast);
            out.push_back({base + ".mlp.fc1",
                           2.0 * static_cast<double>(n3) * c3 * (cfg.mlp_ratio * c3), mlp_in});
            out.push_back({base + ".mlp.fc2",
                           2.0 * static_cast<double>(n3) * (cfg.mlp_ratio * c3) * c3, mlp1});
        }
    }

    Dim feat = cfg.fusion == FusionMode::Concat ? 2 * c3 : c3;
    out.push_back({"head.classifier", static_cast<double>(feat * cfg.num_classes), 1.0});
    return out;
}

}  // namespace snnergy
