#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnergy/lif.hpp"
#include "snnergy/model.hpp"

namespace snnergy {

// ---- analytic complexity table ----

struct StageCost {
    Dim tokens = 0;    // N
    Dim channels = 0;  // C
    double cmqka_mops = 0;  // N*C^2, millions, one decimal
    double ssa_mops = 0;    // N^2*C, millions, one decimal
};

struct ComplexityReport {
    std::vector<StageCost> stages;
    std::vector<AttentionKind> hybrid_kinds;
    // Totals follow the printed-table convention: sums of the one-decimal
    // per-stage values.
    double hybrid_total = 0;
    double all_cmqka_total = 0;
    double all_ssa_total = 0;
};

ComplexityReport complexity_table(const std::vector<std::pair<Dim, Dim>>& stages,
                                  const std::vector<AttentionKind>& hybrid_kinds);

// Reference table for 128x128 inputs at base dims 192 and 96.
struct PaperTable {
    std::vector<std::pair<Dim, Dim>> stages;
    std::vector<AttentionKind> kinds;
    std::vector<double> cmqka_cells, ssa_cells;  // per stage
    double hybrid_total, all_cmqka_total, all_ssa_total;
};
const PaperTable& paper_table_base192();
const PaperTable& paper_table_base96();

// true when every cell and total of `r` matches `expected` at one decimal
bool matches_paper_table(const ComplexityReport& r, const PaperTable& expected);
std::string render_complexity_table(const ComplexityReport& r);

// ---- energy model ----

constexpr double kEnergyAcPj = 0.9;   // accumulate, 45 nm
constexpr double kEnergyMacPj = 4.6;  // multiply-accumulate, 45 nm

struct EnergyLayer {
    std::string name;
    double macs = 0;   // ANN-equivalent MACs for one timestep
    double rate = 0;   // input firing rate in [0,1]
    double sop = 0;    // rate * T * macs
};

struct EnergyReport {
    std::vector<EnergyLayer> layers;
    int timesteps = 1;
    double total_sop = 0;
    double total_macs = 0;
    double energy_snn_pj = 0;
    double energy_ann_pj = 0;
    double ratio = 0;  // ann / snn
};

EnergyReport energy_estimate(const std::vector<EnergyLayer>& layers, int timesteps);
std::string render_energy_report(const EnergyReport& r);

// ---- firing rates ----

struct FiringRateStats {
    std::map<ProbeKey, double> rates;
};

FiringRateStats measure_firing_rates(const FiringRecorder& recorder);
std::string render_firing_rates(const FiringRateStats& s);

// ---- instrumented scaling benchmark ----

enum class BenchKind { Cmqka, Ssa };

struct BenchPoint {
    BenchKind kind;
    Dim tokens = 0;
    Dim channels = 0;
    uint64_t ops = 0;              // dominant-term counter
    uint64_t ops_total = 0;        // everything the forward executed
    uint64_t wall_ns_median = 0;
    uint64_t peak_bytes = 0;       // largest attention-scope buffer
    bool variance_flagged = false; // spread over 30% of the median
};

// Runs isolated forward blocks at each N with fresh counters, an allocation
// audit and a monotonic timer. N must be a perfect square for CMQKA.
std::vector<BenchPoint> scaling_bench(BenchKind kind, const std::vector<Dim>& tokens_list,
                                      Dim channels, int repeats, uint64_t seed = 1);

double loglog_slope(const std::vector<BenchPoint>& points);
std::string bench_csv(const std::vector<BenchPoint>& points);

// exact analytic op counts mirroring the instrumented attention scope
uint64_t cmqka_block_attention_macs(Dim T, Dim B, Dim N, Dim C);
uint64_t cmqka_block_attention_dominant(Dim T, Dim B, Dim N, Dim C);
uint64_t ssa_core_macs(Dim T, Dim B, Dim N, Dim C);

// ---- whole-model accounting ----

// Per-layer MAC/rate assembly for a measured run; stems' encoding convs are
// assigned rate 1.0 (analog input).
std::vector<EnergyLayer> model_energy_layers(SnnergyModel& model, const FiringRateStats& rates);

}  // namespace snnergy
