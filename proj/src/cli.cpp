#include "snnergy/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "snnergy/dataio.hpp"
#include "snnergy/model.hpp"
#include "snnergy/profiler.hpp"
#include "snnergy/train.hpp"

namespace snnergy {

namespace {

struct CliOptions {
    // shared
    uint64_t seed = 7;
    std::string config_path;
    std::string preset = "toy";
    // gen-data / synthetic data
    std::string data_dir;
    int classes = 4;
    int samples = 50;
    Dim hw = 32;
    int timesteps = 2;
    double rho = 0.9;
    double sigma = 0.25;
    // train/eval
    std::string checkpoint = "model.ckpt";
    std::string split = "val";
    std::string metrics_path;
    int epochs = 30;
    Dim batch = 16;
    double lr = 5e-3;
    double lr_min = 0.0;
    int warmup = 5;
    std::string fusion = "average";
    // profile
    std::string profile_preset = "paper-table";
    std::string out_prefix;
    // bench
    std::string kind = "both";
    std::string n_list = "64,256,1024";
    Dim bench_c = 96;
    int repeats = 3;
    std::string csv_path;
    // ablate
    std::string ablate_kind = "timesteps";
    std::string values = "1,2,4";
};

// Combined config file: {"model": {...}, "train": {...}, "data": {...}},
// every section optional. Explicitly passed flags win over file values.
struct ConfigFile {
    nlohmann::json root;
    bool loaded = false;

    bool has(const char* section) const { return loaded && root.contains(section); }
    const nlohmann::json& at(const char* section) const { return root.at(section); }
};

ConfigFile load_config_file(const std::string& path) {
    ConfigFile cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f.good()) throw ConfigError("cannot open config file: " + path);
    try {
        f >> cfg.root;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    cfg.loaded = true;
    return cfg;
}

bool flag_passed(const CLI::App* sub, const std::string& name) {
    return sub != nullptr && sub->count(name) > 0;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

DatasetSpec dataset_spec_from(const CliOptions& opt, const ConfigFile& file = {},
                              const CLI::App* sub = nullptr) {
    DatasetSpec spec;
    if (file.has("data")) spec = spec_from_json(file.at("data"));
    bool fresh = !file.has("data");
    if (fresh || flag_passed(sub, "--classes")) spec.num_classes = opt.classes;
    if (fresh || flag_passed(sub, "--samples")) spec.samples_per_class = opt.samples;
    if (fresh || flag_passed(sub, "--hw")) {
        spec.height = opt.hw;
        spec.width = opt.hw;
    }
    if (fresh || flag_passed(sub, "--timesteps")) spec.timesteps = opt.timesteps;
    if (fresh || flag_passed(sub, "--rho")) spec.correlation = static_cast<float>(opt.rho);
    if (fresh || flag_passed(sub, "--sigma")) spec.noise_sigma = static_cast<float>(opt.sigma);
    if (fresh || flag_passed(sub, "--seed")) spec.seed = opt.seed;
    spec.validate();
    return spec;
}

TrainConfig train_config_from(const CliOptions& opt, const ConfigFile& file,
                              const CLI::App* sub) {
    TrainConfig tc;
    if (file.has("train")) {
        const auto& j = file.at("train");
        tc.lr = j.value("lr", tc.lr);
        tc.lr_min = j.value("lr_min", tc.lr_min);
        tc.weight_decay = j.value("weight_decay", tc.weight_decay);
        tc.warmup_epochs = j.value("warmup_epochs", tc.warmup_epochs);
        tc.epochs = j.value("epochs", tc.epochs);
        tc.batch_size = j.value("batch_size", tc.batch_size);
        tc.clip_norm = j.value("clip_norm", tc.clip_norm);
        tc.seed = j.value("seed", tc.seed);
        tc.checkpoint_path = j.value("checkpoint_path", tc.checkpoint_path);
    }
    bool fresh = !file.has("train");
    if (fresh || flag_passed(sub, "--lr")) tc.lr = opt.lr;
    if (fresh || flag_passed(sub, "--lr-min")) tc.lr_min = opt.lr_min;
    if (fresh || flag_passed(sub, "--epochs")) tc.epochs = opt.epochs;
    if (fresh || flag_passed(sub, "--warmup")) tc.warmup_epochs = opt.warmup;
    if (fresh || flag_passed(sub, "--batch")) tc.batch_size = opt.batch;
    if (fresh || flag_passed(sub, "--seed")) tc.seed = opt.seed;
    if (fresh || flag_passed(sub, "--checkpoint")) tc.checkpoint_path = opt.checkpoint;
    tc.warmup_epochs = std::min(tc.warmup_epochs, tc.epochs);
    tc.validate();
    return tc;
}

ModelConfig model_config_from(const CliOptions& opt, const DatasetSpec& data,
                              const ConfigFile& file = {}) {
    ModelConfig cfg;
    if (file.has("model")) {
        cfg = config_from_json(file.at("model"));
    } else if (opt.preset == "toy") {
        cfg = ModelConfig::toy(data.num_classes, opt.seed);
        cfg.height = data.height;
        cfg.width = data.width;
        cfg.timesteps = data.timesteps;
    } else if (opt.preset == "paper") {
        cfg = ModelConfig::paper(data.num_classes, opt.seed);
    } else if (opt.preset == "paper96") {
        cfg = ModelConfig::preset(128, 128, 6, 96, data.num_classes, 8, opt.seed);
    } else {
        throw ConfigError("unknown preset: " + opt.preset + " (want toy|paper|paper96)");
    }
    if (opt.fusion == "concat")
        cfg.fusion = FusionMode::Concat;
    else if (opt.fusion == "average")
        cfg.fusion = FusionMode::Average;
    else
        throw ConfigError("unknown fusion mode: " + opt.fusion);
    cfg.seed = opt.seed;
    cfg.validate();
    return cfg;
}

Dataset load_or_generate(const CliOptions& opt, Split split, const ConfigFile& file,
                         const CLI::App* sub, DatasetSpec* spec_out = nullptr) {
    if (!opt.data_dir.empty() && std::filesystem::exists(std::filesystem::path(opt.data_dir) /
                                                         "manifest.json")) {
        DatasetSpec spec = load_dataset_spec(opt.data_dir);
        if (spec_out) *spec_out = spec;
        return load_dataset_split(opt.data_dir, split);
    }
    DatasetSpec spec = dataset_spec_from(opt, file, sub);
    if (spec_out) *spec_out = spec;
    return generate_dataset(spec, split);
}

int run_gen_data(const CliOptions& opt) {
    if (opt.data_dir.empty()) throw ConfigError("gen-data: --out is required");
    DatasetSpec spec = dataset_spec_from(opt);
    write_dataset_dir(opt.data_dir, spec);
    std::cout << "wrote dataset to " << opt.data_dir << " (classes=" << spec.num_classes
              << ", train=" << spec.num_classes * spec.samples_per_class << " samples)\n";
    return 0;
}

int run_train(const CliOptions& opt, const CLI::App* sub) {
    ConfigFile file = load_config_file(opt.config_path);
    DatasetSpec spec;
    Dataset train_set = load_or_generate(opt, Split::Train, file, sub, &spec);
    Dataset val_set = load_or_generate(opt, Split::Val, file, sub);
    ModelConfig mc = model_config_from(opt, spec, file);
    TrainConfig tc = train_config_from(opt, file, sub);

    SnnergyModel model(mc);
    std::cout << "training: " << model.trainable_param_count() << " parameters, "
              << train_set.size() << " train / " << val_set.size() << " val samples\n";
    Metrics m = train_model(model, tc, train_set, val_set);
    std::string csv = "epoch,train_loss,val_loss,val_top1,lr\n";
    for (const auto& e : m.epochs) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%.4f,%.6f\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_top1, e.lr_last);
        csv += buf;
    }
    std::cout << csv;
    if (!opt.metrics_path.empty()) {
        std::ofstream f(opt.metrics_path);
        f << csv;
    }
    std::cout << "final val top1 " << m.final_val_top1 << ", checkpoint " << tc.checkpoint_path
              << "\n";
    return 0;
}

int run_eval(const CliOptions& opt, const CLI::App* sub) {
    ConfigFile file = load_config_file(opt.config_path);
    Split split = opt.split == "train"  ? Split::Train
                  : opt.split == "val"  ? Split::Val
                  : opt.split == "test" ? Split::Test
                                        : throw ConfigError("unknown split: " + opt.split);
    Dataset ds = load_or_generate(opt, split, file, sub);
    Metrics m = evaluate_checkpoint(opt.checkpoint, ds, opt.batch);
    std::cout << "split=" << opt.split << " top1=" << m.final_val_top1
              << " loss=" << m.final_val_loss << "\n";
    std::cout << render_firing_rates(m.firing);
    return 0;
}

void write_report(const std::string& prefix, const std::string& text, const nlohmann::json& j) {
    if (prefix.empty()) return;
    std::ofstream t(prefix + ".txt");
    t << text;
    std::ofstream m(prefix + ".json");
    m << j.dump(2) << "\n";
}

int run_profile(const CliOptions& opt) {
    if (opt.profile_preset == "paper-table") {
        bool all_match = true;
        nlohmann::json jout;
        std::string text;
        for (const PaperTable* table : {&paper_table_base192(), &paper_table_base96()}) {
            ComplexityReport r = complexity_table(table->stages, table->kinds);
            bool match = matches_paper_table(r, *table);
            all_match = all_match && match;
            text += render_complexity_table(r);
            text += std::string("reference diff: ") + (match ? "exact match" : "MISMATCH") + "\n\n";
            nlohmann::json jt;
            for (const auto& s : r.stages)
                jt["stages"].push_back({{"N", s.tokens},
                                        {"C", s.channels},
                                        {"cmqka_mops", s.cmqka_mops},
                                        {"ssa_mops", s.ssa_mops}});
            jt["hybrid_total"] = r.hybrid_total;
            jt["all_cmqka_total"] = r.all_cmqka_total;
            jt["all_ssa_total"] = r.all_ssa_total;
            jt["matches_reference"] = match;
            jout.push_back(jt);
        }
        std::cout << text;
        write_report(opt.out_prefix, text, jout);
        return all_match ? 0 : 1;
    }
    if (opt.profile_preset == "energy") {
        ConfigFile file = load_config_file(opt.config_path);
        DatasetSpec spec = dataset_spec_from(opt);
        ModelConfig mc = model_config_from(opt, spec, file);
        SnnergyModel model(mc);
        model.set_training(false);
        Dataset ds = generate_dataset(spec, Split::Val);
        FiringRecorder rec;
        {
            FiringRecorder::Scope scope(rec);
            std::vector<Dim> idx;
            for (Dim i = 0; i < std::min<Dim>(ds.size(), opt.batch); ++i) idx.push_back(i);
            Batch b = make_batch(ds, idx, mc.timesteps);
            model.forward(b.video, b.audio);
        }
        FiringRateStats rates = measure_firing_rates(rec);
        EnergyReport er = energy_estimate(model_energy_layers(model, rates), mc.timesteps);
        std::string text = render_energy_report(er) + "\n" + render_firing_rates(rates);
        std::cout << text;
        nlohmann::json j;
        j["timesteps"] = er.timesteps;
        j["total_sop"] = er.total_sop;
        j["total_macs"] = er.total_macs;
        j["energy_snn_pj"] = er.energy_snn_pj;
        j["energy_ann_pj"] = er.energy_ann_pj;
        j["ratio_ann_over_snn"] = er.ratio;
        for (const auto& [k, v] : rates.rates) j["rates"][k.str()] = v;
        write_report(opt.out_prefix, text, j);
        return 0;
    }
    throw ConfigError("unknown profile preset: " + opt.profile_preset + " (want paper-table|energy)");
}

int run_bench(const CliOptions& opt) {
    std::vector<Dim> ns;
    for (const auto& s : split_csv(opt.n_list)) ns.push_back(std::stoll(s));
    std::vector<BenchKind> kinds;
    if (opt.kind == "cmqka")
        kinds = {BenchKind::Cmqka};
    else if (opt.kind == "ssa")
        kinds = {BenchKind::Ssa};
    else if (opt.kind == "both")
        kinds = {BenchKind::Cmqka, BenchKind::Ssa};
    else
        throw ConfigError("unknown bench kind: " + opt.kind);

    std::string csv = "kind,N,C,ops,wall_ns_median,peak_bytes\n";
    for (BenchKind kind : kinds) {
        auto points = scaling_bench(kind, ns, opt.bench_c, opt.repeats, opt.seed);
        std::string body = bench_csv(points);
        csv += body.substr(body.find('\n') + 1);  // drop the repeated header
        if (points.size() >= 2) {
            std::printf("%s log-log wall-time slope: %.3f\n",
                        kind == BenchKind::Cmqka ? "cmqka" : "ssa", loglog_slope(points));
        }
        for (const auto& p : points) {
            if (p.variance_flagged)
                std::printf("note: timing variance above 30%% at N=%lld\n",
                            static_cast<long long>(p.tokens));
        }
    }
    std::cout << csv;
    if (!opt.csv_path.empty()) {
        std::ofstream f(opt.csv_path);
        f << csv;
    }
    return 0;
}

int run_ablate(const CliOptions& opt, const CLI::App* sub) {
    ConfigFile file = load_config_file(opt.config_path);
    AblationKind kind;
    if (opt.ablate_kind == "timesteps")
        kind = AblationKind::Timesteps;
    else if (opt.ablate_kind == "pathway")
        kind = AblationKind::Pathway;
    else
        throw ConfigError("unknown ablation kind: " + opt.ablate_kind);
    DatasetSpec spec = dataset_spec_from(opt, file, sub);
    ModelConfig mc = model_config_from(opt, spec, file);
    TrainConfig tc = train_config_from(opt, file, sub);
    tc.checkpoint_path.clear();
    auto rows = ablation_sweep(kind, split_csv(opt.values), mc, tc, spec);
    std::string csv = ablation_csv(rows);
    std::cout << csv;
    if (!opt.csv_path.empty()) {
        std::ofstream f(opt.csv_path);
        f << csv;
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"SNNergy: hierarchical audio-visual spiking transformer with linear cross-modal attention"};
    app.require_subcommand(1);
    CliOptions opt;

    auto add_data_flags = [&](CLI::App* sub) {
        sub->add_option("--classes", opt.classes, "number of classes");
        sub->add_option("--samples", opt.samples, "train samples per class");
        sub->add_option("--hw", opt.hw, "spatial size (square)");
        sub->add_option("--timesteps", opt.timesteps, "encoding timesteps");
        sub->add_option("--rho", opt.rho, "cross-modal correlation in [0,1]");
        sub->add_option("--sigma", opt.sigma, "noise level");
        sub->add_option("--seed", opt.seed, "RNG seed");
    };
    auto add_model_flags = [&](CLI::App* sub) {
        sub->add_option("--preset", opt.preset, "model preset: toy|paper|paper96");
        sub->add_option("--config", opt.config_path,
                        "JSON config file with optional model/train/data sections");
        sub->add_option("--fusion", opt.fusion, "head fusion: average|concat");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic audio-visual dataset");
    gen->add_option("--out", opt.data_dir, "output directory")->required();
    add_data_flags(gen);

    CLI::App* train = app.add_subcommand("train", "train a model with BPTT");
    train->add_option("--data", opt.data_dir, "dataset directory (generated on the fly if absent)");
    add_data_flags(train);
    add_model_flags(train);
    train->add_option("--epochs", opt.epochs, "training epochs");
    train->add_option("--batch", opt.batch, "batch size");
    train->add_option("--lr", opt.lr, "peak learning rate");
    train->add_option("--lr-min", opt.lr_min, "cosine floor learning rate");
    train->add_option("--warmup", opt.warmup, "warmup epochs");
    train->add_option("--checkpoint", opt.checkpoint, "checkpoint output path");
    train->add_option("--metrics", opt.metrics_path, "metrics CSV output path");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--data", opt.data_dir, "dataset directory");
    eval_cmd->add_option("--split", opt.split, "split: train|val|test");
    eval_cmd->add_option("--batch", opt.batch, "batch size");
    add_data_flags(eval_cmd);

    CLI::App* profile = app.add_subcommand("profile", "complexity and energy tables");
    profile->add_option("--preset", opt.profile_preset, "paper-table|energy");
    profile->add_option("--out", opt.out_prefix, "report file prefix (.txt/.json)");
    profile->add_option("--batch", opt.batch, "batch size for the energy preset");
    add_data_flags(profile);
    profile->add_option("--model-preset", opt.preset, "model preset: toy|paper|paper96");
    profile->add_option("--config", opt.config_path,
                        "JSON config file with an optional model section");
    profile->add_option("--fusion", opt.fusion, "head fusion: average|concat");

    CLI::App* bench = app.add_subcommand("bench", "instrumented scaling sweep");
    bench->add_option("--kind", opt.kind, "cmqka|ssa|both");
    bench->add_option("--n", opt.n_list, "comma-separated token counts");
    bench->add_option("--c", opt.bench_c, "channel count");
    bench->add_option("--repeats", opt.repeats, "repeats per point");
    bench->add_option("--csv", opt.csv_path, "CSV output path");
    bench->add_option("--seed", opt.seed, "RNG seed");

    CLI::App* ablate = app.add_subcommand("ablate", "train ablation variants");
    ablate->add_option("--kind", opt.ablate_kind, "timesteps|pathway");
    ablate->add_option("--values", opt.values, "comma-separated sweep values");
    add_data_flags(ablate);
    add_model_flags(ablate);
    ablate->add_option("--epochs", opt.epochs, "epochs per variant");
    ablate->add_option("--batch", opt.batch, "batch size");
    ablate->add_option("--lr", opt.lr, "peak learning rate");
    ablate->add_option("--lr-min", opt.lr_min, "cosine floor learning rate");
    ablate->add_option("--warmup", opt.warmup, "warmup epochs");
    ablate->add_option("--csv", opt.csv_path, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(opt);
        if (train->parsed()) return run_train(opt, train);
        if (eval_cmd->parsed()) return run_eval(opt, eval_cmd);
        if (profile->parsed()) return run_profile(opt);
        if (bench->parsed()) return run_bench(opt);
        if (ablate->parsed()) return run_ablate(opt, ablate);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace snnergy
