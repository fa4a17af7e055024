#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "snnergy/cli.hpp"

namespace {
int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"snnergy"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return snnergy::cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("unknown flags and missing subcommands exit with code 2") {
    CHECK(run({}) == 2);
    CHECK(run({"profile", "--bogus-flag"}) == 2);
    CHECK(run({"no-such-command"}) == 2);
}

TEST_CASE("help exits cleanly") { CHECK(run({"--help"}) == 0); }

TEST_CASE("profile --preset paper-table reproduces the table and exits 0") {
    CHECK(run({"profile", "--preset", "paper-table"}) == 0);
}

TEST_CASE("profile rejects unknown presets with a config error") {
    CHECK(run({"profile", "--preset", "nonsense"}) == 2);
}

TEST_CASE("gen-data twice gives byte-identical directories") {
    namespace fs = std::filesystem;
    std::string d1 = "/tmp/snnergy_cli_ds1", d2 = "/tmp/snnergy_cli_ds2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    CHECK(run({"gen-data", "--out", d1, "--classes", "4", "--samples", "3", "--hw", "8",
               "--seed", "7"}) == 0);
    CHECK(run({"gen-data", "--out", d2, "--classes", "4", "--samples", "3", "--hw", "8",
               "--seed", "7"}) == 0);
    for (const char* split : {"train", "val", "test"})
        for (const char* file : {"video.snrg", "audio.snrg", "labels.snrg"})
            CHECK(slurp(d1 + "/" + split + "/" + file) == slurp(d2 + "/" + split + "/" + file));
    CHECK(run({"gen-data", "--classes", "4"}) == 2);  // missing --out
}

TEST_CASE("bench --kind both writes one CSV row per (kind, N)") {
    std::string csv_path = "/tmp/snnergy_cli_bench.csv";
    std::filesystem::remove(csv_path);
    CHECK(run({"bench", "--kind", "both", "--n", "16,64,256", "--c", "8", "--repeats", "1",
               "--csv", csv_path}) == 0);
    std::string csv = slurp(csv_path);
    size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows == 7);  // header + 3 cmqka + 3 ssa
    CHECK(run({"bench", "--kind", "sideways"}) == 2);
}

TEST_CASE("train/eval round trip through the CLI on a tiny synthetic run") {
    std::string ckpt = "/tmp/snnergy_cli_model.ckpt";
    std::filesystem::remove(ckpt);
    CHECK(run({"train", "--classes", "2", "--samples", "4", "--hw", "16", "--timesteps", "1",
               "--epochs", "1", "--warmup", "1", "--batch", "4", "--seed", "3", "--checkpoint",
               ckpt}) == 0);
    CHECK(std::filesystem::exists(ckpt));
    CHECK(run({"eval", "--checkpoint", ckpt, "--classes", "2", "--samples", "4", "--hw", "16",
               "--timesteps", "1", "--split", "val", "--seed", "3"}) == 0);
    CHECK(run({"eval", "--checkpoint", ckpt, "--split", "nope", "--classes", "2"}) == 2);
    CHECK(run({"eval", "--checkpoint", "/tmp/does_not_exist.ckpt", "--classes", "2"}) == 1);
}

TEST_CASE("profile --preset energy emits report files") {
    std::string prefix = "/tmp/snnergy_cli_energy";
    std::filesystem::remove(prefix + ".txt");
    std::filesystem::remove(prefix + ".json");
    CHECK(run({"profile", "--preset", "energy", "--classes", "2", "--hw", "32", "--timesteps",
               "2", "--batch", "2", "--out", prefix}) == 0);
    CHECK(std::filesystem::exists(prefix + ".txt"));
    CHECK(std::filesystem::exists(prefix + ".json"));
    CHECK(slurp(prefix + ".txt").find("SOP") != std::string::npos);
}

TEST_CASE("ablate emits the sweep CSV") {
    std::string csv_path = "/tmp/snnergy_cli_ablate.csv";
    std::filesystem::remove(csv_path);
    CHECK(run({"ablate", "--kind", "timesteps", "--values", "1,2", "--classes", "2", "--samples",
               "3", "--hw", "16", "--epochs", "1", "--warmup", "1", "--batch", "3", "--seed",
               "5", "--csv", csv_path}) == 0);
    std::string csv = slurp(csv_path);
    CHECK(csv.rfind("value,top1,loss\n", 0) == 0);
    size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows == 3);
    CHECK(run({"ablate", "--kind", "nonsense"}) == 2);
}
