#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "snnergy/dataio.hpp"

#include <nlohmann/json.hpp>

using namespace snnergy;

TEST_CASE("SNRG round trip is bit-exact") {
    Tensor t = Tensor::from({2, 3}, {1, 1, 1, 1, 1, 1});
    auto bytes = encode_tensor(t);
    Tensor back = decode_tensor(bytes.data(), bytes.size());
    CHECK(back.shape() == t.shape());
    CHECK(back.values() == t.values());

    Rng rng(1);
    Tensor r = oracles::random_tensor({3, 4, 5}, rng);
    auto rb = encode_tensor(r);
    CHECK(decode_tensor(rb.data(), rb.size()).values() == r.values());
}

TEST_CASE("binary dtype stores one byte per element") {
    Rng rng(2);
    Tensor s = oracles::random_binary({4, 7}, rng);
    auto bytes = encode_tensor(s, SnrgDtype::BinaryByte);
    CHECK(bytes.size() == 8 + 2 * 4 + 28);
    Tensor back = decode_tensor(bytes.data(), bytes.size());
    CHECK(back.values() == s.values());
    CHECK_THROWS_AS(encode_tensor(Tensor::from({1}, {0.5f}), SnrgDtype::BinaryByte), ContractError);
}

TEST_CASE("bad magic is a parse error at offset 0") {
    Tensor t = Tensor::from({2}, {1.0f, 2.0f});
    auto bytes = encode_tensor(t);
    bytes[0] = 'X';
    try {
        decode_tensor(bytes.data(), bytes.size());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 0);
    }
}

TEST_CASE("version, dtype, ndim and payload errors carry their offsets") {
    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto good = encode_tensor(t);

    auto mutated = good;
    mutated[4] = 9;  // version
    CHECK_THROWS_AS(decode_tensor(mutated.data(), mutated.size()), ParseError);

    mutated = good;
    mutated[6] = 7;  // dtype
    try {
        decode_tensor(mutated.data(), mutated.size());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 6);
    }

    mutated = good;
    mutated[7] = 0;  // ndim
    CHECK_THROWS_AS(decode_tensor(mutated.data(), mutated.size()), ParseError);

    mutated = good;
    mutated.resize(mutated.size() - 3);  // truncated payload
    CHECK_THROWS_AS(decode_tensor(mutated.data(), mutated.size()), ParseError);

    mutated = good;
    mutated[8 + 3] = 0xff;  // dimension overflow via a huge dim
    CHECK_THROWS_AS(decode_tensor(mutated.data(), mutated.size()), ParseError);
}

TEST_CASE("5-D round trip preserves the row-major layout") {
    Rng rng(3);
    Tensor t = oracles::random_tensor({2, 2, 3, 4, 5}, rng);
    write_tensor("/tmp/snnergy_5d.snrg", t);
    Tensor back = read_tensor("/tmp/snnergy_5d.snrg");
    CHECK(back.shape() == t.shape());
    CHECK(back.at({1, 0, 2, 3, 4}) == t.at({1, 0, 2, 3, 4}));
    CHECK(back.values() == t.values());
}

TEST_CASE("round trips on many random shapes") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        int rank = 1 + static_cast<int>(rng.below(4));
        Shape shape;
        for (int i = 0; i < rank; ++i) shape.push_back(1 + static_cast<Dim>(rng.below(6)));
        Tensor t = oracles::random_tensor(shape, rng);
        auto bytes = encode_tensor(t);
        Tensor back = decode_tensor(bytes.data(), bytes.size());
        CHECK(back.shape() == t.shape());
        CHECK(back.values() == t.values());
    }
}

TEST_CASE("header fuzzing never crashes; malformed inputs yield structured errors") {
    Rng rng(5);
    Tensor t = oracles::random_tensor({3, 5}, rng);
    auto good = encode_tensor(t);
    const size_t header = 8 + 2 * 4;
    int errors = 0, survivors = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        auto bytes = good;
        int flips = 1 + static_cast<int>(rng.below(3));
        for (int f = 0; f < flips; ++f) {
            size_t pos = static_cast<size_t>(rng.below(header));
            uint8_t mask = static_cast<uint8_t>(1 + rng.below(255));
            bytes[pos] ^= mask;
        }
        try {
            Tensor back = decode_tensor(bytes.data(), bytes.size());
            // a flip that leaves the header self-consistent must still yield
            // a tensor whose element count matches the payload
            CHECK(back.numel() * 4 == static_cast<Dim>(bytes.size() - 8 - 4 * back.rank()));
            ++survivors;
        } catch (const ParseError&) {
            ++errors;
        }
    }
    CHECK(errors + survivors == 2000);
    CHECK(errors > 0);
}

TEST_CASE("dataset: noiseless correlated samples are identical within a class") {
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 4;
    spec.height = 16;
    spec.width = 16;
    spec.timesteps = 2;
    spec.correlation = 1.0f;
    spec.noise_sigma = 0.0f;
    spec.seed = 9;
    Dataset ds = generate_dataset(spec, Split::Train);
    CHECK(ds.size() == 12);
    // same-class samples coincide; nearest-pattern classification is exact
    const Dim sample_len = ds.video.numel() / ds.size();
    for (Dim i = 0; i < ds.size(); ++i)
        for (Dim j = i + 1; j < ds.size(); ++j) {
            if (ds.labels[static_cast<size_t>(i)] != ds.labels[static_cast<size_t>(j)]) continue;
            for (Dim e = 0; e < sample_len; ++e)
                CHECK(ds.video.data()[i * sample_len + e] == ds.video.data()[j * sample_len + e]);
        }
    // distinct classes differ somewhere
    bool any_diff = false;
    for (Dim e = 0; e < sample_len; ++e)
        if (ds.video.data()[e] != ds.video.data()[sample_len + e]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("dataset: class balance is exact and audio matches at rho=1") {
    DatasetSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 8;
    spec.height = 8;
    spec.width = 8;
    spec.timesteps = 2;
    spec.correlation = 1.0f;
    spec.seed = 10;
    Dataset ds = generate_dataset(spec, Split::Train);
    std::vector<int> counts(4, 0);
    for (size_t i = 0; i < ds.labels.size(); ++i) {
        counts[static_cast<size_t>(ds.labels[i])]++;
        CHECK(ds.audio_classes[i] == ds.labels[i]);
    }
    for (int c : counts) CHECK(c == 8);
}

TEST_CASE("dataset: rho=0 decouples audio classes (chi-square independence)") {
    DatasetSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 300;
    spec.height = 8;
    spec.width = 8;
    spec.timesteps = 1;
    spec.correlation = 0.0f;
    spec.seed = 11;
    Dataset ds = generate_dataset(spec, Split::Train);
    // contingency table video class x audio class
    double table[4][4] = {};
    for (size_t i = 0; i < ds.labels.size(); ++i)
        table[ds.labels[i]][ds.audio_classes[i]] += 1.0;
    double n = static_cast<double>(ds.size());
    double chi2 = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double row = 0, col = 0;
            for (int k = 0; k < 4; ++k) {
                row += table[a][k];
                col += table[k][b];
            }
            double expect = row * col / n;
            chi2 += (table[a][b] - expect) * (table[a][b] - expect) / expect;
        }
    // dof = 9; p > 0.01 iff chi2 below the 21.666 critical value
    CHECK(chi2 < 21.666);
}

TEST_CASE("dataset temporal gain: every class is on at t=0") {
    DatasetSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 1;
    spec.height = 8;
    spec.width = 8;
    spec.timesteps = 4;
    spec.correlation = 1.0f;
    spec.noise_sigma = 0.0f;
    spec.seed = 12;
    Dataset ds = generate_dataset(spec, Split::Train);
    // with gain 1 at t=0, later frames are scaled versions: max over pixels
    // at t=0 must be >= max at any later t for each sample
    const Dim hw = spec.height * spec.width;
    for (Dim s = 0; s < ds.size(); ++s) {
        auto frame_max = [&](Dim t) {
            float m = 0;
            for (Dim i = 0; i < hw; ++i)
                m = std::max(m, ds.video.data()[((s * 4 + t) * 3) * hw + i]);
            return m;
        };
        float m0 = frame_max(0);
        for (Dim t = 1; t < 4; ++t) CHECK(m0 >= frame_max(t) - 1e-6f);
    }
}

TEST_CASE("dataset directory: deterministic bytes, loadable splits") {
    DatasetSpec spec;
    spec.num_classes = 2;
    spec.samples_per_class = 4;
    spec.height = 8;
    spec.width = 8;
    spec.timesteps = 2;
    spec.seed = 13;

    namespace fs = std::filesystem;
    std::string dir1 = "/tmp/snnergy_ds1", dir2 = "/tmp/snnergy_ds2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    write_dataset_dir(dir1, spec);
    write_dataset_dir(dir2, spec);
    for (const char* split : {"train", "val", "test"}) {
        for (const char* file : {"video.snrg", "audio.snrg", "labels.snrg"}) {
            std::ifstream f1(fs::path(dir1) / split / file, std::ios::binary);
            std::ifstream f2(fs::path(dir2) / split / file, std::ios::binary);
            std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
            std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
            CHECK(b1 == b2);
            CHECK(!b1.empty());
        }
    }
    Dataset train = load_dataset_split(dir1, Split::Train);
    Dataset val = load_dataset_split(dir1, Split::Val);
    CHECK(train.size() == 8);
    CHECK(val.size() == 2);  // max(1, 4/4) per class
    DatasetSpec back = load_dataset_spec(dir1);
    CHECK(back.seed == spec.seed);
    CHECK(back.num_classes == spec.num_classes);
}

TEST_CASE("dataset spec validation") {
    DatasetSpec spec;
    spec.correlation = 1.5f;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = DatasetSpec{};
    spec.noise_sigma = -1.0f;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("checkpoint container: config and tensors round trip") {
    Rng rng(6);
    nlohmann::json cfg{{"kind", "test"}, {"value", 42}};
    std::vector<std::pair<std::string, Tensor>> tensors{
        {"a", oracles::random_tensor({3, 4}, rng)},
        {"b.weight", oracles::random_tensor({7}, rng)},
    };
    save_checkpoint("/tmp/snnergy_test.ckpt", cfg, tensors);
    auto [config, loaded] = load_checkpoint("/tmp/snnergy_test.ckpt");
    CHECK(config.at("value") == 42);
    CHECK(loaded.at("a").values() == tensors[0].second.values());
    CHECK(loaded.at("b.weight").values() == tensors[1].second.values());
}
