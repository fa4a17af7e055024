#include "snnergy/dataio.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "snnergy/rng.hpp"

namespace snnergy {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'R', 'G'};
constexpr uint16_t kVersion = 1;
constexpr int kMaxNdim = 16;
constexpr uint64_t kMaxElements = 1ull << 33;  // 8 Gi elements, far beyond desk scale

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<uint8_t> encode_tensor(const Tensor& t, SnrgDtype dtype) {
    SNN_CHECK_CONTRACT(t.defined(), "encode_tensor: undefined tensor");
    SNN_CHECK_CONTRACT(t.rank() <= kMaxNdim, "encode_tensor: rank ", t.rank(), " exceeds ", kMaxNdim);
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    out.push_back(static_cast<uint8_t>(dtype));
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) {
        SNN_CHECK_CONTRACT(t.dim(i) <= 0xffffffffll, "encode_tensor: dimension too large for u32");
        put_u32(out, static_cast<uint32_t>(t.dim(i)));
    }
    const float* p = t.data();
    if (dtype == SnrgDtype::Real32) {
        size_t base = out.size();
        out.resize(base + static_cast<size_t>(t.numel()) * 4);
        std::memcpy(out.data() + base, p, static_cast<size_t>(t.numel()) * 4);
    } else {
        for (Dim i = 0; i < t.numel(); ++i) {
            SNN_CHECK_CONTRACT(p[i] == 0.0f || p[i] == 1.0f,
                               "encode_tensor: binary dtype requires 0/1 values");
            out.push_back(p[i] == 1.0f ? 1 : 0);
        }
    }
    return out;
}

Tensor decode_tensor(const uint8_t* bytes, size_t len) {
    if (len < 4 || std::memcmp(bytes, kMagic, 4) != 0)
        throw ParseError(0, "bad magic (want \"SNRG\")");
    if (len < 6) throw ParseError(4, "truncated header: missing version");
    uint16_t version = get_u16(bytes + 4);
    if (version != kVersion)
        throw ParseError(4, "unsupported version " + std::to_string(version));
    if (len < 7) throw ParseError(6, "truncated header: missing dtype");
    uint8_t dtype_raw = bytes[6];
    if (dtype_raw > 1) throw ParseError(6, "unknown dtype " + std::to_string(dtype_raw));
    SnrgDtype dtype = static_cast<SnrgDtype>(dtype_raw);
    if (len < 8) throw ParseError(7, "truncated header: missing ndim");
    uint8_t ndim = bytes[7];
    if (ndim == 0 || ndim > kMaxNdim)
        throw ParseError(7, "invalid ndim " + std::to_string(ndim));
    size_t off = 8;
    if (len < off + static_cast<size_t>(ndim) * 4)
        throw ParseError(off, "truncated header: missing dims");
    Shape shape(ndim);
    uint64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        uint32_t d = get_u32(bytes + off);
        if (d == 0) throw ParseError(off, "dimension " + std::to_string(i) + " is zero");
        count *= d;
        if (count > kMaxElements)
            throw ParseError(off, "dimension overflow: product exceeds element cap");
        shape[static_cast<size_t>(i)] = d;
        off += 4;
    }
    size_t elem_size = dtype == SnrgDtype::Real32 ? 4 : 1;
    size_t want = static_cast<size_t>(count) * elem_size;
    if (len - off != want)
        throw ParseError(off, "payload length mismatch: have " + std::to_string(len - off) +
                                  " bytes, want " + std::to_string(want));
    std::vector<float> data(static_cast<size_t>(count));
    if (dtype == SnrgDtype::Real32) {
        std::memcpy(data.data(), bytes + off, want);
    } else {
        for (size_t i = 0; i < count; ++i) {
            uint8_t b = bytes[off + i];
            if (b > 1) throw ParseError(off + i, "binary payload byte out of {0,1}");
            data[i] = static_cast<float>(b);
        }
    }
    return Tensor::from(std::move(shape), std::move(data));
}

void write_tensor(const std::string& path, const Tensor& t, SnrgDtype dtype) {
    auto bytes = encode_tensor(t, dtype);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    SNN_CHECK(f.good(), "write_tensor: cannot open ", path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    SNN_CHECK(f.good(), "write_tensor: write failed for ", path);
}

namespace {
std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    SNN_CHECK(f.good(), "cannot open ", path);
    auto sz = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(sz));
    f.read(reinterpret_cast<char*>(bytes.data()), sz);
    SNN_CHECK(f.good(), "read failed for ", path);
    return bytes;
}
}  // namespace

Tensor read_tensor(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return decode_tensor(bytes.data(), bytes.size());
}

// ---- checkpoint container ----

namespace {
constexpr char kCkptMagic[8] = {'S', 'N', 'R', 'G', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    nlohmann::json header;
    header["config"] = config;
    std::vector<std::vector<uint8_t>> blobs;
    blobs.reserve(tensors.size());
    nlohmann::json manifest = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        blobs.push_back(encode_tensor(t));
        manifest.push_back({{"name", name}, {"offset", offset}, {"length", blobs.back().size()}});
        offset += blobs.back().size();
    }
    header["manifest"] = manifest;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    SNN_CHECK(f.good(), "save_checkpoint: cannot open ", path);
    f.write(kCkptMagic, 8);
    uint64_t hl = hs.size();
    f.write(reinterpret_cast<const char*>(&hl), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& b : blobs)
        f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    SNN_CHECK(f.good(), "save_checkpoint: write failed for ", path);
}

std::pair<nlohmann::json, std::map<std::string, Tensor>> load_checkpoint(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
        throw ParseError(0, "bad checkpoint magic");
    uint64_t hl = 0;
    std::memcpy(&hl, bytes.data() + 8, 8);
    if (bytes.size() < 16 + hl) throw ParseError(8, "truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(hl));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(16, std::string("invalid header JSON: ") + e.what());
    }
    std::map<std::string, Tensor> tensors;
    size_t base = 16 + static_cast<size_t>(hl);
    for (const auto& entry : header.at("manifest")) {
        std::string name = entry.at("name");
        uint64_t off = entry.at("offset");
        uint64_t len = entry.at("length");
        if (base + off + len > bytes.size())
            throw ParseError(base + off, "tensor record out of bounds: " + name);
        tensors.emplace(name, decode_tensor(bytes.data() + base + off, static_cast<size_t>(len)));
    }
    return {header.at("config"), std::move(tensors)};
}

// ---- synthetic dataset ----

void DatasetSpec::validate() const {
    SNN_CHECK(num_classes >= 2, "DatasetSpec: need at least 2 classes");
    SNN_CHECK(samples_per_class >= 1, "DatasetSpec: samples_per_class must be positive");
    SNN_CHECK(height >= 4 && width >= 4, "DatasetSpec: spatial size too small");
    SNN_CHECK(timesteps >= 1, "DatasetSpec: timesteps must be positive");
    if (!(correlation >= 0.0f && correlation <= 1.0f))
        throw ValidationError("DatasetSpec: correlation must lie in [0,1]");
    if (!(noise_sigma >= 0.0f))
        throw ValidationError("DatasetSpec: noise_sigma must be non-negative");
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

namespace {

constexpr int kGrid = 8;  // pattern cells per side

// class-specific video pattern: random high/low cells on a coarse grid
std::vector<float> video_pattern(const DatasetSpec& spec, int cls) {
    Rng rng(derive_seed(spec.seed, 0x7061747465726eull, static_cast<uint64_t>(cls)));
    std::vector<float> cells(kGrid * kGrid);
    for (auto& c : cells) c = rng.uniform() < 0.5f ? 0.1f : 0.9f;
    std::vector<float> img(static_cast<size_t>(spec.height * spec.width));
    for (Dim y = 0; y < spec.height; ++y)
        for (Dim x = 0; x < spec.width; ++x) {
            int cy = static_cast<int>(y * kGrid / spec.height);
            int cx = static_cast<int>(x * kGrid / spec.width);
            img[static_cast<size_t>(y * spec.width + x)] = cells[static_cast<size_t>(cy * kGrid + cx)];
        }
    return img;
}

// class-specific audio pattern: horizontal bands (mel-band energies)
std::vector<float> audio_pattern(const DatasetSpec& spec, int cls) {
    Rng rng(derive_seed(spec.seed, 0x73706563747261ull, static_cast<uint64_t>(cls)));
    std::vector<float> bands(kGrid);
    for (auto& b : bands) b = rng.uniform() < 0.5f ? 0.1f : 0.9f;
    std::vector<float> img(static_cast<size_t>(spec.height * spec.width));
    for (Dim y = 0; y < spec.height; ++y) {
        float v = bands[static_cast<size_t>(y * kGrid / spec.height)];
        for (Dim x = 0; x < spec.width; ++x) img[static_cast<size_t>(y * spec.width + x)] = v;
    }
    return img;
}

// class-specific on/off gain over time; every class starts ON so T=1 runs
// still see each class's pattern
float temporal_gain(const DatasetSpec& spec, int cls, int t) {
    if (t == 0) return 1.0f;
    uint64_t bit = derive_seed(spec.seed, 0x7363686564756cull, static_cast<uint64_t>(cls),
                               static_cast<uint64_t>(t)) & 1ull;
    return bit ? 1.0f : 0.25f;
}

Dim split_count_per_class(const DatasetSpec& spec, Split split) {
    if (split == Split::Train) return spec.samples_per_class;
    return std::max<Dim>(1, spec.samples_per_class / 4);
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, Split split) {
    spec.validate();
    const Dim per_class = split_count_per_class(spec, split);
    const Dim S = per_class * spec.num_classes;
    const Dim T = spec.timesteps, H = spec.height, W = spec.width;
    const Dim hw = H * W;

    std::vector<std::vector<float>> vpat, apat;
    vpat.reserve(static_cast<size_t>(spec.num_classes));
    apat.reserve(static_cast<size_t>(spec.num_classes));
    for (int c = 0; c < spec.num_classes; ++c) {
        vpat.push_back(video_pattern(spec, c));
        apat.push_back(audio_pattern(spec, c));
    }
    // per-channel brightness so the three video channels are not identical
    const float chan_gain[3] = {1.0f, 0.8f, 0.6f};

    Dataset ds;
    ds.video = Tensor::zeros({S, T, 3, H, W});
    ds.audio = Tensor::zeros({S, T, 1, H, W});
    ds.labels.resize(static_cast<size_t>(S));
    ds.audio_classes.resize(static_cast<size_t>(S));

    float* pv = ds.video.data();
    float* pa = ds.audio.data();
    const uint64_t split_id = static_cast<uint64_t>(split) + 1;
    for (Dim s = 0; s < S; ++s) {
        int cls = static_cast<int>(s % spec.num_classes);  // exact class balance
        ds.labels[static_cast<size_t>(s)] = cls;
        Rng rng(derive_seed(spec.seed, 0x73616d706c65ull * split_id, static_cast<uint64_t>(s)));
        int acls = cls;
        if (rng.uniform() >= spec.correlation)
            acls = static_cast<int>(rng.below(static_cast<uint64_t>(spec.num_classes)));
        ds.audio_classes[static_cast<size_t>(s)] = acls;
        for (Dim t = 0; t < T; ++t) {
            float gv = temporal_gain(spec, cls, static_cast<int>(t));
            float ga = temporal_gain(spec, acls, static_cast<int>(t));
            for (int ch = 0; ch < 3; ++ch) {
                float* dst = pv + ((s * T + t) * 3 + ch) * hw;
                const float* pat = vpat[static_cast<size_t>(cls)].data();
                for (Dim i = 0; i < hw; ++i)
                    dst[i] = chan_gain[ch] * gv * pat[i] + spec.noise_sigma * rng.normal();
            }
            float* dst = pa + (s * T + t) * hw;
            const float* pat = apat[static_cast<size_t>(acls)].data();
            for (Dim i = 0; i < hw; ++i)
                dst[i] = ga * pat[i] + spec.noise_sigma * rng.normal();
        }
    }
    return ds;
}

void spec_to_json(const DatasetSpec& spec, nlohmann::json& j) {
    j = nlohmann::json{{"num_classes", spec.num_classes},
                       {"samples_per_class", spec.samples_per_class},
                       {"height", spec.height},
                       {"width", spec.width},
                       {"timesteps", spec.timesteps},
                       {"correlation", spec.correlation},
                       {"noise_sigma", spec.noise_sigma},
                       {"seed", spec.seed}};
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    spec.num_classes = j.at("num_classes");
    spec.samples_per_class = j.at("samples_per_class");
    spec.height = j.at("height");
    spec.width = j.at("width");
    spec.timesteps = j.at("timesteps");
    spec.correlation = j.at("correlation");
    spec.noise_sigma = j.at("noise_sigma");
    spec.seed = j.at("seed");
    spec.validate();
    return spec;
}

void write_dataset_dir(const std::string& root, const DatasetSpec& spec) {
    spec.validate();
    namespace fs = std::filesystem;
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        fs::path dir = fs::path(root) / split_name(split);
        fs::create_directories(dir);
        Dataset ds = generate_dataset(spec, split);
        write_tensor((dir / "video.snrg").string(), ds.video);
        write_tensor((dir / "audio.snrg").string(), ds.audio);
        Tensor labels = Tensor::zeros({ds.size()});
        for (Dim i = 0; i < ds.size(); ++i)
            labels.data()[i] = static_cast<float>(ds.labels[static_cast<size_t>(i)]);
        write_tensor((dir / "labels.snrg").string(), labels);
    }
    nlohmann::json j;
    spec_to_json(spec, j);
    std::ofstream f(std::filesystem::path(root) / "manifest.json");
    SNN_CHECK(f.good(), "write_dataset_dir: cannot write manifest under ", root);
    f << j.dump(2) << "\n";
}

DatasetSpec load_dataset_spec(const std::string& root) {
    std::ifstream f(std::filesystem::path(root) / "manifest.json");
    SNN_CHECK(f.good(), "load_dataset_spec: missing manifest.json under ", root);
    nlohmann::json j;
    f >> j;
    return spec_from_json(j);
}

Dataset load_dataset_split(const std::string& root, Split split) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(root) / split_name(split);
    Dataset ds;
    ds.video = read_tensor((dir / "video.snrg").string());
    ds.audio = read_tensor((dir / "audio.snrg").string());
    Tensor labels = read_tensor((dir / "labels.snrg").string());
    ds.labels.resize(static_cast<size_t>(labels.numel()));
    for (Dim i = 0; i < labels.numel(); ++i)
        ds.labels[static_cast<size_t>(i)] = static_cast<int>(labels.data()[i]);
    return ds;
}

}  // namespace snnergy
