#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "snnergy/tensor.hpp"

namespace snnergy {

// Structured parse failure with the byte offset of the offending field.
struct ParseError : Error {
    size_t offset;
    ParseError(size_t off, const std::string& msg)
        : Error("parse error at byte " + std::to_string(off) + ": " + msg), offset(off) {}
};

enum class SnrgDtype : uint8_t { Real32 = 0, BinaryByte = 1 };

// SNRG container: magic "SNRG" | u16 version=1 | u8 dtype | u8 ndim |
// u32 dims[ndim] | row-major payload. All little-endian.
std::vector<uint8_t> encode_tensor(const Tensor& t, SnrgDtype dtype = SnrgDtype::Real32);
Tensor decode_tensor(const uint8_t* bytes, size_t len);

void write_tensor(const std::string& path, const Tensor& t, SnrgDtype dtype = SnrgDtype::Real32);
Tensor read_tensor(const std::string& path);

// Checkpoint container: magic "SNRGCKPT" | u64 json length | JSON header
// (arbitrary config + tensor manifest) | concatenated SNRG records in
// manifest order.
void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::pair<nlohmann::json, std::map<std::string, Tensor>> load_checkpoint(const std::string& path);

// ---- synthetic correlated audio-visual data ----

struct DatasetSpec {
    int num_classes = 4;
    int samples_per_class = 50;  // train split; val/test get max(1, n/4) each
    Dim height = 32, width = 32;
    int timesteps = 2;
    float correlation = 0.9f;  // probability the audio pattern matches the video class
    float noise_sigma = 0.25f;
    uint64_t seed = 7;

    void validate() const;
};

enum class Split { Train = 0, Val = 1, Test = 2 };
const char* split_name(Split s);

struct Dataset {
    Tensor video;  // [S, T, 3, H, W]
    Tensor audio;  // [S, T, 1, H, W]
    std::vector<int> labels;         // video class
    std::vector<int> audio_classes;  // pattern class used for the audio stream

    Dim size() const { return static_cast<Dim>(labels.size()); }
};

Dataset generate_dataset(const DatasetSpec& spec, Split split);

// directory layout: {train,val,test}/{video,audio,labels}.snrg + manifest.json
void write_dataset_dir(const std::string& root, const DatasetSpec& spec);
Dataset load_dataset_split(const std::string& root, Split split);
DatasetSpec load_dataset_spec(const std::string& root);

void spec_to_json(const DatasetSpec& spec, nlohmann::json& j);
DatasetSpec spec_from_json(const nlohmann::json& j);

}  // namespace snnergy
