#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "planecycle/error.hpp"
#include "planecycle/network.hpp"
#include "planecycle/rng.hpp"
#include "planecycle/tensor.hpp"

namespace planecycle {

/*
 * Single-file tensor container, interoperable with the common safetensors
 * layout:
 *
 *   [8-byte little-endian u64: header length N]
 *   [N bytes UTF-8 JSON: name -> {"dtype": "F32", "shape": [...],
 *                                 "data_offsets": [begin, end]}]
 *   [raw little-endian float32 buffer; offsets relative to its start]
 *
 * The optional "__metadata__" header entry holds a string-to-string map.
 * Only F32 payloads are accepted. Writes are canonical: entries sorted by
 * name, offsets packed in that order, so equal inputs give equal bytes.
 */

struct TensorArchive {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> metadata;
};

namespace detail {

inline void check_little_endian() {
    const uint32_t probe = 1;
    uint8_t first;
    std::memcpy(&first, &probe, 1);
    if (first != 1) throw IoFailure("archive codec requires a little-endian host");
}

inline Shape parse_entry_shape(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array()) throw MalformedHeader("entry '" + name + "' has a non-array shape");
    Shape s;
    for (const auto& d : j) {
        if (!d.is_number_unsigned() && !d.is_number_integer()) {
            throw MalformedHeader("entry '" + name + "' has a non-integer extent");
        }
        const int64_t v = d.get<int64_t>();
        if (v < 1) throw MalformedHeader("entry '" + name + "' has extent " + std::to_string(v));
        if (v > (int64_t{1} << 40)) throw MalformedHeader("entry '" + name + "' has an implausible extent");
        s.dims.push_back(v);
    }
    return s;
}

inline int64_t checked_numel(const Shape& s, const std::string& name) {
    int64_t n = 1;
    for (int64_t d : s.dims) {
        if (n > (int64_t{1} << 40) / d) {
            throw MalformedHeader("entry '" + name + "' shape overflows");
        }
        n *= d;
    }
    return n;
}

} // namespace detail

// Parses an in-memory archive image. Every malformed input maps to a typed
// error; nothing is read out of bounds.
inline TensorArchive parse_archive(const uint8_t* bytes, size_t size) {
    detail::check_little_endian();
    if (size < 8) throw TruncatedFile("archive shorter than its length prefix");
    uint64_t header_len = 0;
    std::memcpy(&header_len, bytes, 8);
    if (header_len > size - 8) {
        throw TruncatedFile("header length " + std::to_string(header_len) + " exceeds file size " +
                            std::to_string(size));
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes + 8, bytes + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeader(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw MalformedHeader("header must be a JSON object");

    const uint8_t* buffer = bytes + 8 + header_len;
    const uint64_t buffer_size = size - 8 - header_len;

    TensorArchive out;
    std::vector<std::pair<uint64_t, uint64_t>> ranges;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            if (!entry.is_object()) throw MalformedHeader("__metadata__ must be an object");
            for (const auto& [k, v] : entry.items()) {
                if (!v.is_string()) throw MalformedHeader("__metadata__ values must be strings");
                out.metadata[k] = v.get<std::string>();
            }
            continue;
        }
        if (!entry.is_object()) throw MalformedHeader("entry '" + name + "' is not an object");
        if (!entry.contains("dtype") || !entry["dtype"].is_string()) {
            throw MalformedHeader("entry '" + name + "' is missing a dtype");
        }
        const std::string dtype = entry["dtype"].get<std::string>();
        if (dtype != "F32") throw UnsupportedDtype("entry '" + name + "' has dtype " + dtype);
        if (!entry.contains("shape")) throw MalformedHeader("entry '" + name + "' is missing a shape");
        const Shape shape = detail::parse_entry_shape(entry["shape"], name);
        const int64_t numel = detail::checked_numel(shape, name);

        if (!entry.contains("data_offsets") || !entry["data_offsets"].is_array() ||
            entry["data_offsets"].size() != 2) {
            throw MalformedHeader("entry '" + name + "' needs data_offsets [begin, end]");
        }
        const auto& off = entry["data_offsets"];
        if (!off[0].is_number_unsigned() || !off[1].is_number_unsigned()) {
            throw MalformedHeader("entry '" + name + "' has negative or non-integer offsets");
        }
        const uint64_t begin = off[0].get<uint64_t>();
        const uint64_t end = off[1].get<uint64_t>();
        if (end < begin) throw MalformedHeader("entry '" + name + "' has end < begin");
        if (end > buffer_size) {
            throw TruncatedFile("entry '" + name + "' extends past the end of the buffer");
        }
        if (end - begin != static_cast<uint64_t>(numel) * 4) {
            throw MalformedHeader("entry '" + name + "' byte range does not match its shape");
        }
        ranges.emplace_back(begin, end);

        std::vector<float> data(static_cast<size_t>(numel));
        std::memcpy(data.data(), buffer + begin, static_cast<size_t>(numel) * 4);
        out.tensors.emplace(name, Tensor(shape, std::move(data)));
    }

    std::sort(ranges.begin(), ranges.end());
    for (size_t i = 1; i < ranges.size(); ++i) {
        if (ranges[i].first < ranges[i - 1].second) {
            throw OverlappingRanges("two entries share bytes in the data buffer");
        }
    }
    return out;
}

// Canonical byte image: entries sorted by name, packed offsets.
inline std::vector<uint8_t> serialize_archive(const TensorArchive& archive) {
    detail::check_little_endian();
    nlohmann::json header = nlohmann::json::object();
    if (!archive.metadata.empty()) {
        nlohmann::json meta = nlohmann::json::object();
        for (const auto& [k, v] : archive.metadata) meta[k] = v;
        header["__metadata__"] = meta;
    }

    uint64_t offset = 0;
    for (const auto& [name, tensor] : archive.tensors) {
        if (name == "__metadata__") throw DuplicateName("'__metadata__' is reserved");
        const uint64_t bytes = static_cast<uint64_t>(tensor.numel()) * 4;
        nlohmann::json entry;
        entry["dtype"] = "F32";
        entry["shape"] = tensor.shape().dims;
        entry["data_offsets"] = {offset, offset + bytes};
        header[name] = entry;
        offset += bytes;
    }

    const std::string header_text = header.dump();
    const uint64_t header_len = header_text.size();

    std::vector<uint8_t> out;
    out.reserve(8 + header_text.size() + static_cast<size_t>(offset));
    out.resize(8);
    std::memcpy(out.data(), &header_len, 8);
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const auto& [name, tensor] : archive.tensors) {
        const auto* p = reinterpret_cast<const uint8_t*>(tensor.data());
        out.insert(out.end(), p, p + static_cast<size_t>(tensor.numel()) * 4);
    }
    return out;
}

inline TensorArchive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read error on '" + path + "'");
    return parse_archive(bytes.data(), bytes.size());
}

inline void write_archive(const TensorArchive& archive, const std::string& path) {
    const std::vector<uint8_t> bytes = serialize_archive(archive);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoFailure("write error on '" + path + "'");
}

inline uint64_t archive_checksum(const TensorArchive& archive) {
    const std::vector<uint8_t> bytes = serialize_archive(archive);
    return fnv1a64(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Manifest: the naming scheme binding archive entries to NetworkWeights.

namespace manifest {

inline std::string block_prefix(int64_t i) { return "blocks." + std::to_string(i) + "."; }

inline std::vector<std::string> tensor_names(int64_t depth) {
    std::vector<std::string> names = {"patch_embed.weight", "patch_embed.bias", "cls_token",
                                      "register_tokens",    "final_norm.gamma", "final_norm.beta"};
    for (int64_t i = 0; i < depth; ++i) {
        const std::string p = block_prefix(i);
        for (const char* field :
             {"ln1.gamma", "ln1.beta", "qkv.weight", "qkv.bias", "proj.weight", "proj.bias", "ls1.gamma",
              "ln2.gamma", "ln2.beta", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "ls2.gamma"}) {
            names.push_back(p + field);
        }
    }
    return names;
}

} // namespace manifest

inline TensorArchive network_to_archive(const NetworkWeights& w) {
    w.validate();
    TensorArchive a;
    a.tensors.emplace("patch_embed.weight", w.patch_weight);
    a.tensors.emplace("patch_embed.bias", w.patch_bias);
    a.tensors.emplace("cls_token", w.cls_token);
    a.tensors.emplace("register_tokens", w.register_tokens);
    a.tensors.emplace("final_norm.gamma", w.final_gamma);
    a.tensors.emplace("final_norm.beta", w.final_beta);
    for (int64_t i = 0; i < w.depth(); ++i) {
        const std::string p = manifest::block_prefix(i);
        const BlockWeights& b = w.blocks[static_cast<size_t>(i)];
        a.tensors.emplace(p + "ln1.gamma", b.ln1_gamma);
        a.tensors.emplace(p + "ln1.beta", b.ln1_beta);
        a.tensors.emplace(p + "qkv.weight", b.qkv_weight);
        a.tensors.emplace(p + "qkv.bias", b.qkv_bias);
        a.tensors.emplace(p + "proj.weight", b.proj_weight);
        a.tensors.emplace(p + "proj.bias", b.proj_bias);
        a.tensors.emplace(p + "ls1.gamma", b.ls1_gamma);
        a.tensors.emplace(p + "ln2.gamma", b.ln2_gamma);
        a.tensors.emplace(p + "ln2.beta", b.ln2_beta);
        a.tensors.emplace(p + "fc1.weight", b.fc1_weight);
        a.tensors.emplace(p + "fc1.bias", b.fc1_bias);
        a.tensors.emplace(p + "fc2.weight", b.fc2_weight);
        a.tensors.emplace(p + "fc2.bias", b.fc2_bias);
        a.tensors.emplace(p + "ls2.gamma", b.ls2_gamma);
    }
    a.metadata["depth"] = std::to_string(w.depth());
    a.metadata["channels"] = std::to_string(w.channels());
    a.metadata["heads"] = std::to_string(w.num_heads());
    a.metadata["patch"] = std::to_string(kPatchSize);
    a.metadata["registers"] = std::to_string(kNumRegisters);
    return a;
}

namespace detail {

inline const Tensor& required_entry(const TensorArchive& a, const std::string& name) {
    auto it = a.tensors.find(name);
    if (it == a.tensors.end()) throw ManifestError("archive is missing entry '" + name + "'");
    return it->second;
}

inline int64_t metadata_int(const TensorArchive& a, const std::string& key) {
    auto it = a.metadata.find(key);
    if (it == a.metadata.end()) throw ManifestError("archive metadata is missing '" + key + "'");
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ManifestError("metadata '" + key + "' is not an integer: " + it->second);
    }
}

} // namespace detail

// Rebuilds NetworkWeights from an archive. Layer-scale entries are optional
// and default to ones (networks trained without them behave identically).
inline NetworkWeights archive_to_network(const TensorArchive& a) {
    const int64_t depth = detail::metadata_int(a, "depth");
    const int64_t channels = detail::metadata_int(a, "channels");
    const int64_t heads = detail::metadata_int(a, "heads");
    if (depth < 1 || channels < 1 || heads < 1) throw ManifestError("metadata arch values must be positive");

    NetworkWeights w;
    w.patch_weight = detail::required_entry(a, "patch_embed.weight");
    w.patch_bias = detail::required_entry(a, "patch_embed.bias");
    w.cls_token = detail::required_entry(a, "cls_token");
    w.register_tokens = detail::required_entry(a, "register_tokens");
    w.final_gamma = detail::required_entry(a, "final_norm.gamma");
    w.final_beta = detail::required_entry(a, "final_norm.beta");
    for (int64_t i = 0; i < depth; ++i) {
        const std::string p = manifest::block_prefix(i);
        BlockWeights b;
        b.num_heads = static_cast<int>(heads);
        b.ln1_gamma = detail::required_entry(a, p + "ln1.gamma");
        b.ln1_beta = detail::required_entry(a, p + "ln1.beta");
        b.qkv_weight = detail::required_entry(a, p + "qkv.weight");
        b.qkv_bias = detail::required_entry(a, p + "qkv.bias");
        b.proj_weight = detail::required_entry(a, p + "proj.weight");
        b.proj_bias = detail::required_entry(a, p + "proj.bias");
        b.ln2_gamma = detail::required_entry(a, p + "ln2.gamma");
        b.ln2_beta = detail::required_entry(a, p + "ln2.beta");
        b.fc1_weight = detail::required_entry(a, p + "fc1.weight");
        b.fc1_bias = detail::required_entry(a, p + "fc1.bias");
        b.fc2_weight = detail::required_entry(a, p + "fc2.weight");
        b.fc2_bias = detail::required_entry(a, p + "fc2.bias");
        b.ls1_gamma = a.tensors.count(p + "ls1.gamma") ? a.tensors.at(p + "ls1.gamma")
                                                       : Tensor::full(Shape{channels}, 1.0f);
        b.ls2_gamma = a.tensors.count(p + "ls2.gamma") ? a.tensors.at(p + "ls2.gamma")
                                                       : Tensor::full(Shape{channels}, 1.0f);
        w.blocks.push_back(std::move(b));
    }
    try {
        w.validate();
    } catch (const Error& e) {
        throw ManifestError(std::string("archive entries do not form a valid network: ") + e.what());
    }
    if (w.channels() != channels || w.num_heads() != static_cast<int>(heads)) {
        throw ManifestError("metadata arch does not match tensor shapes");
    }
    return w;
}

inline void save_network(const NetworkWeights& w, const std::string& path) {
    write_archive(network_to_archive(w), path);
}

inline NetworkWeights load_network(const std::string& path) { return archive_to_network(read_archive(path)); }

inline uint64_t network_checksum(const NetworkWeights& w) { return archive_checksum(network_to_archive(w)); }

// ---------------------------------------------------------------------------
// Deterministic synthetic weights for desk-scale runs. Each tensor draws from
// its own SplitMix64 stream keyed by (seed, name), so adding or removing a
// tensor never shifts another tensor's values.

struct SynthArch {
    int depth = 4;
    int64_t channels = 64;
    int num_heads = 4;
    int64_t in_channels = 1;
};

namespace detail {

inline Tensor synth_tensor(uint64_t seed, const std::string& name, Shape shape, float scale) {
    SplitMix64 rng(tensor_stream_seed(seed, name));
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<float>(rng.next_gaussian()) * scale;
    }
    return t;
}

} // namespace detail

inline NetworkWeights synth_weights(uint64_t seed, const SynthArch& arch) {
    if (arch.depth < 1 || arch.channels < 1 || arch.num_heads < 1 || arch.in_channels < 1) {
        throw InvalidArch("arch values must be positive");
    }
    if (arch.channels % arch.num_heads != 0) {
        throw InvalidArch("channels " + std::to_string(arch.channels) + " not divisible by heads " +
                          std::to_string(arch.num_heads));
    }
    if ((arch.channels / arch.num_heads) % 2 != 0) {
        throw InvalidArch("per-head dim must be even for rotary positions");
    }

    const int64_t C = arch.channels;
    const int64_t hidden = 4 * C;
    constexpr float kScale = 0.02f;

    NetworkWeights w;
    w.patch_weight = detail::synth_tensor(seed, "patch_embed.weight", Shape{C, arch.in_channels, kPatchSize, kPatchSize}, kScale);
    w.patch_bias = detail::synth_tensor(seed, "patch_embed.bias", Shape{C}, kScale);
    w.cls_token = detail::synth_tensor(seed, "cls_token", Shape{1, C}, kScale);
    w.register_tokens = detail::synth_tensor(seed, "register_tokens", Shape{kNumRegisters, C}, kScale);
    w.final_gamma = Tensor::full(Shape{C}, 1.0f);
    w.final_beta = Tensor(Shape{C});
    for (int i = 0; i < arch.depth; ++i) {
        const std::string p = manifest::block_prefix(i);
        BlockWeights b;
        b.num_heads = arch.num_heads;
        b.ln1_gamma = Tensor::full(Shape{C}, 1.0f);
        b.ln1_beta = Tensor(Shape{C});
        b.qkv_weight = detail::synth_tensor(seed, p + "qkv.weight", Shape{3 * C, C}, kScale);
        b.qkv_bias = detail::synth_tensor(seed, p + "qkv.bias", Shape{3 * C}, kScale);
        b.proj_weight = detail::synth_tensor(seed, p + "proj.weight", Shape{C, C}, kScale);
        b.proj_bias = detail::synth_tensor(seed, p + "proj.bias", Shape{C}, kScale);
        b.ls1_gamma = Tensor::full(Shape{C}, 1.0f);
        b.ln2_gamma = Tensor::full(Shape{C}, 1.0f);
        b.ln2_beta = Tensor(Shape{C});
        b.fc1_weight = detail::synth_tensor(seed, p + "fc1.weight", Shape{hidden, C}, kScale);
        b.fc1_bias = detail::synth_tensor(seed, p + "fc1.bias", Shape{hidden}, kScale);
        b.fc2_weight = detail::synth_tensor(seed, p + "fc2.weight", Shape{C, hidden}, kScale);
        b.fc2_bias = detail::synth_tensor(seed, p + "fc2.bias", Shape{C}, kScale);
        b.ls2_gamma = Tensor::full(Shape{C}, 1.0f);
        w.blocks.push_back(std::move(b));
    }
    return w;
}

} // namespace planecycle
