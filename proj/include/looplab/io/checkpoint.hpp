// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container. All integers little-endian.
//
//   magic        8 bytes  "LOOPLAB\x1a"
//   version      1 byte   (kCheckpointVersion)
//   meta_len     u64
//   meta         meta_len bytes of JSON: {"model": <ModelConfig>, ...caller fields}
//   n_arrays     u32
//   per array, in LoopedModel::parameters() order:
//     name_len   u32, name bytes
//     rank       u32, dims u64 x rank
//     values     f64 x prod(dims), IEEE-754 binary64 little-endian

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "looplab/io/config.hpp"
#include "looplab/model.hpp"

namespace looplab::io {

inline constexpr std::array<char, 8> kCheckpointMagic{'L', 'O', 'O', 'P', 'L', 'A', 'B', '\x1a'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
   public:
    explicit ByteReader(const std::string& b) : b_(b) {}

    template <typename U>
    U le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == b_.size(); }

   private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated file");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

struct Checkpoint {
    LoopedModel model;
    json meta;  // includes "model"

    long step() const { return meta.value("step", 0L); }
};

inline std::string serialize_checkpoint(const LoopedModel& model, json meta = json::object()) {
    meta["model"] = to_json(model.config);
    const std::string meta_text = meta.dump();
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    out.push_back(static_cast<char>(kCheckpointVersion));
    detail::put_le<std::uint64_t>(out, meta_text.size());
    out += meta_text;
    const auto params = model.parameters();
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t dim : p.tensor.shape()) detail::put_le<std::uint64_t>(out, dim);
        for (double v : p.tensor.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    detail::ByteReader in(bytes);
    if (in.bytes(8) != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()))
        throw std::runtime_error("checkpoint: bad magic");
    const auto version = in.le<std::uint8_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    json meta;
    try {
        meta = json::parse(in.bytes(in.le<std::uint64_t>()));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("checkpoint: bad metadata: ") + e.what());
    }
    if (!meta.contains("model")) throw std::runtime_error("checkpoint: metadata lacks the model config");
    Checkpoint ck{LoopedModel(model_config_from_json(meta.at("model"))), meta};
    auto params = ck.model.parameters();
    const auto n = in.le<std::uint32_t>();
    if (n != params.size())
        throw std::runtime_error("checkpoint: " + std::to_string(n) + " arrays, model has " + std::to_string(params.size()));
    for (auto& p : params) {
        const std::string name = in.bytes(in.le<std::uint32_t>());
        if (name != p.name) throw std::runtime_error("checkpoint: expected array '" + p.name + "', found '" + name + "'");
        const auto rank = in.le<std::uint32_t>();
        Shape shape(rank);
        for (auto& dim : shape) dim = in.le<std::uint64_t>();
        if (shape != p.tensor.shape()) throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        for (double& v : p.tensor.mutable_data()) v = std::bit_cast<double>(in.le<std::uint64_t>());
    }
    if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const LoopedModel& model, json meta = json::object()) {
    write_text_file(path, serialize_checkpoint(model, std::move(meta)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace looplab::io
