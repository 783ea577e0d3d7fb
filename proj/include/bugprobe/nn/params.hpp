#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "bugprobe/errors.hpp"
#include "bugprobe/nn/tensor.hpp"
#include "bugprobe/rng.hpp"

namespace bugprobe::nn {

// Gradients aligned with a ParameterSet. Produced by Graph::backward.
template <typename S>
struct Gradients {
    std::map<std::string, Tensor<S>> by_name;

    Tensor<S>& at(const std::string& name) { return by_name.at(name); }
    const Tensor<S>& at(const std::string& name) const { return by_name.at(name); }

    void accumulate(const Gradients& other) {
        for (auto& [name, t] : by_name) t.m += other.by_name.at(name).m;
    }

    void scale(S factor) {
        for (auto& [name, t] : by_name) t.m *= factor;
    }

    double global_norm() const {
        double sq = 0.0;
        for (const auto& [name, t] : by_name) sq += static_cast<double>(t.m.template cast<double>().squaredNorm());
        return std::sqrt(sq);
    }
};

// Named parameters plus Adam moment state. std::map keeps iteration order
// deterministic for serialization and norm computations.
template <typename S>
struct ParameterSet {
    std::map<std::string, Tensor<S>> values;
    std::map<std::string, Tensor<S>> adam_m;
    std::map<std::string, Tensor<S>> adam_v;
    long long adam_step_count = 0;

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        auto [it, fresh] = values.emplace(name, std::move(t));
        if (!fresh) throw UsageError("duplicate parameter name: " + name);
        Tensor<S> zero = it->second;
        zero.set_zero();
        adam_m.emplace(name, zero);
        adam_v.emplace(name, std::move(zero));
        return it->second;
    }

    Tensor<S>& at(const std::string& name) {
        auto it = values.find(name);
        if (it == values.end()) throw UsageError("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) throw UsageError("unknown parameter: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return values.count(name) != 0; }

    Gradients<S> zero_gradients() const {
        Gradients<S> g;
        for (const auto& [name, t] : values) {
            Tensor<S> z = t;
            z.set_zero();
            g.by_name.emplace(name, std::move(z));
        }
        return g;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : values) n += static_cast<std::size_t>(t.size());
        return n;
    }
};

// ---- initialization -------------------------------------------------------

// Linear / LSTM weights: U(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases zero.
template <typename S>
inline void init_uniform_fan_in(Tensor<S>& w, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.m.cols()));
    for (Eigen::Index r = 0; r < w.m.rows(); ++r)
        for (Eigen::Index c = 0; c < w.m.cols(); ++c)
            w.m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
}

// Embedding rows: N(0, 1) scaled by 1/sqrt(dim).
template <typename S>
inline void init_embedding(Tensor<S>& table, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(table.m.cols()));
    for (Eigen::Index r = 0; r < table.m.rows(); ++r)
        for (Eigen::Index c = 0; c < table.m.cols(); ++c)
            table.m(r, c) = static_cast<S>(rng.normal() * scale);
}

// ---- checkpoint container --------------------------------------------------
//
// Single self-describing file:
//   magic "BPC1" | u32 header length | header JSON (UTF-8) | raw tensor data
// Header records precision, seeds, and layer hyperparameters; tensors are
// dumped row-major little-endian in header order. Only little-endian hosts
// are supported.

inline constexpr char kCheckpointMagic[4] = {'B', 'P', 'C', '1'};

template <typename S>
inline const char* precision_name() {
    if constexpr (std::is_same_v<S, float>) return "f32";
    else return "f64";
}

template <typename S>
inline void save_checkpoint(const std::string& path, const ParameterSet<S>& params,
                            const nlohmann::json& meta) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    nlohmann::json header;
    header["format"] = "bugprobe-checkpoint";
    header["precision"] = precision_name<S>();
    header["adam_step"] = params.adam_step_count;
    header["meta"] = meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : params.values) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"rank", t.rank}});
    }
    header["tensors"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    const std::string hs = header.dump();
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    out.write(kCheckpointMagic, 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params.values) {
        out.write(reinterpret_cast<const char*>(t.m.data()),
                  static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.size())));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    std::uint32_t len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    if (!in) throw IoError("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("corrupt checkpoint header: " + path);
    return header;
}

template <typename S>
inline ParameterSet<S> load_checkpoint(const std::string& path, nlohmann::json* meta_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    std::uint32_t len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    if (!in) throw IoError("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("corrupt checkpoint header: " + path);
    if (header.value("precision", "") != precision_name<S>())
        throw ConfigError("checkpoint precision is " + header.value("precision", std::string("?")) +
                          ", expected " + precision_name<S>() + ": " + path);

    ParameterSet<S> params;
    params.adam_step_count = header.value("adam_step", 0LL);
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name");
        const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const int rank = entry.at("rank");
        Tensor<S> t = rank == 1 ? Tensor<S>::vector(shape.at(0))
                                : Tensor<S>::matrix(shape.at(0), shape.at(1));
        in.read(reinterpret_cast<char*>(t.m.data()),
                static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.size())));
        if (!in) throw IoError("truncated checkpoint data: " + path);
        params.add(name, std::move(t));
    }
    if (meta_out) *meta_out = header.value("meta", nlohmann::json::object());
    return params;
}

}  // namespace bugprobe::nn
