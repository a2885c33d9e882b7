// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON <-> ModelConfig / TrainConfig. Missing keys keep their defaults,
// unknown keys are errors.

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "looplab/trainer.hpp"

namespace looplab::io {

using nlohmann::json;

namespace detail {

/// Reads keys from an object and complains about the ones nobody asked for.
class Reader {
   public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw std::invalid_argument(where_ + ": expected a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw std::invalid_argument(where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const char* key) const { return j_.at(key); }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw std::invalid_argument(where_ + ": unknown key '" + k + "'");
    }

   private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const ModelConfig& c) {
    return {{"vocab", c.vocab},
            {"d", c.d},
            {"n_heads", c.n_heads},
            {"prelude_layers", c.prelude_layers},
            {"recurrent_layers", c.recurrent_layers},
            {"coda_layers", c.coda_layers},
            {"mlp_ratio", c.mlp_ratio},
            {"mode", mode_name(c.mode)},
            {"prelude_norm", c.prelude_norm},
            {"qk_norm", c.qk_norm},
            {"rope_theta", c.rope_theta},
            {"norm_eps", c.norm_eps},
            {"sigma0", c.sigma0},
            {"init_seed", c.init_seed}};
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig c = {}) {
    detail::Reader r(j, "model");
    r.get("vocab", c.vocab);
    r.get("d", c.d);
    r.get("n_heads", c.n_heads);
    r.get("prelude_layers", c.prelude_layers);
    r.get("recurrent_layers", c.recurrent_layers);
    r.get("coda_layers", c.coda_layers);
    r.get("mlp_ratio", c.mlp_ratio);
    std::string mode = mode_name(c.mode);
    r.get("mode", mode);
    c.mode = parse_mode(mode);
    r.get("prelude_norm", c.prelude_norm);
    r.get("qk_norm", c.qk_norm);
    r.get("rope_theta", c.rope_theta);
    r.get("norm_eps", c.norm_eps);
    r.get("sigma0", c.sigma0);
    r.get("init_seed", c.init_seed);
    r.finish();
    c.validate();
    return c;
}

/// Trainer settings without the model block.
inline json to_json(const TrainConfig& c) {
    return {{"mu_rec", c.mu_rec},
            {"mu_bwd", c.mu_bwd},
            {"depth_kind", depth_kind_name(c.depth_kind)},
            {"lognormal_sigma", c.lognormal_sigma},
            {"per_sequence", c.per_sequence},
            {"batch_size", c.batch_size},
            {"seq_len", c.seq_len},
            {"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},
            {"steps", c.steps},
            {"grad_clip", c.grad_clip},
            {"cooldown_frac", c.cooldown_frac},
            {"eval_depths", c.eval_depths},
            {"log_interval", c.log_interval},
            {"eval_interval", c.eval_interval},
            {"eval_windows", c.eval_windows},
            {"checkpoint_interval", c.checkpoint_interval},
            {"halt_state_norm", c.halt_state_norm},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
    detail::Reader r(j, "train");
    r.get("mu_rec", c.mu_rec);
    r.get("mu_bwd", c.mu_bwd);
    std::string kind = depth_kind_name(c.depth_kind);
    r.get("depth_kind", kind);
    c.depth_kind = parse_depth_kind(kind);
    r.get("lognormal_sigma", c.lognormal_sigma);
    r.get("per_sequence", c.per_sequence);
    r.get("batch_size", c.batch_size);
    r.get("seq_len", c.seq_len);
    r.get("lr", c.lr);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("adam_eps", c.adam_eps);
    r.get("weight_decay", c.weight_decay);
    r.get("steps", c.steps);
    r.get("grad_clip", c.grad_clip);
    r.get("cooldown_frac", c.cooldown_frac);
    r.get("eval_depths", c.eval_depths);
    r.get("log_interval", c.log_interval);
    r.get("eval_interval", c.eval_interval);
    r.get("eval_windows", c.eval_windows);
    r.get("checkpoint_interval", c.checkpoint_interval);
    r.get("halt_state_norm", c.halt_state_norm);
    r.get("seed", c.seed);
    r.finish();
    return c;
}

/// Where the training text comes from: a file, or the built-in generator.
struct CorpusSpec {
    std::string path;
    std::size_t synthetic_bytes = 0;
    std::uint64_t synthetic_seed = 1;
    double val_frac = 0.1;

    bool synthetic() const { return path.empty(); }
};

inline json to_json(const CorpusSpec& c) {
    json j{{"val_frac", c.val_frac}};
    if (c.synthetic()) {
        j["synthetic_bytes"] = c.synthetic_bytes;
        j["synthetic_seed"] = c.synthetic_seed;
    } else {
        j["path"] = c.path;
    }
    return j;
}

inline CorpusSpec corpus_spec_from_json(const json& j) {
    CorpusSpec c;
    detail::Reader r(j, "corpus");
    r.get("path", c.path);
    r.get("synthetic_bytes", c.synthetic_bytes);
    r.get("synthetic_seed", c.synthetic_seed);
    r.get("val_frac", c.val_frac);
    r.finish();
    if (c.path.empty() && c.synthetic_bytes == 0)
        throw std::invalid_argument("corpus: give either 'path' or 'synthetic_bytes'");
    if (!c.path.empty() && c.synthetic_bytes != 0)
        throw std::invalid_argument("corpus: 'path' and 'synthetic_bytes' are exclusive");
    return c;
}

/// Everything a training run needs: {"name", "corpus", "model", "train"}.
struct RunConfig {
    std::string name;
    CorpusSpec corpus;
    TrainConfig train;
};

inline json to_json(const RunConfig& c) {
    return {{"name", c.name}, {"corpus", to_json(c.corpus)}, {"model", to_json(c.train.model)}, {"train", to_json(c.train)}};
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    detail::Reader r(j, "config");
    r.get("name", c.name);
    if (!r.has("corpus")) throw std::invalid_argument("config: missing 'corpus'");
    c.corpus = corpus_spec_from_json(r.at("corpus"));
    if (r.has("model")) c.train.model = model_config_from_json(r.at("model"));
    if (r.has("train")) c.train = train_config_from_json(r.at("train"), c.train);
    r.finish();
    c.train.validate();
    return c;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace looplab::io
