// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// JSONL inputs and outputs of the fitting tools.
//
// One object per line; blank lines are skipped.
//   training record:  {"mu_rec": 4, "N": 1.2e8, "D": 2.4e9, "flops": 1e18, "loss": 3.1}
//   test-time curve:  {"mu_rec": 4, "N": 1.2e8, "D": 2.4e9, "T": [1, 2, ...], "loss": [3.9, 3.5, ...]}
// "flops" is optional; N and D are optional for curves fitted one at a time.

#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/fit/scaling_laws.hpp"
#include "looplab/io/config.hpp"

namespace looplab::io {

struct FitInputs {
    std::vector<fit::TrainingRecord> records;
    std::vector<fit::TestTimeCurve> curves;
};

inline FitInputs parse_fit_jsonl(std::istream& in, const std::string& source) {
    FitInputs out;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source + ":" + std::to_string(no);
        try {
            const json j = json::parse(line);
            if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
            auto num = [&](const char* key, double fallback, bool required) {
                if (!j.contains(key)) {
                    if (required) throw std::invalid_argument(std::string("missing '") + key + "'");
                    return fallback;
                }
                if (!j.at(key).is_number()) throw std::invalid_argument(std::string("'") + key + "' is not a number");
                return j.at(key).get<double>();
            };
            if (j.contains("T")) {
                fit::TestTimeCurve c;
                c.mu_rec = num("mu_rec", 0.0, true);
                c.N = num("N", 0.0, false);
                c.D = num("D", 0.0, false);
                c.T = j.at("T").get<std::vector<double>>();
                c.loss = j.at("loss").get<std::vector<double>>();
                fit::check_curve(c);
                out.curves.push_back(std::move(c));
            } else {
                fit::TrainingRecord r;
                r.mu_rec = num("mu_rec", 0.0, false);
                r.N = num("N", 0.0, true);
                r.D = num("D", 0.0, true);
                r.flops = num("flops", 0.0, false);
                r.loss = num("loss", 0.0, true);
                if (!(r.N > 0.0 && r.D > 0.0 && r.loss > 0.0))
                    throw std::invalid_argument("N, D and loss must be positive");
                out.records.push_back(r);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return out;
}

inline FitInputs read_fit_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return parse_fit_jsonl(in, path.string());
}

inline json to_json(const fit::TrainingRecord& r) {
    return {{"mu_rec", r.mu_rec}, {"N", r.N}, {"D", r.D}, {"flops", r.flops}, {"loss", r.loss}};
}

inline json to_json(const fit::TestTimeCurve& c) {
    return {{"mu_rec", c.mu_rec}, {"N", c.N}, {"D", c.D}, {"T", c.T}, {"loss", c.loss}};
}

inline json to_json(const fit::FitResult& r) {
    json coef = json::object();
    for (const auto& [k, v] : r.coefficients) coef[k] = v;
    return {{"law", r.law},
            {"coefficients", coef},
            {"huber_sum", r.huber_sum},
            {"huber_mean", r.huber_mean},
            {"reverified_sum", r.reverified_sum},
            {"points", r.points},
            {"restarts", r.restarts},
            {"best_restart", r.best_restart},
            {"line_search_failures", r.line_search_failures},
            {"converged", r.converged}};
}

}  // namespace looplab::io
