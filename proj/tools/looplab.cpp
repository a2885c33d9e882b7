// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// looplab command-line tool. Exit codes: 0 success, 1 usage, 2 runtime error,
// 3 training halted on divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "looplab/looplab.hpp"

namespace fs = std::filesystem;
using namespace looplab;
using io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitHalted = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV cell for a double: shortest round-trip text, or nan/inf.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return json(v).dump();
}

/// Output sink: a file when a path is given, stdout otherwise.
class Output {
   public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw std::runtime_error("cannot write '" + path + "'");
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

   private:
    std::ofstream file_;
};

/// "1,2,4", "1..8" and mixtures like "1..4,8,16".
std::vector<long> parse_long_list(const std::string& text) {
    std::vector<long> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            const auto dots = item.find("..");
            if (dots == std::string::npos) {
                out.push_back(std::stol(item));
                continue;
            }
            const long lo = std::stol(item.substr(0, dots)), hi = std::stol(item.substr(dots + 2));
            if (hi < lo) throw UsageError("empty range '" + item + "'");
            for (long v = lo; v <= hi; ++v) out.push_back(v);
        } catch (const std::logic_error&) {
            throw UsageError("cannot parse '" + item + "' as an integer or range");
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw UsageError("cannot parse '" + item + "' as a number");
        }
    }
    return out;
}

/// Dedupe keeping the first occurrence.
std::vector<long> unique_stable(const std::vector<long>& v) {
    std::vector<long> out;
    for (long x : v)
        if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
    return out;
}

/// Applies "a.b.c=value" to a JSON tree; value is parsed as JSON, else taken as a string.
void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::stringstream ss(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) keys.push_back(key);
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->contains(keys[i])) (*node)[keys[i]] = json::object();
        node = &(*node)[keys[i]];
    }
    (*node)[keys.back()] = value;
}

fs::path run_root() {
    const char* env = std::getenv("LOOPLAB_RUN_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

Corpus open_corpus(const io::CorpusSpec& spec) {
    if (spec.synthetic()) return make_corpus(synthetic_text(spec.synthetic_bytes, spec.synthetic_seed), spec.val_frac);
    return looplab::load_corpus(spec.path, spec.val_frac);
}

/// Model config from a run config ({"model": ...}) or a bare model object.
json model_json_of(const json& j) { return j.contains("model") ? j.at("model") : j; }

ModelConfig read_model_config(const std::string& path) {
    if (path.empty()) return ModelConfig{};
    return io::model_config_from_json(model_json_of(io::read_json_file(path)));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string name;
    std::string run_dir;
    bool force = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    json raw = io::read_json_file(a.config);
    for (const auto& o : a.overrides) apply_override(raw, o);
    io::RunConfig rc = io::run_config_from_json(raw);
    if (!a.name.empty()) rc.name = a.name;
    if (!rc.corpus.synthetic()) rc.corpus.path = fs::absolute(rc.corpus.path).lexically_normal().string();

    // Everything that can fail on bad input happens before the run directory exists.
    const Corpus corpus = open_corpus(rc.corpus);
    if (corpus.train.size() < rc.train.seq_len + 1) throw std::runtime_error("corpus is too short for seq_len");
    const json echo = io::to_json(rc);
    if (rc.name.empty()) rc.name = "run-" + hex64(fnv1a64(echo.dump().data(), echo.dump().size())).substr(0, 10);
    const fs::path dir = a.run_dir.empty() ? run_root() / rc.name : fs::path(a.run_dir);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!a.force) throw std::runtime_error("run directory '" + dir.string() + "' exists (use --force to replace)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir / "checkpoints");
    io::write_text_file(dir / "config.json", io::to_json(rc).dump(2) + "\n");
    const json run_info{{"seed", rc.train.seed},
                        {"corpus_hash", corpus.hash},
                        {"corpus_bytes", corpus.bytes},
                        {"corpus_documents", corpus.documents},
                        {"train_tokens", corpus.train.size()},
                        {"validation_tokens", corpus.validation.size()},
                        {"looplab_version", kVersion},
                        {"checkpoint_version", io::kCheckpointVersion}};
    io::write_text_file(dir / "run.json", run_info.dump(2) + "\n");

    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary), evals(dir / "evals.jsonl", std::ios::binary);
    if (!metrics || !evals) throw std::runtime_error("cannot open metric files in '" + dir.string() + "'");
    LoopedModel model(rc.train.model);
    const auto t0 = std::chrono::steady_clock::now();
    TrainHooks hooks;
    hooks.on_metric = [&](const MetricRecord& r) {
        metrics << json{{"step", r.step},           {"loss", r.loss}, {"state_norm", r.state_norm},
                        {"residual", r.residual},   {"rho", r.rho},   {"lr", r.lr},
                        {"tokens", r.tokens},       {"grad_norm", r.grad_norm}}
                       .dump()
                << "\n";
        metrics.flush();
        if (!a.quiet) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "step %6ld  loss %.4f  |h| %.3g  rho %.4f  %.1fs\n", r.step, r.loss, r.state_norm, r.rho,
                         secs);
        }
    };
    hooks.on_eval = [&](const EvalRecord& r) {
        evals << json{{"step", r.step}, {"T", r.T}, {"loss", r.loss}}.dump() << "\n";
        evals.flush();
        if (!a.quiet) std::fprintf(stderr, "eval  step %6ld  T %3ld  loss %.4f\n", r.step, r.T, r.loss);
    };
    hooks.on_checkpoint = [&](const LoopedModel& m, long step, const std::string& reason) {
        char file[64];
        std::snprintf(file, sizeof file, "%s_%08ld.ckpt", reason == "halt" ? "halt" : "step", step);
        json meta{{"step", step},
                  {"reason", reason},
                  {"run", rc.name},
                  {"seq_len", rc.train.seq_len},
                  {"mu_rec", rc.train.mu_rec},
                  {"mu_bwd", rc.train.resolved_mu_bwd()},
                  {"corpus", io::to_json(rc.corpus)},
                  {"corpus_hash", corpus.hash}};
        io::save_checkpoint(dir / "checkpoints" / file, m, meta);
    };
    const TrainResult res = run_training(rc.train, model, corpus.train, corpus.validation, hooks);

    json summary{{"steps_done", res.steps_done},
                 {"halted", res.halted},
                 {"halt_reason", res.halt_reason},
                 {"max_state_norm", res.max_state_norm},
                 {"rho_at_end", res.rho_at_end}};
    json final_evals = json::array();
    for (const auto& e : res.evals)
        if (e.step == res.steps_done) final_evals.push_back({{"T", e.T}, {"loss", e.loss}});
    summary["final_evals"] = final_evals;
    io::write_text_file(dir / "result.json", summary.dump(2) + "\n");
    std::cout << dir.string() << "\n";
    if (res.halted) {
        std::fprintf(stderr, "halted at step %ld: %s\n", res.steps_done, res.halt_reason.c_str());
        return kExitHalted;
    }
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct CorpusArgs {
    std::string path;
    std::size_t synthetic_bytes = 0;
    std::uint64_t synthetic_seed = 1;
    double val_frac = 0.1;
};

/// Corpus from the flags, else the one recorded in the checkpoint.
io::CorpusSpec corpus_from(const CorpusArgs& c, const json& meta) {
    io::CorpusSpec spec;
    if (!c.path.empty() || c.synthetic_bytes > 0) {
        spec.path = c.path;
        spec.synthetic_bytes = c.synthetic_bytes;
        spec.synthetic_seed = c.synthetic_seed;
        spec.val_frac = c.val_frac;
        if (!spec.path.empty() && spec.synthetic_bytes) throw UsageError("--corpus and --synthetic-bytes are exclusive");
        return spec;
    }
    if (meta.contains("corpus")) return io::corpus_spec_from_json(meta.at("corpus"));
    throw UsageError("no corpus given and the checkpoint does not record one");
}

struct EvalArgs {
    std::string checkpoint;
    CorpusArgs corpus;
    std::string depths = "1..8";
    std::size_t seq_len = 0;
    std::size_t windows = 64;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    const auto depths = unique_stable(parse_long_list(a.depths));
    if (depths.empty()) throw UsageError("--depths is empty");
    for (long T : depths)
        if (T < 1) throw UsageError("depths must be >= 1");
    const auto ck = io::load_checkpoint(a.checkpoint);
    const auto corpus = open_corpus(corpus_from(a.corpus, ck.meta));
    const std::size_t L = a.seq_len ? a.seq_len : ck.meta.value("seq_len", std::size_t{64});
    const auto& tokens = corpus.validation.size() > L ? corpus.validation : corpus.train;
    Output out(a.out);
    out.stream() << "T,loss\n";
    for (long T : depths) out.stream() << T << "," << num(evaluate(ck.model, tokens, T, L, a.windows)) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- stability-scan

struct ScanArgs {
    std::vector<std::string> paths;
    long depth = 0;
    std::size_t seq_len = 32;
    std::size_t probe_seqs = 2;
    std::string out;
};

std::vector<fs::path> checkpoint_series(const std::vector<std::string>& paths) {
    std::vector<fs::path> files;
    for (const auto& p : paths) {
        if (fs::is_regular_file(p)) {
            files.emplace_back(p);
            continue;
        }
        if (!fs::is_directory(p)) throw std::runtime_error("'" + p + "' is neither a checkpoint nor a directory");
        std::vector<fs::path> found;
        for (const fs::path& dir : {fs::path(p), fs::path(p) / "checkpoints"}) {
            if (!fs::is_directory(dir)) continue;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && e.path().extension() == ".ckpt") found.push_back(e.path());
        }
        std::sort(found.begin(), found.end());
        files.insert(files.end(), found.begin(), found.end());
    }
    return files;
}

int cmd_stability_scan(const ScanArgs& a) {
    const auto files = checkpoint_series(a.paths);
    Output out(a.out);
    out.stream() << "step,rho,regime,max_state_norm,checkpoint\n";
    for (const auto& f : files) {
        const auto ck = io::load_checkpoint(f);
        const double rho = ck.model.injection_rho();
        const long T = a.depth > 0 ? a.depth : ck.meta.value("mu_rec", 4L);
        const std::size_t L = a.seq_len;
        Rng rng(0x5ca7);
        std::vector<int> tokens(a.probe_seqs * L);
        for (auto& t : tokens) t = static_cast<int>(rng.below(kByteVocab));
        const Tensor h0 = init_state_batch(a.probe_seqs, L, ck.model.config.d, ck.model.config.state_sigma(), 0x5ca7);
        double max_norm = 0.0;
        {
            NoGradGuard no_grad;
            const auto fwd = parcae_forward(ck.model, tokens, L, T, h0);
            for (double v : fwd.state.state_norms) max_norm = std::isfinite(v) ? std::max(max_norm, v) : v;
        }
        out.stream() << ck.step() << "," << num(rho) << "," << regime_name(classify(rho).regime) << "," << num(max_norm)
                     << "," << f.string() << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string input;
    std::string law = "training";
    std::string form = "exp-decay";
    std::string gamma = "both";
    int restarts = 64;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t grid = 41;
};

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1));
    return g;
}

void write_curve_predictions(std::ostream& os, const std::vector<fit::TestTimeCurve>& curves, const std::string& label,
                             const fit::Law& law, const fit::FitResult& r, std::optional<std::size_t> only = {}) {
    for (std::size_t i = 0; i < curves.size(); ++i) {
        if (only && *only != i) continue;
        for (const auto& p : fit::curve_points(curves[i]))
            os << i << "," << label << "," << num(p.mu) << "," << num(p.T) << "," << num(p.loss) << ","
               << num(fit::predict(law, r, p)) << "\n";
    }
}

int cmd_fit(const FitArgs& a) {
    if (a.restarts < 1) throw UsageError("--restarts must be >= 1");
    if (a.grid < 2) throw UsageError("--grid must be >= 2");
    const auto in = io::read_fit_jsonl(a.input);
    fit::FitOptions opt;
    opt.restarts = a.restarts;
    opt.seed = a.seed;
    json result;
    const bool files = !a.out_dir.empty();
    if (files) fs::create_directories(a.out_dir);
    auto open = [&](const std::string& name) {
        std::ofstream f(fs::path(a.out_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + name + "'");
        return f;
    };

    if (a.law == "training") {
        const auto r = fit::fit_training_law(in.records, opt);
        result = io::to_json(r);
        if (files) {
            double nlo = 1e300, nhi = 0, dlo = 1e300, dhi = 0;
            for (const auto& rec : in.records) {
                nlo = std::min(nlo, rec.N), nhi = std::max(nhi, rec.N);
                dlo = std::min(dlo, rec.D), dhi = std::max(dhi, rec.D);
            }
            const auto law = fit::training_law();
            auto grid = open("isoloss_grid.csv");
            grid << "N,D,loss\n";
            for (double N : log_grid(nlo, nhi, a.grid))
                for (double D : log_grid(dlo, dhi, a.grid))
                    grid << num(N) << "," << num(D) << "," << num(fit::predict(law, r, {0, 0, N, D, 0})) << "\n";
            auto res = open("residuals.csv");
            res << "mu_rec,N,D,loss,predicted\n";
            for (const auto& rec : in.records)
                res << num(rec.mu_rec) << "," << num(rec.N) << "," << num(rec.D) << "," << num(rec.loss) << ","
                    << num(fit::predict(law, r, {rec.mu_rec, rec.mu_rec, rec.N, rec.D, rec.loss})) << "\n";
        }
    } else if (a.law == "ttc") {
        if (in.curves.empty()) throw std::runtime_error("no test-time curves in '" + a.input + "'");
        std::vector<fit::TtcForm> forms;
        if (a.form == "all") forms = fit::all_forms();
        else forms.push_back(fit::parse_form(a.form));
        result = json::array();
        std::ofstream curves;
        if (files) {
            curves = open("curves.csv");
            curves << "curve,form,mu_rec,T,loss,predicted\n";
        }
        for (std::size_t i = 0; i < in.curves.size(); ++i)
            for (auto form : forms) {
                const auto r = fit::fit_ttc_curve(in.curves[i], form, opt);
                json j = io::to_json(r);
                j["curve"] = i;
                j["mu_rec"] = in.curves[i].mu_rec;
                result.push_back(j);
                if (files) write_curve_predictions(curves, in.curves, fit::form_name(form), fit::ttc_law(form), r, i);
            }
    } else if (a.law == "forms") {
        if (in.curves.empty()) throw std::runtime_error("no test-time curves in '" + a.input + "'");
        const auto rows = fit::functional_form_report(in.curves, opt);
        result = json::array();
        for (const auto& row : rows)
            result.push_back({{"form", row.form},
                              {"in_distribution_mean", row.in_dist_mean},
                              {"in_distribution_sum", row.in_dist_sum},
                              {"extrapolation_mean", row.extrap_mean},
                              {"extrapolation_sum", row.extrap_sum},
                              {"curves", row.curves},
                              {"extrapolation_curves", row.extrap_curves}});
        if (files) {
            auto t = open("forms.csv");
            t << "form,in_distribution_mean,in_distribution_sum,extrapolation_mean,extrapolation_sum\n";
            for (const auto& row : rows)
                t << row.form << "," << num(row.in_dist_mean) << "," << num(row.in_dist_sum) << "," << num(row.extrap_mean)
                  << "," << num(row.extrap_sum) << "\n";
        }
    } else if (a.law == "unified") {
        std::vector<fit::GammaMode> modes;
        if (a.gamma == "fixed" || a.gamma == "both") modes.push_back(fit::GammaMode::fixed_one);
        if (a.gamma == "learned" || a.gamma == "both") modes.push_back(fit::GammaMode::learned);
        if (modes.empty()) throw UsageError("--gamma must be fixed, learned or both");
        result = json::object();
        std::vector<fit::FitResult> fits;
        for (auto m : modes) {
            fits.push_back(fit::fit_unified(in.curves, in.records, m, opt));
            result[m == fit::GammaMode::learned ? "learned" : "fixed"] = io::to_json(fits.back());
        }
        if (files) {
            auto t = open("coefficients.csv");
            t << "coefficient";
            for (auto m : modes) t << "," << (m == fit::GammaMode::learned ? "learned" : "fixed");
            t << "\n";
            for (const auto& name : {"E", "X", "x", "Y", "y", "Z", "z", "gamma"}) {
                t << name;
                for (const auto& f : fits) {
                    double v = std::string(name) == "gamma" ? 1.0 : 0.0;
                    try {
                        v = f.get(name);
                    } catch (const std::out_of_range&) {
                    }
                    t << "," << num(v);
                }
                t << "\n";
            }
            t << "huber_sum";
            for (const auto& f : fits) t << "," << num(f.huber_sum);
            t << "\nhuber_mean";
            for (const auto& f : fits) t << "," << num(f.huber_mean);
            t << "\n";
            auto c = open("curves.csv");
            c << "curve,gamma,mu_rec,T,loss,predicted\n";
            for (std::size_t k = 0; k < modes.size(); ++k)
                write_curve_predictions(c, in.curves, modes[k] == fit::GammaMode::learned ? "learned" : "fixed",
                                        fit::unified_law(modes[k]), fits[k]);
        }
    } else {
        throw UsageError("--law must be training, ttc, forms or unified");
    }
    const std::string text = result.dump(2) + "\n";
    if (files) io::write_text_file(fs::path(a.out_dir) / "fit.json", text);
    std::cout << text;
    return kExitOk;
}

// ---------------------------------------------------------------- flops / isoflop-plan

struct FlopsArgs {
    std::string config;
    double mu_rec = 4;
    double mu_bwd = -1;  // negative: the default rule
    double tokens = 1e9;
    double seq_len = 64;
};

int cmd_flops(const FlopsArgs& a) {
    const ModelConfig c = read_model_config(a.config);
    const double mu_bwd = a.mu_bwd >= 0 ? a.mu_bwd : std::ceil(a.mu_rec / 2.0);
    const auto p = effective_params(c, a.mu_rec);
    const auto b = training_flops(c, a.mu_rec, mu_bwd, a.tokens, a.seq_len);
    const json j{{"mu_rec", a.mu_rec},
                 {"mu_bwd", mu_bwd},
                 {"seq_len", a.seq_len},
                 {"per_loop_params", p.per_loop},
                 {"prelude_coda_params", p.prelude_coda},
                 {"effective_params", p.effective},
                 {"N_hat1", b.N_hat1},
                 {"N_hat2", b.N_hat2},
                 {"tokens", b.D},
                 {"attention_flops", b.attention},
                 {"total_flops", b.total},
                 {"flops_per_token", flops_per_token(c, a.mu_rec, mu_bwd, a.seq_len)}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

struct IsoflopArgs {
    std::string config;
    std::string budgets;
    std::string mu_recs;
    double seq_len = 64;
    double tokens_per_step = 0;
    bool full_backprop = false;
    std::string out;
};

int cmd_isoflop_plan(const IsoflopArgs& a) {
    const ModelConfig c = read_model_config(a.config);
    const auto budgets = parse_double_list(a.budgets);
    const auto mus = parse_long_list(a.mu_recs);
    if (budgets.empty() || mus.empty()) throw UsageError("need at least one budget and one mu_rec");
    for (long m : mus)
        if (m < 1) throw UsageError("mu_rec values must be >= 1");
    const bool full = a.full_backprop;
    const auto cells = isoflop_plan(c, budgets, mus, a.seq_len, [full](long m) { return full ? m : mu_bwd_rule(m); },
                                    a.tokens_per_step);
    Output out(a.out);
    out.stream() << "budget,mu_rec,mu_bwd,tokens,tokens_rounded,repriced,rel_error,steps\n";
    for (const auto& cell : cells)
        out.stream() << num(cell.budget) << "," << cell.mu_rec << "," << cell.mu_bwd << "," << num(cell.tokens) << ","
                     << num(cell.tokens_rounded) << "," << num(cell.repriced) << ","
                     << num(std::abs(cell.repriced - cell.budget) / cell.budget) << "," << num(cell.steps) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- sample-audit

struct AuditArgs {
    std::string config;
    std::vector<std::string> overrides;
    long steps = 10;
    long first_step = 0;
    std::string out;
};

int cmd_sample_audit(const AuditArgs& a) {
    json raw = a.config.empty() ? json::object() : io::read_json_file(a.config);
    for (const auto& o : a.overrides) apply_override(raw, o);
    TrainConfig cfg;
    if (raw.contains("model")) cfg.model = io::model_config_from_json(raw.at("model"));
    if (raw.contains("train")) cfg = io::train_config_from_json(raw.at("train"), cfg);
    cfg.validate();
    if (a.steps < 0 || a.first_step < 0) throw UsageError("--steps and --first-step must be nonnegative");
    Output out(a.out);
    for (long step = a.first_step; step < a.first_step + a.steps; ++step) {
        const auto s = step_schedule(cfg, step);
        json seqs = json::array();
        for (const auto& q : s.seqs) seqs.push_back({{"stream", q.stream}, {"T", q.T}, {"n", q.n}, {"k", q.k}, {"tau", q.tau}});
        out.stream() << json{{"step", step}, {"T_max", s.T_max}, {"mu_bwd", s.mu_bwd}, {"grad_start", s.grad_start()},
                             {"seqs", seqs}}
                            .dump()
                     << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"looplab: looped language models with stable injection, depth sampling and scaling-law fits"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    std::function<int()> action;

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a model; writes a run directory");
    t->add_option("-c,--config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
    t->add_option("--set", train.overrides, "Override a config key, e.g. train.lr=1e-3");
    t->add_option("--name", train.name, "Run name (directory under the run root)");
    t->add_option("--run-dir", train.run_dir, "Explicit run directory");
    t->add_flag("--force", train.force, "Replace an existing run directory");
    t->add_flag("-q,--quiet", train.quiet, "No progress on stderr");
    t->callback([&] { action = [&] { return cmd_train(train); }; });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Validation loss of a checkpoint at several depths (CSV)");
    e->add_option("checkpoint", ev.checkpoint, "Checkpoint file")->required();
    e->add_option("--corpus", ev.corpus.path, "Corpus file (default: the one recorded in the checkpoint)");
    e->add_option("--synthetic-bytes", ev.corpus.synthetic_bytes, "Use the built-in generator instead");
    e->add_option("--synthetic-seed", ev.corpus.synthetic_seed);
    e->add_option("--val-frac", ev.corpus.val_frac);
    e->add_option("-T,--depths", ev.depths, "Depths, e.g. 1..8 or 1,2,4,8")->capture_default_str();
    e->add_option("--seq-len", ev.seq_len, "Window length (default: training seq_len)");
    e->add_option("--windows", ev.windows, "Validation windows")->capture_default_str();
    e->add_option("-o,--out", ev.out, "CSV path (default stdout)");
    e->callback([&] { action = [&] { return cmd_eval(ev); }; });

    ScanArgs scan;
    auto* s = app.add_subcommand("stability-scan", "Spectral radius and state norm over checkpoints (CSV)");
    s->add_option("paths", scan.paths, "Checkpoint files or run directories");
    s->add_option("-T,--depth", scan.depth, "Loops for the state-norm probe (default: mu_rec of the run)");
    s->add_option("--seq-len", scan.seq_len)->capture_default_str();
    s->add_option("--probe-seqs", scan.probe_seqs)->capture_default_str();
    s->add_option("-o,--out", scan.out, "CSV path (default stdout)");
    s->callback([&] { action = [&] { return cmd_stability_scan(scan); }; });

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "Fit a scaling law to JSONL records or curves");
    f->add_option("input", fa.input, "JSONL file")->required();
    f->add_option("--law", fa.law, "training, ttc, forms or unified")->capture_default_str();
    f->add_option("--form", fa.form, "ttc form: exp-decay, shifted-power, power, power-no-floor or all")
        ->capture_default_str();
    f->add_option("--gamma", fa.gamma, "unified law: fixed, learned or both")->capture_default_str();
    f->add_option("--restarts", fa.restarts)->capture_default_str();
    f->add_option("--seed", fa.seed)->capture_default_str();
    f->add_option("--out-dir", fa.out_dir, "Write fit.json and CSV grids here");
    f->add_option("--grid", fa.grid, "Points per axis of the iso-loss grid")->capture_default_str();
    f->callback([&] { action = [&] { return cmd_fit(fa); }; });

    FlopsArgs fl;
    auto* fo = app.add_subcommand("flops", "Effective parameters and training FLOPs (JSON)");
    fo->add_option("-c,--config", fl.config, "Model or run config JSON (default: built-in model)");
    fo->add_option("--mu-rec", fl.mu_rec)->capture_default_str();
    fo->add_option("--mu-bwd", fl.mu_bwd, "Default: ceil(mu_rec / 2)");
    fo->add_option("--tokens", fl.tokens)->capture_default_str();
    fo->add_option("--seq-len", fl.seq_len)->capture_default_str();
    fo->callback([&] { action = [&] { return cmd_flops(fl); }; });

    IsoflopArgs iso;
    auto* i = app.add_subcommand("isoflop-plan", "Token budget per (FLOP budget, mu_rec) cell (CSV)");
    i->add_option("-c,--config", iso.config, "Model or run config JSON (default: built-in model)");
    i->add_option("--budgets", iso.budgets, "Comma-separated FLOP budgets")->required();
    i->add_option("--mu-recs", iso.mu_recs, "Comma-separated mean depths")->required();
    i->add_option("--seq-len", iso.seq_len)->capture_default_str();
    i->add_option("--tokens-per-step", iso.tokens_per_step, "Also report optimizer steps");
    i->add_flag("--full-backprop", iso.full_backprop, "mu_bwd = mu_rec instead of ceil(mu_rec / 2)");
    i->add_option("-o,--out", iso.out, "CSV path (default stdout)");
    i->callback([&] { action = [&] { return cmd_isoflop_plan(iso); }; });

    AuditArgs au;
    auto* sa = app.add_subcommand("sample-audit", "Depth schedules a training run would use (JSONL)");
    sa->add_option("-c,--config", au.config, "Run config JSON");
    sa->add_option("--set", au.overrides, "Override a config key, e.g. train.mu_rec=8");
    sa->add_option("--steps", au.steps)->capture_default_str();
    sa->add_option("--first-step", au.first_step)->capture_default_str();
    sa->add_option("-o,--out", au.out, "JSONL path (default stdout)");
    sa->callback([&] { action = [&] { return cmd_sample_audit(au); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return action();
    } catch (const UsageError& err) {
        std::cerr << "looplab: " << err.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "looplab: " << err.what() << "\n";
        return kExitRuntime;
    }
}
