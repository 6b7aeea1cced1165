// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "langarith/analysis.hpp"
#include "langarith/error.hpp"
#include "langarith/serialization.hpp"
#include "langarith/sweep.hpp"
#include "langarith/tensor_store.hpp"
#include "langarith/ties_merging.hpp"
#include "langarith/vector_core.hpp"

namespace langarith {

namespace {

constexpr const char* kWorkdirEnv = "LANGARITH_WORKDIR";

const std::vector<std::string> kSubcommands = {"diff",   "merge", "ties-merge", "cossim",
                                               "sparsity", "sweep", "related",    "validate"};

/// JSON config: top-level keys are long option names of the active
/// subcommand; an object under a subcommand name scopes keys to it.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(std::string section) : section_(std::move(section)) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(input);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(fmt::format("config is not valid JSON: {}", e.what()));
        }
        if (!j.is_object())
            throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            const bool is_section =
                value.is_object() && std::find(kSubcommands.begin(), kSubcommands.end(), key) != kSubcommands.end();
            if (is_section) {
                for (const auto& [k, v] : value.items())
                    items.push_back(item(key, k, v));
            } else if (!section_.empty()) {
                items.push_back(item(section_, key, value));
            }
        }
        return items;
    }

private:
    static CLI::ConfigItem item(const std::string& parent, const std::string& name, const nlohmann::json& v) {
        CLI::ConfigItem it;
        it.parents = {parent};
        it.name = name;
        auto text = [](const nlohmann::json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
        if (v.is_array()) {
            for (const auto& x : v)
                it.inputs.push_back(text(x));
        } else {
            it.inputs.push_back(text(v));
        }
        return it;
    }

    std::string section_;
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool json = false;
};

DtypePolicy policy_from(const std::string& s) {
    auto p = parse_dtype_policy(s);
    if (!p)
        throw InvalidArgument(fmt::format("unknown dtype policy '{}' (preserve, fp32, fp16)", s));
    return *p;
}

DeltaVector load_delta(const std::string& path) {
    auto d = delta_from_checkpoint(load_checkpoint(path));
    if (d.label.empty())
        d.label = std::filesystem::path(path).stem().string();
    return d;
}

std::string label_of_file(const std::string& path) {
    CheckpointReader r(path);
    auto it = r.metadata().find(kLabelKey);
    return it != r.metadata().end() && !it->second.empty() ? it->second : std::filesystem::path(path).stem().string();
}

// -- diff ----------------------------------------------------------------------

struct DiffArgs {
    std::string base, finetuned, label, output, dtype = "preserve";
};

void run_diff(const DiffArgs& a, Context& ctx) {
    const auto pre = load_checkpoint(a.base);
    const auto ft = load_checkpoint(a.finetuned);
    const auto d = diff(ft, pre, a.label);
    save_checkpoint(to_checkpoint(d), a.output, policy_from(a.dtype));
    if (ctx.json) {
        ctx.out << nlohmann::json{{"output", a.output},
                                  {"label", d.label},
                                  {"tensors", d.tensors.size()},
                                  {"elements", d.tensors.element_count()},
                                  {"base_fingerprint", d.base_fingerprint}}
                       .dump()
                << '\n';
    } else {
        ctx.out << fmt::format("wrote delta '{}' ({} tensors, {} elements) to {}\n", d.label, d.tensors.size(),
                               d.tensors.element_count(), a.output);
    }
}

// -- merge ---------------------------------------------------------------------

struct MergeArgs {
    std::string base, output, recipe, target_language, dtype = "preserve";
    std::vector<std::string> deltas;
    bool normalize = false;
    bool force = false;
};

void run_merge(const MergeArgs& a, Context& ctx) {
    std::optional<MergeRecipe> from_file;
    if (!a.recipe.empty())
        from_file = read_json_file(a.recipe).get<MergeRecipe>();

    MergeRecipe recipe;
    recipe.normalize = a.normalize || (from_file && from_file->normalize);
    recipe.target_language = !a.target_language.empty() ? a.target_language
                             : from_file                 ? from_file->target_language
                                                         : std::string{};
    std::vector<WeightedDeltaFile> files;
    for (const auto& spec : a.deltas) {
        std::string path = spec;
        std::optional<double> weight;
        if (const auto colon = spec.rfind(':'); colon != std::string::npos) {
            try {
                std::size_t used = 0;
                const double w = std::stod(spec.substr(colon + 1), &used);
                if (used == spec.size() - colon - 1) {
                    weight = w;
                    path = spec.substr(0, colon);
                }
            } catch (const std::exception&) {
            }
        }
        const std::string label = label_of_file(path);
        if (!weight && from_file) {
            for (const auto& t : from_file->terms) {
                if (t.label == label)
                    weight = t.weight;
            }
        }
        if (!weight)
            throw InvalidArgument(fmt::format("no weight for delta '{}': use path:weight or a --recipe term", path));
        recipe.terms.push_back({label, *weight});
        files.push_back({path, *weight});
    }
    const auto weights = recipe.effective_weights();
    for (std::size_t i = 0; i < files.size(); ++i)
        files[i].weight = weights[i];

    stream_merge(a.base, files, a.output, policy_from(a.dtype), a.force);

    if (ctx.json) {
        nlohmann::json j = recipe;
        j["effective_weights"] = weights;
        j["output"] = a.output;
        ctx.out << j.dump() << '\n';
    } else {
        std::string terms;
        for (std::size_t i = 0; i < files.size(); ++i)
            terms += fmt::format("{}{}·{}", i ? " + " : "", weights[i], recipe.terms[i].label);
        ctx.out << fmt::format("wrote base + {} to {}\n", terms, a.output);
    }
}

// -- ties-merge ----------------------------------------------------------------

struct TiesArgs {
    std::string base, output, config, dtype = "preserve";
    std::vector<std::string> deltas;
    std::optional<double> top_k, lambda;
    bool force = false;
};

void run_ties(const TiesArgs& a, Context& ctx) {
    TiesConfig cfg;
    if (!a.config.empty())
        cfg = read_json_file(a.config).get<TiesConfig>();
    if (a.top_k)
        cfg.top_k_fraction = *a.top_k;
    if (a.lambda)
        cfg.lambda = *a.lambda;
    cfg.validate();

    const auto pre = load_checkpoint(a.base);
    std::vector<DeltaVector> ds;
    for (const auto& p : a.deltas)
        ds.push_back(load_delta(p));
    const auto merged = ties_merge(pre, ds, cfg, a.force);
    save_checkpoint(merged, a.output, policy_from(a.dtype));

    if (ctx.json) {
        ctx.out << nlohmann::json{{"output", a.output}, {"config", cfg}, {"deltas", a.deltas}}.dump() << '\n';
    } else {
        ctx.out << fmt::format("ties-merged {} deltas (keep {}, lambda {}) to {}\n", ds.size(), cfg.top_k_fraction,
                               cfg.lambda, a.output);
    }
}

// -- cossim --------------------------------------------------------------------

struct CossimArgs {
    std::vector<std::string> deltas;
    std::string csv;
};

void run_cossim(const CossimArgs& a, Context& ctx) {
    std::vector<DeltaVector> ds;
    for (const auto& p : a.deltas)
        ds.push_back(load_delta(p));
    const auto m = similarity_matrix(ds);

    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        if (!f)
            throw IoError(fmt::format("cannot write '{}'", a.csv));
        f << "label";
        for (const auto& l : m.labels)
            f << ',' << l;
        f << '\n';
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            f << m.labels[i];
            for (double v : m.values[i])
                f << ',' << fmt::format("{:.9g}", v);
            f << '\n';
        }
    }

    if (ctx.json) {
        ctx.out << nlohmann::json(m).dump() << '\n';
        return;
    }
    ctx.out << fmt::format("{:>10}", "");
    for (const auto& l : m.labels)
        ctx.out << fmt::format(" {:>8}", l);
    ctx.out << '\n';
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        ctx.out << fmt::format("{:>10}", m.labels[i]);
        for (double v : m.values[i])
            ctx.out << fmt::format(" {:>8.4f}", v);
        ctx.out << '\n';
    }
}

// -- sparsity ------------------------------------------------------------------

struct SparsityArgs {
    std::string delta;
    std::vector<double> thresholds = {1e-6, 1e-4, 1e-3, 1e-2};
    int bins = 20;
};

void run_sparsity(const SparsityArgs& a, Context& ctx) {
    const auto d = load_delta(a.delta);
    const auto r = sparsity_stats(d, a.thresholds, a.bins);
    if (ctx.json) {
        ctx.out << nlohmann::json(r).dump() << '\n';
        return;
    }
    ctx.out << fmt::format("{}: {} elements\n", r.label, r.total_elements);
    for (const auto& [t, f] : r.fraction_below)
        ctx.out << fmt::format("  |x| < {:<10g} {:.4f}\n", t, f);
    for (const auto& b : r.histogram)
        ctx.out << fmt::format("  [{:+.4e}, {:+.4e}] {}\n", b.lower, b.upper, b.count);
}

// -- sweep ---------------------------------------------------------------------

struct SweepArgs {
    std::string base, evaluator, workdir, target_language, mode = "la", dtype = "preserve";
    std::vector<std::string> deltas;
    std::optional<double> start, stop, step;
    double top_k = 0.2;
    int max_concurrency = 1;
    bool clean = false;
    bool force = false;
};

void run_sweep_cmd(const SweepArgs& a, Context& ctx) {
    const auto mode = parse_sweep_mode(a.mode);
    if (!mode)
        throw InvalidArgument(fmt::format("unknown sweep mode '{}' (la, ties)", a.mode));
    if (a.deltas.size() != 2)
        throw InvalidArgument("sweep takes exactly two --delta files");

    auto cfg = SweepConfig::defaults_for(*mode);
    if (a.start)
        cfg.grid_start = *a.start;
    if (a.stop)
        cfg.grid_stop = *a.stop;
    if (a.step)
        cfg.step = *a.step;
    cfg.evaluator = a.evaluator;
    cfg.max_concurrency = a.max_concurrency;
    cfg.target_language = a.target_language;
    cfg.ties_top_k = a.top_k;
    cfg.clean = a.clean;
    cfg.force = a.force;
    cfg.dtype_policy = policy_from(a.dtype);
    if (!a.workdir.empty())
        cfg.workdir = a.workdir;
    else if (const char* env = std::getenv(kWorkdirEnv); env != nullptr && *env != '\0')
        cfg.workdir = env;
    cfg.validate();

    const auto pre = load_checkpoint(a.base);
    const auto t1 = load_delta(a.deltas[0]);
    const auto t2 = load_delta(a.deltas[1]);
    const auto report = run_sweep(pre, t1, t2, cfg);

    if (ctx.json) {
        ctx.out << nlohmann::json(report).dump() << '\n';
        return;
    }
    for (const auto& e : report.entries) {
        ctx.out << fmt::format("lambda {:<6} score {:<12} {}\n", e.lambda,
                               std::isfinite(e.score) ? fmt::format("{:.6g}", e.score) : std::string("failed"),
                               e.error);
    }
    ctx.out << fmt::format("best lambda {} (score {:.6g}); report in {}\n", report.best_lambda, report.best_score,
                           cfg.workdir.string());
}

// -- related / validate --------------------------------------------------------

void run_related(const std::string& code, Context& ctx) {
    const auto& rel = related_language(code);
    if (ctx.json)
        ctx.out << nlohmann::json{{"code", code}, {"related", rel}}.dump() << '\n';
    else
        ctx.out << rel << '\n';
}

int run_validate(const std::vector<std::string>& files, Context& ctx) {
    if (files.size() == 1) {
        CheckpointReader r(files[0]);
        std::uint64_t elements = 0;
        std::size_t f16 = 0;
        for (const auto& i : r.tensors()) {
            elements += i.size();
            f16 += i.dtype == DType::F16;
        }
        if (ctx.json) {
            ctx.out << nlohmann::json{{"file", files[0]},
                                      {"valid", true},
                                      {"tensors", r.tensors().size()},
                                      {"elements", elements},
                                      {"f16_tensors", f16},
                                      {"metadata", r.metadata()}}
                           .dump()
                    << '\n';
        } else {
            ctx.out << fmt::format("{}: valid, {} tensors ({} FP16), {} elements\n", files[0], r.tensors().size(), f16,
                                   elements);
        }
        return kExitOk;
    }
    const auto a = load_checkpoint(files[0]);
    const auto b = load_checkpoint(files[1]);
    const auto report = validate_compat(a, b);
    if (ctx.json)
        ctx.out << nlohmann::json(report).dump() << '\n';
    else
        ctx.out << report.describe() << '\n';
    return report.compatible() ? kExitOk : kExitData;
}

} // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    std::string section;
    for (const auto& a : args) {
        if (std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end()) {
            section = a;
            break;
        }
    }

    Context ctx{out, err};
    CLI::App app{"Language arithmetic on adapter checkpoints", "langarith"};
    app.require_subcommand(1, 1);
    app.add_flag("--json", ctx.json, "Machine-readable JSON on stdout");
    app.config_formatter(std::make_shared<JsonConfig>(section));
    app.set_config("--config", "", "JSON file of option values; command-line flags take precedence");

    auto add_dtype = [](CLI::App* sub, std::string& target) {
        sub->add_option("--dtype", target, "Output dtype policy: preserve, fp32, fp16")->capture_default_str();
    };

    DiffArgs diff_args;
    auto* diff_cmd = app.add_subcommand("diff", "Extract a delta: finetuned - base");
    diff_cmd->add_option("--base", diff_args.base, "Base checkpoint")->required();
    diff_cmd->add_option("--finetuned", diff_args.finetuned, "Fine-tuned checkpoint")->required();
    diff_cmd->add_option("--label", diff_args.label, "Delta label, e.g. a language code")->required();
    diff_cmd->add_option("-o,--output", diff_args.output, "Output delta checkpoint")->required();
    add_dtype(diff_cmd, diff_args.dtype);

    MergeArgs merge_args;
    auto* merge_cmd = app.add_subcommand("merge", "Weighted merge: base + sum of weight * delta");
    merge_cmd->add_option("--base", merge_args.base, "Base checkpoint")->required();
    merge_cmd->add_option("--delta", merge_args.deltas, "Delta as path:weight (or path with --recipe)")->required();
    merge_cmd->add_flag("--normalize", merge_args.normalize, "Rescale weights to sum to one");
    merge_cmd->add_option("--recipe", merge_args.recipe, "Merge recipe JSON supplying weights by label");
    merge_cmd->add_option("--target-language", merge_args.target_language, "Target language code");
    merge_cmd->add_option("-o,--output", merge_args.output, "Output checkpoint")->required();
    merge_cmd->add_flag("--force", merge_args.force, "Skip the base fingerprint check");
    add_dtype(merge_cmd, merge_args.dtype);

    TiesArgs ties_args;
    auto* ties_cmd = app.add_subcommand("ties-merge", "Trim, elect signs, disjoint mean, scale by lambda");
    ties_cmd->add_option("--base", ties_args.base, "Base checkpoint")->required();
    ties_cmd->add_option("--delta", ties_args.deltas, "Delta checkpoint (repeatable)")->required();
    ties_cmd->add_option("--top-k", ties_args.top_k, "Fraction of entries kept by the trim (default 0.2)");
    ties_cmd->add_option("--lambda", ties_args.lambda, "Scale of the merged delta (default 1.0)");
    ties_cmd->add_option("--ties-config", ties_args.config, "TiesConfig JSON");
    ties_cmd->add_option("-o,--output", ties_args.output, "Output checkpoint")->required();
    ties_cmd->add_flag("--force", ties_args.force, "Skip the base fingerprint check");
    add_dtype(ties_cmd, ties_args.dtype);

    CossimArgs cossim_args;
    auto* cossim_cmd = app.add_subcommand("cossim", "Pairwise cosine similarity of deltas");
    cossim_cmd->add_option("deltas", cossim_args.deltas, "Delta checkpoints")->required()->expected(2, -1);
    cossim_cmd->add_option("--csv", cossim_args.csv, "Also write the matrix as CSV");

    SparsityArgs sparsity_args;
    auto* sparsity_cmd = app.add_subcommand("sparsity", "Magnitude fractions and histogram of a delta");
    sparsity_cmd->add_option("delta", sparsity_args.delta, "Delta checkpoint")->required();
    sparsity_cmd->add_option("--threshold", sparsity_args.thresholds, "Magnitude thresholds, ascending")
        ->capture_default_str();
    sparsity_cmd->add_option("--bins", sparsity_args.bins, "Histogram bins")->capture_default_str();

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid-search lambda with an external evaluator");
    sweep_cmd->add_option("--base", sweep_args.base, "Base checkpoint")->required();
    sweep_cmd->add_option("--delta", sweep_args.deltas, "The two deltas; lambda weights the first")->required();
    sweep_cmd->add_option("--evaluator", sweep_args.evaluator, "Evaluator command with {checkpoint}")->required();
    sweep_cmd->add_option("--start", sweep_args.start, "Grid start (0, or 0.8 for ties)");
    sweep_cmd->add_option("--stop", sweep_args.stop, "Grid stop, inclusive (1, or 1.8 for ties)");
    sweep_cmd->add_option("--step", sweep_args.step, "Grid step (0.05, or 0.1 for ties)");
    sweep_cmd->add_option("--mode", sweep_args.mode, "la or ties")->capture_default_str();
    sweep_cmd->add_option("--top-k", sweep_args.top_k, "Trim keep fraction for ties mode")->capture_default_str();
    sweep_cmd->add_option("--max-concurrency", sweep_args.max_concurrency, "Parallel evaluator processes")
        ->capture_default_str();
    sweep_cmd->add_option("--workdir", sweep_args.workdir, "Directory for merged checkpoints and reports");
    sweep_cmd->add_option("--target-language", sweep_args.target_language, "Passed to the evaluator");
    sweep_cmd->add_flag("--clean", sweep_args.clean, "Delete merged checkpoints after scoring");
    sweep_cmd->add_flag("--force", sweep_args.force, "Skip the base fingerprint check");
    add_dtype(sweep_cmd, sweep_args.dtype);

    std::string related_code;
    auto* related_cmd = app.add_subcommand("related", "Related language of a code");
    related_cmd->add_option("code", related_code, "Language code")->required();

    std::vector<std::string> validate_files;
    auto* validate_cmd = app.add_subcommand("validate", "Check one container, or the compatibility of two");
    validate_cmd->add_option("files", validate_files, "One or two checkpoints")->required()->expected(1, 2);

    for (auto* sub : app.get_subcommands({}))
        sub->fallthrough();

    try {
        std::vector<std::string> argv(args.rbegin(), args.rend());
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (diff_cmd->parsed())
            run_diff(diff_args, ctx);
        else if (merge_cmd->parsed())
            run_merge(merge_args, ctx);
        else if (ties_cmd->parsed())
            run_ties(ties_args, ctx);
        else if (cossim_cmd->parsed())
            run_cossim(cossim_args, ctx);
        else if (sparsity_cmd->parsed())
            run_sparsity(sparsity_args, ctx);
        else if (sweep_cmd->parsed())
            run_sweep_cmd(sweep_args, ctx);
        else if (related_cmd->parsed())
            run_related(related_code, ctx);
        else if (validate_cmd->parsed())
            return run_validate(validate_files, ctx);
        return kExitOk;
    } catch (const InvalidArgument& e) {
        err << "langarith: error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const EvaluatorError& e) {
        err << "langarith: error: " << e.what() << '\n';
        return kExitEvaluator;
    } catch (const std::exception& e) {
        err << "langarith: error: " << e.what() << '\n';
        return kExitData;
    }
}

} // namespace langarith
