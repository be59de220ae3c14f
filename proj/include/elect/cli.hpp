#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elect/benchmark.hpp"
#include "elect/dataset.hpp"
#include "elect/engine.hpp"
#include "elect/experiment.hpp"
#include "elect/mllm_http.hpp"
#include "elect/prompt_loop.hpp"
#include "elect/remote.hpp"
#include "elect/tensor_io.hpp"
#include "elect/trace_io.hpp"

namespace elect::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDenoiser = 3;

struct CliConfig {
    std::string denoiser = "synthetic";
    std::string source_path;
    std::string task_dir;
    std::string instruction = "apply the edit";
    std::uint64_t task_seed = 0;
    std::size_t task_index = 0;

    std::size_t n = 10;
    std::vector<std::uint64_t> seeds;
    int t_stop = 60;
    int steps = 100;
    std::string schedule = "diffusion";
    bool adaptive = false;
    double tau = 0.1;
    int ddc_window = 5;
    double s_img = 1.5;
    double s_txt = 7.5;
    bool hybrid_fg = false;
    std::string tweedie_source = "guided";
    bool no_null_image_branch = false;
    std::size_t jobs = default_jobs();

    std::string out = ".";
    bool trace = false;
    bool dump_maps = false;
    bool wall_clock = false;

    // bench
    std::size_t tasks = 100;
    std::vector<std::size_t> n_grid;
    std::vector<std::string> methods{"vanilla", "best_of_n", "elect", "elect_adaptive"};
    std::uint64_t bench_seed = 0;
    double delta_sigma = 0.3;
    double fg_jitter = 0.0;

    // prompt-edit
    std::string mllm = "mock-fail";
    std::size_t variants = 10;
    bool force = false;
    bool per_prompt_maps = false;
    std::string template_dir = ELECT_TEMPLATE_DIR;

    EngineConfig engine() const {
        EngineConfig c;
        c.n_candidates = seeds.empty() ? n : seeds.size();
        c.seeds = seeds;
        c.t_stop = t_stop;
        c.steps = steps;
        c.schedule = parse_schedule_kind(schedule);
        c.adaptive = adaptive;
        c.tau = tau;
        c.ddc_window = ddc_window;
        c.guidance = {s_img, s_txt};
        c.hybrid_fg = hybrid_fg;
        if (tweedie_source == "guided") {
            c.tweedie_source = TweedieSource::Guided;
        } else if (tweedie_source == "cond") {
            c.tweedie_source = TweedieSource::Conditional;
        } else {
            throw InvalidArgument("--tweedie-source must be 'guided' or 'cond'");
        }
        c.pooling = per_prompt_maps ? MapPooling::PerCandidate : MapPooling::Pooled;
        c.jobs = jobs;
        c.validate();
        return c;
    }
};

/// A resolved edit problem plus the denoiser that serves it.
struct Setup {
    EditTask task;
    std::shared_ptr<Denoiser> denoiser;
    std::shared_ptr<BenchTask> bench;                  // synthetic only
    std::shared_ptr<SyntheticEditDenoiser> synthetic;  // synthetic only
};

inline Setup build_setup(const CliConfig& cfg, const EngineConfig& ec) {
    Setup s;
    const std::string& spec = cfg.denoiser;
    auto load_source = [&] {
        if (!cfg.task_dir.empty()) {
            s.task = load_dataset_task(cfg.task_dir).task;
        } else if (!cfg.source_path.empty()) {
            s.task.source_latent = read_elct(cfg.source_path);
            s.task.instruction = cfg.instruction;
        } else {
            throw InvalidArgument("denoiser '" + spec + "' needs --source or --task-dir");
        }
    };

    if (spec == "synthetic") {
        if (!cfg.source_path.empty() || !cfg.task_dir.empty()) {
            throw InvalidArgument("the synthetic denoiser generates its own task; drop --source/--task-dir");
        }
        BenchParams params;
        params.delta_sigma = cfg.delta_sigma;
        params.fg_jitter = cfg.fg_jitter;
        auto suite = make_benchmark(cfg.task_seed, cfg.task_index + 1, params);
        s.bench = suite[cfg.task_index];
        s.task = s.bench->edit();
        s.synthetic = std::make_shared<SyntheticEditDenoiser>(s.bench, make_schedule(ec.schedule, ec.steps), ec.guidance);
        for (std::uint64_t seed : ec.resolved_seeds()) s.synthetic->register_seed(seed);
        s.denoiser = s.synthetic;
    } else if (spec.rfind("analytic:", 0) == 0) {
        load_source();
        Tensor target = read_elct(spec.substr(9));
        s.denoiser = std::make_shared<PointTargetDenoiser>(std::move(target), make_schedule(ec.schedule, ec.steps));
    } else if (spec.rfind("remote:", 0) == 0) {
        load_source();
        RemoteOptions opts;
        opts.timeout_ms = remote_timeout_ms_from_env();
        opts.mode = mode_for(ec.schedule);
        opts.has_null_image_branch = !cfg.no_null_image_branch;
        opts.pool_size = std::max<std::size_t>(1, cfg.jobs);
        s.denoiser = std::make_shared<RemoteDenoiser>(spec.substr(7), opts);
    } else {
        throw InvalidArgument("unknown --denoiser '" + spec + "' (synthetic | analytic:FILE | remote:URL)");
    }
    return s;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << j.dump(2) << '\n';
}

inline RunHooks map_dump_hooks(const std::filesystem::path& dir, const std::vector<std::uint64_t>& seeds) {
    RunHooks hooks;
    hooks.on_relevance = [dir, seeds](std::size_t cand, int t, const Tensor& map) {
        write_elct(map, dir / ("relmap_s" + std::to_string(seeds[cand]) + "_t" + std::to_string(t) + ".elct"));
    };
    return hooks;
}

inline void report_run(std::ostream& out, const SelectionTrace& tr) {
    out << tr.method << ": chosen seed " << tr.seeds[tr.chosen_id] << " (candidate " << tr.chosen_id << ") at step "
        << tr.actual_stop_step << ", nfe " << tr.nfe << ", model calls " << tr.model_calls << '\n';
}

inline int cmd_edit(const CliConfig& cfg, bool full_inference, bool trace_mode, std::ostream& out) {
    const EngineConfig ec = cfg.engine();
    Setup s = build_setup(cfg, ec);
    const std::filesystem::path dir = cfg.out;
    std::filesystem::create_directories(dir);
    RunHooks hooks;
    if (cfg.dump_maps || trace_mode) hooks = map_dump_hooks(dir, ec.resolved_seeds());

    RunResult res = full_inference ? best_of_n(s.task, *s.denoiser, ec, hooks) : elect_run(s.task, *s.denoiser, ec, hooks);
    write_elct(res.final_latent, dir / "final.elct");
    if (cfg.trace || trace_mode) write_trace(res.trace, dir / "trace.json", cfg.wall_clock);
    report_run(out, res.trace);
    if (s.bench && s.task.gt_mask) {
        const MetricsRow m = background_metrics(res.final_latent, s.task.source_latent, *s.task.gt_mask);
        out << "background mse " << detail::fmt_num(m.bg_mse) << ", psnr " << detail::fmt_num(m.psnr) << ", ssim "
            << detail::fmt_num(m.ssim) << '\n';
    }
    return kExitOk;
}

inline int cmd_bench(const CliConfig& cfg, std::ostream& out) {
    ExperimentConfig xc;
    xc.engine = cfg.engine();
    xc.jobs = cfg.jobs;
    xc.methods.clear();
    for (const auto& m : cfg.methods) xc.methods.push_back(parse_method(m));
    xc.n_grid = cfg.n_grid.empty() ? std::vector<std::size_t>{cfg.n} : cfg.n_grid;
    BenchParams params;
    params.delta_sigma = cfg.delta_sigma;
    params.fg_jitter = cfg.fg_jitter;
    for (std::size_t n : xc.n_grid) params.max_candidates = std::max(params.max_candidates, n);
    const auto suite = make_benchmark(cfg.bench_seed, cfg.tasks, params);
    const ExperimentReport report = run_experiment(suite, xc);
    write_report(report, cfg.out);
    out << "wrote " << (std::filesystem::path(cfg.out) / "results.csv").string() << " (" << report.rows.size()
        << " rows) and summary.json\n";
    return kExitOk;
}

inline std::unique_ptr<MllmClient> make_mllm(const CliConfig& cfg) {
    if (cfg.mllm == "mock") return std::make_unique<MockMllm>(EditJudgment{1.0, 1.0});
    if (cfg.mllm == "mock-fail") return std::make_unique<MockMllm>(EditJudgment{0.0, 1.0});
    if (cfg.mllm.rfind("http:", 0) == 0) {
        // "http:URL" where URL carries its own scheme, or a bare "http://host".
        std::string url = cfg.mllm.substr(5);
        if (url.find("://") == std::string::npos) url = cfg.mllm;
        return std::make_unique<HttpMllmClient>(url, MllmTemplates::load(cfg.template_dir), remote_timeout_ms_from_env());
    }
    throw InvalidArgument("unknown --mllm '" + cfg.mllm + "' (mock | mock-fail | http:URL)");
}

inline int cmd_prompt_edit(const CliConfig& cfg, std::ostream& out) {
    const EngineConfig ec = cfg.engine();
    Setup s = build_setup(cfg, ec);
    auto client = make_mllm(cfg);
    const std::filesystem::path dir = cfg.out;
    std::filesystem::create_directories(dir);

    const std::uint64_t shared = ec.resolved_seeds().front();
    auto prepare = [&](const std::vector<std::string>& variants) {
        if (s.synthetic) {
            for (const auto& v : variants) s.synthetic->register_track(shared, v);
        }
    };
    PromptRunResult res = elect_prompt_run(s.task, *s.denoiser, *client, ec, {cfg.variants, cfg.force}, prepare,
                                           [&](const std::string& w) { std::cerr << "warning: " << w << '\n'; });
    write_elct(res.final_latent(), dir / "final.elct");
    write_trace(res.seed_run.trace, dir / "trace_seed.json", cfg.wall_clock);
    if (res.prompt_run) write_trace(res.prompt_run->trace, dir / "trace_prompt.json", cfg.wall_clock);
    nlohmann::json summary{{"judgment", {{"IF", res.judgment.if_score}, {"BC", res.judgment.bc_score}}},
                           {"prompt_selection_ran", res.prompt_run.has_value()},
                           {"variants", res.variants}};
    if (res.prompt_run) summary["chosen_prompt"] = res.variants[res.prompt_run->trace.chosen_id];
    write_json(summary, dir / "prompt_selection.json");
    report_run(out, res.seed_run.trace);
    out << "judgment IF=" << res.judgment.if_score << " BC=" << res.judgment.bc_score << '\n';
    if (res.prompt_run) {
        report_run(out, res.prompt_run->trace);
        out << "chosen prompt: " << res.variants[res.prompt_run->trace.chosen_id] << '\n';
    }
    return kExitOk;
}

inline void add_engine_options(CLI::App& app, CliConfig& cfg) {
    app.add_option("--n", cfg.n, "Number of seed candidates")->check(CLI::PositiveNumber);
    app.add_option("--seeds", cfg.seeds, "Explicit seed list (overrides --n)")->delimiter(',');
    app.add_option("--t-stop", cfg.t_stop, "Step label where candidates are compared");
    app.add_option("--steps", cfg.steps, "Number of denoising steps T");
    app.add_option("--schedule", cfg.schedule, "diffusion | rectified-flow");
    app.add_flag("--adaptive", cfg.adaptive, "Pick the stop step with the diminishing-delta rule");
    app.add_option("--tau", cfg.tau, "Diminishing-delta threshold");
    app.add_option("--ddc-window", cfg.ddc_window, "Moving-average width for score deltas");
    app.add_option("--s-img", cfg.s_img, "Image guidance scale");
    app.add_option("--s-txt", cfg.s_txt, "Text guidance scale");
    app.add_flag("--hybrid-fg", cfg.hybrid_fg, "Use the hybrid background/foreground pick");
    app.add_option("--tweedie-source", cfg.tweedie_source, "guided | cond: prediction used for scoring projections");
    app.add_option("--jobs", cfg.jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    app.add_option("--out", cfg.out, "Output directory");
    app.add_flag("--wall-clock", cfg.wall_clock, "Include wall-clock time in trace files");
    app.add_option("--delta-sigma", cfg.delta_sigma, "Synthetic background deviation spread");
    app.add_option("--fg-jitter", cfg.fg_jitter, "Synthetic per-candidate edit strength spread");
}

inline void add_task_options(CLI::App& app, CliConfig& cfg) {
    app.add_option("--denoiser", cfg.denoiser, "synthetic | analytic:TARGET.elct | remote:URL");
    app.add_option("--source", cfg.source_path, "Source latent (.elct)");
    app.add_option("--task-dir", cfg.task_dir, "Dataset task directory");
    app.add_option("--instruction", cfg.instruction, "Edit instruction");
    app.add_option("--task-seed", cfg.task_seed, "Synthetic task generator seed");
    app.add_option("--task-index", cfg.task_index, "Synthetic task index");
    app.add_flag("--no-null-image-branch", cfg.no_null_image_branch, "Remote model has no null-image branch");
}

/// Entry point. Exit codes: 0 success, 2 configuration error, 3 denoiser or
/// transport failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Early-stopped candidate selection for instruction-guided diffusion editing", "elect"};
    app.require_subcommand(1);
    CliConfig cfg;

    auto* edit = app.add_subcommand("edit", "Select among seeds at the stop step and finish the winner");
    add_task_options(*edit, cfg);
    add_engine_options(*edit, cfg);
    edit->add_flag("--trace", cfg.trace, "Write trace.json");
    edit->add_flag("--dump-maps", cfg.dump_maps, "Write per-step relevance maps");

    auto* bestofn = app.add_subcommand("bestofn", "Run every seed to completion and keep the best");
    add_task_options(*bestofn, cfg);
    add_engine_options(*bestofn, cfg);
    bestofn->add_flag("--trace", cfg.trace, "Write trace.json");
    bestofn->add_flag("--dump-maps", cfg.dump_maps, "Write per-step relevance maps");

    auto* bench = app.add_subcommand("bench", "Synthetic benchmark: results.csv and summary.json");
    add_engine_options(*bench, cfg);
    bench->add_option("--tasks", cfg.tasks, "Number of synthetic tasks")->check(CLI::PositiveNumber);
    bench->add_option("--n-grid", cfg.n_grid, "Candidate counts to sweep (default: --n)")->delimiter(',');
    bench->add_option("--methods", cfg.methods, "vanilla,best_of_n,elect,elect_adaptive")->delimiter(',');
    bench->add_option("--seed", cfg.bench_seed, "Benchmark generator seed");

    auto* prompt = app.add_subcommand("prompt-edit", "Seed selection, then prompt selection if the judge fails it");
    add_task_options(*prompt, cfg);
    add_engine_options(*prompt, cfg);
    prompt->add_option("--mllm", cfg.mllm, "mock | mock-fail | http:URL");
    prompt->add_option("--variants", cfg.variants, "Number of instruction variants")->check(CLI::PositiveNumber);
    prompt->add_flag("--force", cfg.force, "Run prompt selection even if the seed result passes");
    prompt->add_flag("--per-prompt-maps", cfg.per_prompt_maps, "Weight each prompt by its own relevance maps");
    prompt->add_option("--templates", cfg.template_dir, "Directory with the MLLM template files");

    auto* trace = app.add_subcommand("trace", "Run selection and dump per-step scores and relevance maps");
    add_task_options(*trace, cfg);
    add_engine_options(*trace, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    auto denoiser_failure = [&](const std::string& what) {
        err << "error: denoiser failure: " << what << '\n';
        return kExitDenoiser;
    };
    try {
        if (*edit) return cmd_edit(cfg, false, false, out);
        if (*bestofn) return cmd_edit(cfg, true, false, out);
        if (*bench) return cmd_bench(cfg, out);
        if (*prompt) return cmd_prompt_edit(cfg, out);
        if (*trace) return cmd_edit(cfg, false, true, out);
    } catch (const RunAborted& e) {
        err << "partial trace: " << e.partial.per_step.size() << " steps, nfe " << e.partial.nfe << '\n';
        return denoiser_failure(e.what());
    } catch (const TransportError& e) {
        return denoiser_failure(std::string(e.what()) + " (attempts: " + std::to_string(e.attempts) + ")");
    } catch (const ProtocolError& e) {
        return denoiser_failure(e.what());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace elect::cli
