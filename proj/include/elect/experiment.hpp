#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elect/benchmark.hpp"
#include "elect/engine.hpp"
#include "elect/metrics.hpp"
#include "elect/parallel.hpp"
#include "elect/robust_stats.hpp"

namespace elect {

enum class Method { Vanilla, BestOfN, Elect, ElectAdaptive };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::Vanilla: return "vanilla";
        case Method::BestOfN: return "best_of_n";
        case Method::Elect: return "elect";
        case Method::ElectAdaptive: return "elect_adaptive";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "vanilla") return Method::Vanilla;
    if (s == "best_of_n" || s == "bestofn") return Method::BestOfN;
    if (s == "elect") return Method::Elect;
    if (s == "elect_adaptive") return Method::ElectAdaptive;
    throw InvalidArgument("unknown method '" + std::string(s) + "'");
}

struct ExperimentConfig {
    std::vector<Method> methods{Method::Vanilla, Method::BestOfN, Method::Elect, Method::ElectAdaptive};
    std::vector<std::size_t> n_grid{1, 3, 5, 10};
    EngineConfig engine;  // t_stop, steps, schedule, guidance, DDC parameters
    std::size_t jobs = 1;
};

struct ExperimentRow {
    std::size_t task = 0;
    Method method = Method::Vanilla;
    std::size_t n = 1;
    int stop_step = 0;
    std::uint64_t chosen_seed = 0;
    std::uint64_t gt_best_seed = 0;
    double gt_bg_mse_chosen = 0.0;
    MetricsRow metrics;
    std::uint64_t model_calls = 0;
};

struct ParetoPoint {
    std::string method;
    std::size_t n = 0;
    double nfe = 0.0;
    double median_bg_mse = 0.0;
};

/// Points not dominated by any other (no other point has nfe <= and
/// mse <= with at least one strict), sorted by nfe.
inline std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points) {
    std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        if (a.nfe != b.nfe) return a.nfe < b.nfe;
        return a.median_bg_mse < b.median_bg_mse;
    });
    std::vector<ParetoPoint> front;
    for (const auto& p : points) {
        const bool dominated = std::any_of(points.begin(), points.end(), [&](const ParetoPoint& q) {
            return q.nfe <= p.nfe && q.median_bg_mse <= p.median_bg_mse &&
                   (q.nfe < p.nfe || q.median_bg_mse < p.median_bg_mse);
        });
        if (!dominated) front.push_back(p);
    }
    return front;
}

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    nlohmann::json summary;
};

namespace detail {

inline ExperimentRow run_one(const BenchTask& task, const std::shared_ptr<const BenchTask>& shared, Method method,
                             std::size_t n, const EngineConfig& base) {
    EngineConfig cfg = base;
    cfg.n_candidates = n;
    cfg.seeds.clear();
    cfg.jobs = 1;
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.steps);
    SyntheticEditDenoiser oracle(shared, sched, cfg.guidance);
    for (std::uint64_t s = 1; s <= n; ++s) oracle.register_seed(s);

    RunResult res;
    switch (method) {
        case Method::Vanilla: res = vanilla_run(task.edit(), oracle, cfg, 1); break;
        case Method::BestOfN: res = best_of_n(task.edit(), oracle, cfg); break;
        case Method::Elect:
            cfg.adaptive = false;
            res = elect_run(task.edit(), oracle, cfg);
            break;
        case Method::ElectAdaptive:
            cfg.adaptive = true;
            res = elect_run(task.edit(), oracle, cfg);
            break;
    }
    ExperimentRow row;
    row.task = task.index();
    row.method = method;
    row.n = method == Method::Vanilla ? 1 : n;
    row.stop_step = res.trace.actual_stop_step;
    row.chosen_seed = res.trace.seeds[res.trace.chosen_id];
    std::vector<std::uint64_t> seeds(row.n);
    for (std::size_t i = 0; i < row.n; ++i) seeds[i] = i + 1;
    row.gt_best_seed = gt_best_seed(task, seeds);
    row.gt_bg_mse_chosen = task.gt_bg_mse(row.chosen_seed);
    row.metrics = background_metrics(res.final_latent, task.source(), task.gt_mask());
    row.metrics.nfe = res.trace.nfe;
    row.metrics.method = std::string(to_string(method));
    row.metrics.candidate_id = res.trace.chosen_id;
    row.model_calls = res.trace.model_calls;
    return row;
}

inline std::string fmt_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9e", v);
    return buf;
}

}  // namespace detail

/// Runs every (task, method, N) combination. Rows come back ordered by task,
/// then method order, then N, independent of `jobs`.
inline ExperimentReport run_experiment(const std::vector<std::shared_ptr<BenchTask>>& suite,
                                       const ExperimentConfig& cfg) {
    if (suite.empty()) throw InvalidArgument("run_experiment: empty suite");
    if (cfg.methods.empty()) throw InvalidArgument("run_experiment: no methods");
    cfg.engine.validate();

    struct Job {
        std::size_t task;
        Method method;
        std::size_t n;
    };
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < suite.size(); ++k) {
        for (Method m : cfg.methods) {
            if (m == Method::Vanilla) {
                jobs.push_back({k, m, 1});
                continue;
            }
            for (std::size_t n : cfg.n_grid) jobs.push_back({k, m, n});
        }
    }
    for (const auto& j : jobs) {
        if (j.n > suite[j.task]->params().max_candidates) {
            throw InvalidArgument("N = " + std::to_string(j.n) + " exceeds benchmark max_candidates");
        }
    }

    ExperimentReport report;
    report.rows.resize(jobs.size());
    parallel_for(jobs.size(), std::max<std::size_t>(1, cfg.jobs), [&](std::size_t i) {
        const Job& j = jobs[i];
        report.rows[i] = detail::run_one(*suite[j.task], suite[j.task], j.method, j.n, cfg.engine);
    });

    // Aggregate per (method, N).
    std::map<std::pair<int, std::size_t>, std::vector<const ExperimentRow*>> groups;
    for (const auto& r : report.rows) groups[{static_cast<int>(r.method), r.n}].push_back(&r);

    nlohmann::json summary;
    summary["schema"] = "elect-bench-summary/1";
    summary["tasks"] = suite.size();
    summary["config"] = {{"steps", cfg.engine.steps},
                         {"t_stop", cfg.engine.t_stop},
                         {"schedule", std::string(to_string(cfg.engine.schedule))},
                         {"tau", cfg.engine.tau},
                         {"ddc_window", cfg.engine.ddc_window},
                         {"image_scale", cfg.engine.guidance.image_scale},
                         {"text_scale", cfg.engine.guidance.text_scale},
                         {"n_grid", cfg.n_grid}};
    std::vector<ParetoPoint> all_points;
    nlohmann::json methods = nlohmann::json::object();
    for (Method m : cfg.methods) {
        std::vector<ParetoPoint> points;
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& [key, rows] : groups) {
            if (key.first != static_cast<int>(m)) continue;
            std::vector<double> mse;
            double nfe_sum = 0.0, agree = 0.0, beats_vanilla = 0.0;
            for (const auto* r : rows) {
                mse.push_back(r->metrics.bg_mse);
                nfe_sum += static_cast<double>(r->metrics.nfe);
                agree += r->chosen_seed == r->gt_best_seed;
                beats_vanilla += r->gt_bg_mse_chosen <= suite[r->task]->gt_bg_mse(1);
            }
            const double count = static_cast<double>(rows.size());
            ParetoPoint p{std::string(to_string(m)), key.second, nfe_sum / count, median(mse)};
            points.push_back(p);
            double mean = 0.0;
            for (double v : mse) mean += v;
            pts.push_back({{"n", p.n},
                           {"nfe_mean", p.nfe},
                           {"median_bg_mse", p.median_bg_mse},
                           {"mean_bg_mse", mean / count},
                           {"top1_gt_agreement", agree / count},
                           {"not_worse_than_vanilla", beats_vanilla / count}});
        }
        nlohmann::json front = nlohmann::json::array();
        for (const auto& p : pareto_front(points)) front.push_back({{"n", p.n}, {"nfe", p.nfe}, {"median_bg_mse", p.median_bg_mse}});
        methods[std::string(to_string(m))] = {{"points", pts}, {"pareto_front", front}};
        all_points.insert(all_points.end(), points.begin(), points.end());
    }
    summary["methods"] = methods;
    nlohmann::json overall = nlohmann::json::array();
    for (const auto& p : pareto_front(all_points)) {
        overall.push_back({{"method", p.method}, {"n", p.n}, {"nfe", p.nfe}, {"median_bg_mse", p.median_bg_mse}});
    }
    summary["overall_pareto_front"] = overall;
    report.summary = std::move(summary);
    return report;
}

inline std::string results_csv(const ExperimentReport& report) {
    std::ostringstream os;
    os << "task,method,n,stop_step,chosen_seed,gt_best_seed,nfe,model_calls,bg_mse,psnr,ssim,gt_bg_mse\n";
    for (const auto& r : report.rows) {
        os << r.task << ',' << to_string(r.method) << ',' << r.n << ',' << r.stop_step << ',' << r.chosen_seed << ','
           << r.gt_best_seed << ',' << r.metrics.nfe << ',' << r.model_calls << ',' << detail::fmt_num(r.metrics.bg_mse)
           << ',' << detail::fmt_num(r.metrics.psnr) << ',' << detail::fmt_num(r.metrics.ssim) << ','
           << detail::fmt_num(r.gt_bg_mse_chosen) << '\n';
    }
    return os.str();
}

inline void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / "results.csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << results_csv(report);
    const auto json_path = dir / "summary.json";
    std::ofstream js(json_path, std::ios::binary | std::ios::trunc);
    if (!js) throw std::runtime_error("cannot write " + json_path.string());
    js << report.summary.dump(2) << '\n';
    if (!csv || !js) throw std::runtime_error("write failed in " + dir.string());
}

}  // namespace elect
