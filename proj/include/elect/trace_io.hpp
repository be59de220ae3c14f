#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "elect/engine.hpp"

namespace elect {

// trace.json schema (version 1):
// {
//   "schema": "elect-trace/1",
//   "method": "elect" | "elect_adaptive" | "best_of_n" | "vanilla" | "elect_prompt",
//   "steps": T,
//   "candidates": [{"id": 0, "seed": 1, "prompt": "..."}, ...],
//   "per_step": [{"t": 100, "scores": [...], "best": x, "smoothed_delta": x | null}, ...],
//   "selection_scores": [...],           // BIS at the stop step, by candidate id
//   "fg_scores": [...],                  // present only with the hybrid rule
//   "chosen_id": 3, "chosen_seed": 4,
//   "actual_stop_step": 60,
//   "nfe": 500, "model_calls": 1533,
//   "wall_ms": 12.5, "complete": true
// }
inline nlohmann::json trace_to_json(const SelectionTrace& trace, bool include_wall_clock = true) {
    nlohmann::json j;
    j["schema"] = "elect-trace/1";
    j["method"] = trace.method;
    j["steps"] = trace.steps;
    auto& cands = j["candidates"] = nlohmann::json::array();
    for (std::size_t i = 0; i < trace.seeds.size(); ++i) {
        cands.push_back({{"id", i}, {"seed", trace.seeds[i]}, {"prompt", trace.prompts[i]}});
    }
    auto& steps = j["per_step"] = nlohmann::json::array();
    for (const auto& s : trace.per_step) {
        nlohmann::json row{{"t", s.t}, {"scores", s.scores}, {"best", s.best}};
        row["smoothed_delta"] = s.smoothed_delta ? nlohmann::json(*s.smoothed_delta) : nlohmann::json(nullptr);
        steps.push_back(std::move(row));
    }
    j["selection_scores"] = trace.selection_scores;
    if (!trace.fg_scores.empty()) j["fg_scores"] = trace.fg_scores;
    j["chosen_id"] = trace.chosen_id;
    if (trace.chosen_id < trace.seeds.size()) j["chosen_seed"] = trace.seeds[trace.chosen_id];
    j["actual_stop_step"] = trace.actual_stop_step;
    j["nfe"] = trace.nfe;
    j["model_calls"] = trace.model_calls;
    if (include_wall_clock) j["wall_ms"] = trace.wall_ms;
    j["complete"] = trace.complete;
    return j;
}

inline void write_trace(const SelectionTrace& trace, const std::filesystem::path& path, bool include_wall_clock = true) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << trace_to_json(trace, include_wall_clock).dump(2) << '\n';
}

}  // namespace elect
