#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elect/engine.hpp"
#include "elect/tensor_io.hpp"

namespace elect {

// On-disk task layout:
//   <task>/source.elct       latent of the source image (required)
//   <task>/mask.elct         binary [H, W] foreground mask (optional, evaluation only)
//   <task>/instruction.txt   edit instruction (required)
//   <task>/meta.json         free-form metadata (optional)
struct DatasetTask {
    std::string name;
    EditTask task;
    nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    std::string s = os.str();
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace detail

inline DatasetTask load_dataset_task(const std::filesystem::path& dir) {
    DatasetTask out;
    out.name = dir.filename().string();
    out.task.source_latent = read_elct(dir / "source.elct");
    out.task.instruction = detail::read_text(dir / "instruction.txt");
    if (std::filesystem::exists(dir / "mask.elct")) out.task.gt_mask = read_elct(dir / "mask.elct");
    if (std::filesystem::exists(dir / "meta.json")) {
        try {
            out.meta = nlohmann::json::parse(detail::read_text(dir / "meta.json"));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError((dir / "meta.json").string() + ": " + e.what());
        }
    }
    return out;
}

/// Every task subdirectory of `root`, in name order.
inline std::vector<DatasetTask> load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "source.elct")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<DatasetTask> out;
    for (const auto& d : dirs) out.push_back(load_dataset_task(d));
    return out;
}

inline void write_dataset_task(const DatasetTask& t, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_elct(t.task.source_latent, dir / "source.elct");
    if (t.task.gt_mask) write_elct(*t.task.gt_mask, dir / "mask.elct");
    std::ofstream(dir / "instruction.txt") << t.task.instruction << '\n';
    std::ofstream(dir / "meta.json") << t.meta.dump(2) << '\n';
}

}  // namespace elect
