#pragma once

#include <filesystem>

#include "endora/protocol.hpp"
#include "endora/trainer.hpp"

namespace endora::pipeline {

inline constexpr const char* kVersion = "0.1.0";

/// Written exactly once per run, next to the run's outputs, after the run
/// succeeds. Records the fully resolved configuration for auditability.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    uint64_t seed = 0;
    std::string version = kVersion;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const;
};

std::string timestamp_now();
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

void make_synthetic(const std::filesystem::path& root, long videos, long frames, long size,
                    uint64_t seed);

/// Full training run: index the data, fit a tiny-ae codec when configured,
/// train with the toy prior, write checkpoint.etc (+ codec.etc) and the
/// manifest under out_dir.
train::TrainReport train_run(const train::TrainConfig& cfg, const std::filesystem::path& data_root,
                             const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Decode `count` sampled clips from a checkpoint into frame-folder videos
/// sample_000.. under out_dir. use_ema selects the shadow weights.
void sample_run(const std::filesystem::path& checkpoint, long count, uint64_t seed,
                const std::filesystem::path& out_dir, bool use_ema = true);

/// Standardized comparison of two dataset roots; writes the metric report
/// to report_path and a manifest beside it.
eval::EvalReport eval_run(const std::filesystem::path& real_root,
                          const std::filesystem::path& generated_root, long count, long clip_len,
                          uint64_t seed, const std::filesystem::path& report_path,
                          long frame_size = 32, uint64_t extractor_seed = 17);

struct InspectInfo {
    nlohmann::json config;
    long step = 0;
    long param_count = 0;  // doubles across all model tensors
    long tensor_count = 0;
    std::string config_hash;
};

InspectInfo inspect_checkpoint(const std::filesystem::path& checkpoint);

}  // namespace endora::pipeline
