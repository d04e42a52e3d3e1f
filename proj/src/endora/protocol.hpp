#pragma once

#include <filesystem>

#include "endora/dataset.hpp"
#include "endora/extractor.hpp"
#include "endora/metrics.hpp"

namespace endora::eval {

struct EvalClipSet {
    std::vector<Tensor> clips;                  // each [clip_len, H, W, 3]
    std::vector<std::pair<long, long>> picks;   // (video, start) per clip
    long skipped_videos = 0;                    // shorter than clip_len
};

/// Standardized sampling: uniform over usable videos, uniform start offset,
/// contiguous frames. Deterministic per RNG state. Videos shorter than
/// clip_len are skipped and counted.
EvalClipSet sample_eval_clips(const data::ClipIndex& index, long count, long clip_len, Rng& rng);

struct MetricEntry {
    std::string name;
    double value = 0.0;
    long count = 0;  // samples behind the number
};

struct EvalReport {
    uint64_t seed = 0;
    std::string extractor_id;
    std::vector<MetricEntry> metrics;
};

/// Plain-text report, line-oriented and byte-stable for a given input.
std::string format_report(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport parse_report(const std::filesystem::path& path);

/// FID/FVD/IS of a generated clip set against a reference set, all through
/// one extractor.
EvalReport evaluate_clip_sets(const std::vector<Tensor>& generated,
                              const std::vector<Tensor>& reference,
                              const FeatureExtractor& extractor, uint64_t seed, long is_splits = 10);

}  // namespace endora::eval
