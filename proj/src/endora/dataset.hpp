#pragma once

#include <filesystem>
#include <vector>

#include "endora/rng.hpp"
#include "endora/tensor.hpp"

namespace endora::data {

// On-disk layout: one subdirectory per video containing zero-padded
// numbered 8-bit PPM frames (frame_00000.ppm, ...), or alternatively a
// single tensor-container file per video holding a "clip" tensor
// [F, H, W, 3]. Pixels map to [-1, 1] via x / 127.5 - 1.

/// Read a binary (P6) PPM into [H, W, 3] in [-1, 1].
Tensor read_ppm(const std::filesystem::path& path);

/// Write a frame [H, W, 3]; values clamped to [-1, 1] then quantized.
void write_ppm(const std::filesystem::path& path, const Tensor& frame);

Tensor center_crop_square(const Tensor& frame);
Tensor resize_bilinear(const Tensor& frame, long out_h, long out_w);

struct ClipRecord {
    long video = 0;  // index into ClipIndex::videos
    long start = 0;
};

struct VideoEntry {
    std::string id;
    std::filesystem::path container;              // set for container-file videos
    std::vector<std::filesystem::path> frames;    // set for frame-folder videos
    long frame_count = 0;
};

/// Deterministic enumeration of fixed-length clip windows over a dataset
/// root: videos in lexicographic order, window offsets ascending in steps
/// of `stride`. Frames are loaded and resized lazily via load_clip.
struct ClipIndex {
    long clip_len = 16;
    long stride = 4;
    long frame_h = 128;
    long frame_w = 128;
    long skipped_videos = 0;
    std::vector<VideoEntry> videos;
    std::vector<ClipRecord> records;
};

ClipIndex build_clip_index(const std::filesystem::path& root, long clip_len = 16, long stride = 4,
                           long frame_h = 128, long frame_w = 128);

/// Load one indexed window as [clip_len, frame_h, frame_w, 3].
Tensor load_clip(const ClipIndex& index, const ClipRecord& record);

/// Load `count` contiguous frames of one video starting at `start`.
Tensor load_frames(const ClipIndex& index, long video, long start, long count);

/// Seeded synthetic clip: a low-frequency texture under smooth periodic
/// deformation with a moving specular-style highlight; values in [-1, 1]
/// and temporally continuous (mean absolute inter-frame difference < 0.15).
Tensor synth_clip(uint64_t seed, long frames, long height, long width);

/// Write a synthetic dataset in the frame-folder layout.
void make_synthetic_dataset(const std::filesystem::path& root, long videos, long frames, long size,
                            uint64_t seed);

/// Write a clip [F, H, W, 3] as a frame folder under root/<video_id>/.
void write_video_frames(const std::filesystem::path& root, const std::string& video_id,
                        const Tensor& clip);

}  // namespace endora::data
