#include "endora/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

#include "endora/serialize.hpp"

namespace endora::data {

namespace fs = std::filesystem;

Tensor read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open frame: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw DataError("not a binary PPM: " + path.string());
    long w = 0, h = 0, maxval = 0;
    // header tokens may be separated by comments
    auto next_int = [&]() {
        long v;
        while (in >> std::ws && in.peek() == '#') in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
        if (!(in >> v)) throw DataError("bad PPM header: " + path.string());
        return v;
    };
    w = next_int();
    h = next_int();
    maxval = next_int();
    if (maxval != 255) throw DataError("only 8-bit PPM supported: " + path.string());
    in.get();  // single whitespace after header

    std::vector<unsigned char> raw(static_cast<size_t>(w * h * 3));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw DataError("truncated PPM: " + path.string());

    Tensor t({h, w, 3});
    for (size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<double>(raw[i]) / 127.5 - 1.0;
    return t;
}

void write_ppm(const fs::path& path, const Tensor& frame) {
    require(frame.ndim() == 3 && frame.shape[2] == 3, "write_ppm: frame must be [H,W,3]");
    const long h = frame.shape[0], w = frame.shape[1];
    std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    bytes.reserve(bytes.size() + static_cast<size_t>(h * w * 3));
    for (long i = 0; i < frame.numel(); ++i) {
        const double v = std::clamp(frame[i], -1.0, 1.0);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5))));
    }
    io::atomic_write(path, bytes);
}

Tensor center_crop_square(const Tensor& frame) {
    require(frame.ndim() == 3, "center_crop_square: frame must be [H,W,C]");
    const long h = frame.shape[0], w = frame.shape[1], c = frame.shape[2];
    const long side = std::min(h, w);
    const long oy = (h - side) / 2, ox = (w - side) / 2;
    Tensor out({side, side, c});
    for (long i = 0; i < side; ++i)
        for (long j = 0; j < side; ++j)
            for (long ch = 0; ch < c; ++ch) out.at({i, j, ch}) = frame.at({i + oy, j + ox, ch});
    return out;
}

Tensor resize_bilinear(const Tensor& frame, long out_h, long out_w) {
    require(frame.ndim() == 3, "resize_bilinear: frame must be [H,W,C]");
    const long h = frame.shape[0], w = frame.shape[1], c = frame.shape[2];
    if (h == out_h && w == out_w) return frame;
    Tensor out({out_h, out_w, c});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (long i = 0; i < out_h; ++i) {
        const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const long y0 = static_cast<long>(fy), y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (long j = 0; j < out_w; ++j) {
            const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const long x0 = static_cast<long>(fx), x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (long ch = 0; ch < c; ++ch) {
                const double top = (1 - wx) * frame.at({y0, x0, ch}) + wx * frame.at({y0, x1, ch});
                const double bot = (1 - wx) * frame.at({y1, x0, ch}) + wx * frame.at({y1, x1, ch});
                out.at({i, j, ch}) = (1 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

ClipIndex build_clip_index(const fs::path& root, long clip_len, long stride, long frame_h,
                           long frame_w) {
    require(clip_len >= 1 && stride >= 1, "build_clip_index: clip_len and stride must be >= 1");
    if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());

    ClipIndex index;
    index.clip_len = clip_len;
    index.stride = stride;
    index.frame_h = frame_h;
    index.frame_w = frame_w;

    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(root)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());

    for (const auto& entry : entries) {
        VideoEntry video;
        video.id = entry.filename().string();
        if (fs::is_directory(entry)) {
            for (const auto& f : fs::directory_iterator(entry))
                if (f.path().extension() == ".ppm") video.frames.push_back(f.path());
            std::sort(video.frames.begin(), video.frames.end());
            video.frame_count = static_cast<long>(video.frames.size());
            if (video.frame_count > 0) {
                try {
                    read_ppm(video.frames.front());
                } catch (const DataError& e) {
                    std::cerr << "[endora] skipping video '" << video.id << "': " << e.what() << "\n";
                    ++index.skipped_videos;
                    continue;
                }
            }
        } else if (entry.extension() == ".etc") {
            try {
                auto tf = io::TensorFile::load(entry);
                const Tensor& clip = tf.get("clip");
                require(clip.ndim() == 4 && clip.shape[3] == 3, "container clip must be [F,H,W,3]");
                video.container = entry;
                video.frame_count = clip.shape[0];
            } catch (const std::exception& e) {
                std::cerr << "[endora] skipping video '" << video.id << "': " << e.what() << "\n";
                ++index.skipped_videos;
                continue;
            }
        } else {
            continue;
        }
        if (video.frame_count == 0) continue;

        const long vid = static_cast<long>(index.videos.size());
        bool any_window = false;
        for (long start = 0; start + clip_len <= video.frame_count; start += stride) {
            index.records.push_back({vid, start});
            any_window = true;
        }
        if (any_window) {
            index.videos.push_back(std::move(video));
        } else {
            index.records.erase(
                std::remove_if(index.records.begin(), index.records.end(),
                               [vid](const ClipRecord& r) { return r.video == vid; }),
                index.records.end());
        }
    }
    if (index.videos.empty()) throw DataError("no usable videos under " + root.string());
    return index;
}

Tensor load_frames(const ClipIndex& index, long video, long start, long count) {
    require(video >= 0 && video < static_cast<long>(index.videos.size()), "load_frames: bad video index");
    const auto& v = index.videos[static_cast<size_t>(video)];
    require(start >= 0 && start + count <= v.frame_count, "load_frames: window escapes video bounds");

    Tensor clip({count, index.frame_h, index.frame_w, 3});
    const long frame_elems = index.frame_h * index.frame_w * 3;

    if (!v.container.empty()) {
        auto tf = io::TensorFile::load(v.container);
        const Tensor& src = tf.get("clip");
        for (long f = 0; f < count; ++f) {
            Tensor frame({src.shape[1], src.shape[2], 3});
            std::copy_n(src.data.begin() + (start + f) * frame.numel(), frame.numel(),
                        frame.data.begin());
            frame = resize_bilinear(center_crop_square(frame), index.frame_h, index.frame_w);
            std::copy_n(frame.data.begin(), frame_elems, clip.data.begin() + f * frame_elems);
        }
        return clip;
    }

    for (long f = 0; f < count; ++f) {
        Tensor frame = read_ppm(v.frames[static_cast<size_t>(start + f)]);
        frame = resize_bilinear(center_crop_square(frame), index.frame_h, index.frame_w);
        std::copy_n(frame.data.begin(), frame_elems, clip.data.begin() + f * frame_elems);
    }
    return clip;
}

Tensor load_clip(const ClipIndex& index, const ClipRecord& record) {
    return load_frames(index, record.video, record.start, index.clip_len);
}

Tensor synth_clip(uint64_t seed, long frames, long height, long width) {
    require(frames >= 1 && height >= 2 && width >= 2, "synth_clip: degenerate dimensions");
    Rng rng(seed);

    // low-frequency texture components
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 4; ++k)
        waves.push_back({rng.uniform() * 1.2 + 0.4, rng.uniform() * 1.2 + 0.4,
                         rng.uniform() * 2.0 * std::numbers::pi, 0.35 + 0.15 * rng.uniform()});

    const double deform_amp = 0.02 + 0.01 * rng.uniform();
    const double deform_phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double orbit_r = 0.25 + 0.1 * rng.uniform();
    const double orbit_phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double highlight_sigma = 0.12 + 0.04 * rng.uniform();
    const double chroma[3] = {0.0, 0.15 * rng.uniform(), 0.3 * rng.uniform()};

    Tensor clip({frames, height, width, 3});
    for (long f = 0; f < frames; ++f) {
        const double t = frames > 1 ? static_cast<double>(f) / frames : 0.0;
        const double dx = deform_amp * std::sin(2.0 * std::numbers::pi * t + deform_phase);
        const double dy = deform_amp * std::cos(2.0 * std::numbers::pi * t + deform_phase);
        const double cx = 0.5 + orbit_r * std::cos(std::numbers::pi * t + orbit_phase);
        const double cy = 0.5 + orbit_r * std::sin(std::numbers::pi * t + orbit_phase);
        for (long y = 0; y < height; ++y)
            for (long x = 0; x < width; ++x) {
                const double u = static_cast<double>(x) / width + dx;
                const double v = static_cast<double>(y) / height + dy;
                double base = 0.0;
                for (const auto& wv : waves)
                    base += wv.amp * std::sin(2.0 * std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase);
                const double rx = static_cast<double>(x) / width - cx;
                const double ry = static_cast<double>(y) / height - cy;
                const double highlight =
                    0.7 * std::exp(-(rx * rx + ry * ry) / (2.0 * highlight_sigma * highlight_sigma));
                for (long c = 0; c < 3; ++c)
                    clip.at({f, y, x, c}) = std::tanh(base + highlight + chroma[c] * base * base);
            }
    }
    return clip;
}

void write_video_frames(const fs::path& root, const std::string& video_id, const Tensor& clip) {
    require(clip.ndim() == 4 && clip.shape[3] == 3, "write_video_frames: clip must be [F,H,W,3]");
    const fs::path dir = root / video_id;
    fs::create_directories(dir);
    const long F = clip.shape[0];
    const long frame_elems = clip.shape[1] * clip.shape[2] * 3;
    for (long f = 0; f < F; ++f) {
        Tensor frame({clip.shape[1], clip.shape[2], 3});
        std::copy_n(clip.data.begin() + f * frame_elems, frame_elems, frame.data.begin());
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05ld.ppm", f);
        write_ppm(dir / name, frame);
    }
}

void make_synthetic_dataset(const fs::path& root, long videos, long frames, long size, uint64_t seed) {
    require(videos >= 1 && frames >= 1 && size >= 2, "make_synthetic_dataset: bad parameters");
    fs::create_directories(root);
    for (long v = 0; v < videos; ++v) {
        char id[32];
        std::snprintf(id, sizeof(id), "video_%03ld", v);
        write_video_frames(root, id, synth_clip(seed + static_cast<uint64_t>(v) * 7919, frames, size, size));
    }
}

}  // namespace endora::data
