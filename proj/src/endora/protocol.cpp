#include "endora/protocol.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "endora/serialize.hpp"

namespace endora::eval {

EvalClipSet sample_eval_clips(const data::ClipIndex& index, long count, long clip_len, Rng& rng) {
    require(count >= 1 && clip_len >= 1, "sample_eval_clips: count and clip_len must be >= 1");

    EvalClipSet out;
    std::vector<long> usable;
    for (long v = 0; v < static_cast<long>(index.videos.size()); ++v) {
        if (index.videos[static_cast<size_t>(v)].frame_count >= clip_len)
            usable.push_back(v);
        else
            ++out.skipped_videos;
    }
    if (out.skipped_videos > 0)
        std::cerr << "[endora] eval sampling skipped " << out.skipped_videos
                  << " video(s) shorter than " << clip_len << " frames\n";
    if (usable.empty()) throw DataError("sample_eval_clips: no video long enough for a clip");

    for (long i = 0; i < count; ++i) {
        const long v = usable[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(usable.size()) - 1))];
        const long max_start = index.videos[static_cast<size_t>(v)].frame_count - clip_len;
        const long start = rng.uniform_int(0, max_start);
        out.picks.emplace_back(v, start);
        out.clips.push_back(data::load_frames(index, v, start, clip_len));
    }
    return out;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    os << "endora eval report v1\n";
    os << "seed " << report.seed << "\n";
    os << "extractor " << report.extractor_id << "\n";
    os.precision(12);
    for (const auto& m : report.metrics)
        os << "metric " << m.name << " " << m.value << " count " << m.count << "\n";
    return os.str();
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    io::atomic_write(path, format_report(report));
}

EvalReport parse_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "endora eval report v1") throw DataError("unrecognized report header");

    EvalReport r;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "seed")
            ls >> r.seed;
        else if (key == "extractor")
            ls >> r.extractor_id;
        else if (key == "metric") {
            MetricEntry m;
            std::string countword;
            ls >> m.name >> m.value >> countword >> m.count;
            if (countword != "count") throw DataError("malformed metric line: " + line);
            r.metrics.push_back(std::move(m));
        }
    }
    return r;
}

EvalReport evaluate_clip_sets(const std::vector<Tensor>& generated,
                              const std::vector<Tensor>& reference,
                              const FeatureExtractor& extractor, uint64_t seed, long is_splits) {
    require(generated.size() >= 2 && reference.size() >= 2,
            "evaluate_clip_sets: need at least two clips per side");

    auto clip_stats = [&](const std::vector<Tensor>& clips) {
        StatsAccumulator acc;
        for (const auto& c : clips) acc.add(extractor.clip_feature(c));
        return acc.finish();
    };
    auto frame_stats = [&](const std::vector<Tensor>& clips) {
        StatsAccumulator acc;
        long frames = 0;
        for (const auto& c : clips) {
            Tensor feats = extractor.frame_features(c);
            Tensor row({feats.shape[1]});
            for (long f = 0; f < feats.shape[0]; ++f, ++frames) {
                std::copy_n(feats.data.begin() + f * feats.shape[1], feats.shape[1], row.data.begin());
                acc.add(row);
            }
        }
        return std::pair{acc.finish(), frames};
    };

    const double fvd = frechet_distance(clip_stats(generated), clip_stats(reference));
    auto [gen_frames, gen_frame_count] = frame_stats(generated);
    auto [ref_frames, ref_frame_count] = frame_stats(reference);
    const double fid = frechet_distance(gen_frames, ref_frames);

    // IS over every generated frame's class distribution
    Tensor probs({gen_frame_count, extractor.num_classes()});
    long row = 0;
    for (const auto& c : generated) {
        Tensor p = extractor.probabilities(c);
        std::copy_n(p.data.begin(), p.numel(), probs.data.begin() + row * probs.shape[1]);
        row += p.shape[0];
    }
    auto is = inception_score(probs, is_splits);

    EvalReport r;
    r.seed = seed;
    r.extractor_id = extractor.id();
    r.metrics = {{"fvd", fvd, static_cast<long>(generated.size())},
                 {"fid", fid, gen_frame_count},
                 {"is_mean", is.mean, gen_frame_count},
                 {"is_std", is.stddev, gen_frame_count}};
    return r;
}

}  // namespace endora::eval
