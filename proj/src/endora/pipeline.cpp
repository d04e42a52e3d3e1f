#include "endora/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "endora/serialize.hpp"

namespace endora::pipeline {

namespace fs = std::filesystem;

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json RunManifest::to_json() const {
    return {{"command", command}, {"config", config},     {"seed", seed},
            {"version", version}, {"started", started},   {"finished", finished},
            {"outputs", outputs}};
}

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
    fs::create_directories(dir);
    io::atomic_write(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

void make_synthetic(const fs::path& root, long videos, long frames, long size, uint64_t seed) {
    RunManifest m;
    m.command = "make-synthetic";
    m.config = {{"videos", videos}, {"frames", frames}, {"size", size}};
    m.seed = seed;
    m.started = timestamp_now();
    data::make_synthetic_dataset(root, videos, frames, size, seed);
    m.finished = timestamp_now();
    for (long v = 0; v < videos; ++v) {
        char id[32];
        std::snprintf(id, sizeof(id), "video_%03ld", v);
        m.outputs.push_back(id);
    }
    write_manifest(root, m);
}

namespace {

std::unique_ptr<codec::Codec> prepare_codec(const train::TrainConfig& cfg,
                                            const data::ClipIndex& index, const fs::path& out_dir,
                                            std::ostream* log) {
    auto cdc = codec::make_codec(cfg.codec, cfg.seed);
    if (cfg.codec.kind != codec::CodecKind::TinyAe || cfg.codec_train_steps <= 0) return cdc;

    // pre-fit the autoencoder on a handful of clips, then freeze it
    std::vector<Tensor> clips;
    const long take = std::min<long>(static_cast<long>(index.records.size()), 16);
    for (long i = 0; i < take; ++i)
        clips.push_back(data::load_clip(index, index.records[static_cast<size_t>(i)]));
    Rng rng(cfg.seed + 101);
    const double mse = codec::train_tiny_ae(*cdc, clips, cfg.codec_train_steps, 0.05, rng);
    if (log) (*log) << "tiny-ae pre-fit mse " << mse << "\n";
    codec::save_codec(*cdc, out_dir / "codec.etc");
    return cdc;
}

}  // namespace

train::TrainReport train_run(const train::TrainConfig& cfg, const fs::path& data_root,
                             const fs::path& out_dir, std::ostream* log) {
    cfg.validate();
    RunManifest m;
    m.command = "train";
    m.config = cfg.to_json();
    m.seed = cfg.seed;
    m.started = timestamp_now();

    auto index = data::build_clip_index(data_root, cfg.clip_len, cfg.stride, cfg.frame_h(),
                                        cfg.frame_w());

    std::unique_ptr<prior::PriorProvider> provider;
    if (cfg.alpha > 0.0) {
        require(cfg.frame_h() == cfg.frame_w(), "train: prior guidance needs square frames");
        if (cfg.frame_h() % cfg.prior_patch != 0)
            throw ConfigError("train: prior_patch must divide the pixel frame side");
        provider = prior::toy_prior_provider(cfg.seed + 7, cfg.prior_patch, cfg.prior_dim,
                                             cfg.prior_heads, cfg.frame_h());
    }

    fs::create_directories(out_dir);
    auto cdc = prepare_codec(cfg, index, out_dir, log);
    const bool tiny_ae = cfg.codec.kind == codec::CodecKind::TinyAe && cfg.codec_train_steps > 0;

    train::TrainState state(cfg, provider.get(), std::move(cdc));
    auto report = train::train(state, index, out_dir, log);

    m.finished = timestamp_now();
    m.outputs.push_back("checkpoint.etc");
    if (tiny_ae) m.outputs.push_back("codec.etc");
    write_manifest(out_dir, m);
    return report;
}

void sample_run(const fs::path& checkpoint, long count, uint64_t seed, const fs::path& out_dir,
                bool use_ema) {
    require(count >= 1, "sample: count must be >= 1");
    auto ck = train::load_checkpoint(checkpoint);

    std::unique_ptr<codec::Codec> cdc;
    if (ck.cfg.codec.kind == codec::CodecKind::TinyAe) {
        const auto codec_path = checkpoint.parent_path() / "codec.etc";
        if (!fs::exists(codec_path))
            throw DataError("sample: tiny-ae checkpoint needs " + codec_path.string());
        cdc = codec::load_codec(codec_path);
    }
    auto state = train::restore(ck, nullptr, std::move(cdc));
    if (use_ema) state->net.params().load(ck.ema);

    RunManifest m;
    m.command = "sample";
    m.config = {{"checkpoint", checkpoint.string()}, {"count", count}, {"use_ema", use_ema}};
    m.seed = seed;
    m.started = timestamp_now();

    fs::create_directories(out_dir);
    const auto& mc = ck.cfg.model;
    const Shape latent_shape{ck.cfg.clip_len, mc.latent_h, mc.latent_w, mc.latent_c};
    auto estimator = state->net.as_estimator();
    for (long i = 0; i < count; ++i) {
        Tensor latent = diffusion::sample(estimator, latent_shape, state->schedule,
                                          seed + static_cast<uint64_t>(i));
        Tensor video = state->codec->decode(latent);
        char id[32];
        std::snprintf(id, sizeof(id), "sample_%03ld", i);
        data::write_video_frames(out_dir, id, video);
        m.outputs.push_back(id);
    }

    m.finished = timestamp_now();
    write_manifest(out_dir, m);
}

eval::EvalReport eval_run(const fs::path& real_root, const fs::path& generated_root, long count,
                          long clip_len, uint64_t seed, const fs::path& report_path,
                          long frame_size, uint64_t extractor_seed) {
    require(count >= 2, "eval: need at least two clips per side");
    RunManifest m;
    m.command = "eval";
    m.config = {{"real", real_root.string()},
                {"generated", generated_root.string()},
                {"count", count},
                {"clip_len", clip_len},
                {"frame_size", frame_size},
                {"extractor_seed", extractor_seed}};
    m.seed = seed;
    m.started = timestamp_now();

    auto real_index = data::build_clip_index(real_root, 1, 1, frame_size, frame_size);
    auto gen_index = data::build_clip_index(generated_root, 1, 1, frame_size, frame_size);

    auto longest = [](const data::ClipIndex& idx) {
        long mx = 0;
        for (const auto& v : idx.videos) mx = std::max(mx, v.frame_count);
        return mx;
    };
    const long available = std::min(longest(real_index), longest(gen_index));
    if (available < clip_len) {
        std::cerr << "[endora] warning: reducing eval clip length from " << clip_len << " to "
                  << available << " (longest video)\n";
        clip_len = available;
    }

    Rng real_rng(seed), gen_rng(seed);
    auto real_set = eval::sample_eval_clips(real_index, count, clip_len, real_rng);
    auto gen_set = eval::sample_eval_clips(gen_index, count, clip_len, gen_rng);

    auto extractor = eval::toy_feature_extractor(extractor_seed);
    auto report = eval::evaluate_clip_sets(gen_set.clips, real_set.clips, *extractor, seed);
    eval::write_report(report_path, report);

    m.finished = timestamp_now();
    m.outputs.push_back(report_path.filename().string());
    write_manifest(report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path(), m);
    return report;
}

InspectInfo inspect_checkpoint(const fs::path& checkpoint) {
    auto tf = io::TensorFile::load(checkpoint);
    if (tf.meta.value("kind", std::string()) != "checkpoint")
        throw DataError("not a checkpoint file: " + checkpoint.string());
    InspectInfo info;
    info.config = tf.meta.at("config");
    info.step = tf.meta.value("step", 0L);
    info.config_hash = tf.meta.value("config_hash", std::string());
    for (const auto& [name, t] : tf.tensors)
        if (name.starts_with("model.")) {
            info.param_count += t.numel();
            ++info.tensor_count;
        }
    return info;
}

}  // namespace endora::pipeline
