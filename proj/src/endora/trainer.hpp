#pragma once

#include <filesystem>
#include <memory>
#include <ostream>

#include "endora/backbone.hpp"
#include "endora/codec.hpp"
#include "endora/dataset.hpp"
#include "endora/optimizer.hpp"
#include "endora/prior.hpp"

namespace endora::train {

/// Full training recipe. Every field has a config-file key of the same name
/// (model and codec nest as objects).
struct TrainConfig {
    double lr = 1e-4;
    double lr_min = 0.0;  // > 0 enables cosine decay from lr to lr_min
    long lr_warmup = 0;   // linear warmup steps before the decay
    long batch = 5;
    long max_steps = 1000;
    double ema_decay = 0.9999;
    double image_ratio = 0.25;  // fraction of each batch trained as single frames
    double hflip_prob = 0.5;
    long patience = 5;          // early-stop evaluations without improvement; <= 0 disables
    double alpha = 0.5;         // prior-guidance weight
    long timesteps = 50;
    diffusion::ScheduleKind schedule = diffusion::ScheduleKind::LinearBeta;
    /// "uniform" weights every timestep equally; "inv_sigma2" upweights the
    /// low-noise steps by min(1/sigma_t^2, 5), normalized to mean 1 over the
    /// schedule, which sharpens the final denoising steps.
    std::string elbo_weight = "uniform";
    double weight_decay = 0.01;
    double grad_clip = 0.0;     // <= 0 disables clipping
    long eval_every = 100;
    long checkpoint_every = 500;
    double val_fraction = 0.05;
    uint64_t seed = 0;
    long clip_len = 16;  // dataset window length; at most model.frames
    long stride = 4;
    long prior_patch = 4;  // toy prior geometry
    long prior_dim = 32;
    long prior_heads = 2;
    long codec_train_steps = 200;  // tiny-ae pre-fit before diffusion training
    model::BackboneConfig model;
    codec::CodecSpec codec;

    /// Pixel frame side lengths implied by the latent geometry.
    long frame_h() const { return model.latent_h * codec.downscale; }
    long frame_w() const { return model.latent_w * codec.downscale; }

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::string hash() const;
};

/// Effective learning rate at a step: linear warmup over lr_warmup steps,
/// then cosine decay from lr to lr_min across the remaining max_steps
/// (constant lr when lr_min <= 0).
double lr_at(const TrainConfig& cfg, long step);

/// Mirror every frame of the clip along width. Whole-clip operation; frames
/// within one clip always share the flip decision.
Tensor hflip(const Tensor& clip);

/// hflip with probability `prob`, one Bernoulli draw per clip.
Tensor augment_hflip(const Tensor& clip, Rng& rng, double prob = 0.5);

/// Assemble a mixed batch: a fraction `rho` of samples (largest-remainder
/// rounding) are single-frame clips from the image pool, the rest full
/// clips from the video pool. An empty image pool falls back to random
/// single frames of the videos.
std::vector<Tensor> compose_batch(const std::vector<Tensor>& videos,
                                  const std::vector<Tensor>& images, long batch, double rho,
                                  Rng& rng);

struct TrainMetrics {
    long step = 0;
    double elbo = 0.0;
    double prior = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
    std::vector<double> corr;  // mean correlation per prior level
};

/// Everything the loop mutates: the student, its shadow EMA weights, the
/// optimizer, the schedule and one serializable RNG feeding every stochastic
/// decision (so a resumed run replays the original exactly).
struct TrainState {
    TrainConfig cfg;
    model::Backbone net;
    prior::AdapterConv adapter;
    diffusion::NoiseSchedule schedule;
    opt::AdamW optimizer;
    std::map<std::string, Tensor> ema;
    Rng rng;
    long step = 0;
    const prior::PriorProvider* provider = nullptr;  // not owned, frozen
    std::unique_ptr<codec::Codec> codec;

    TrainState(TrainConfig cfg, const prior::PriorProvider* provider,
               std::unique_ptr<codec::Codec> codec = nullptr);
};

/// One optimizer step over a batch of pixel clips [F, H, W, 3].
TrainMetrics train_step(TrainState& state, const std::vector<Tensor>& clips);

/// Loss of a batch without touching parameters, EMA or the state RNG.
TrainMetrics evaluate_batch(const TrainState& state, const std::vector<Tensor>& clips, Rng& rng);

/// Single-file snapshot of a run. Codec weights are not included; a trained
/// tiny-ae codec is saved and restored through its own container file.
struct Checkpoint {
    TrainConfig cfg;
    long step = 0;
    long opt_steps = 0;
    std::string rng_state;
    std::string config_hash;
    std::map<std::string, Tensor> model, ema, opt_state;
    diffusion::NoiseSchedule schedule;
};

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<TrainState> restore(const Checkpoint& ckpt, const prior::PriorProvider* provider,
                                    std::unique_ptr<codec::Codec> codec = nullptr);

struct TrainReport {
    long steps_run = 0;
    bool early_stopped = false;
    double best_val_elbo = 0.0;
    TrainMetrics last;
    std::filesystem::path checkpoint;
};

/// The full loop: batch assembly with augmentation, stepping, periodic
/// validation with early stop, periodic atomic checkpointing to
/// out_dir/checkpoint.etc.
TrainReport train(TrainState& state, const data::ClipIndex& index,
                  const std::filesystem::path& out_dir, std::ostream* log = nullptr);

}  // namespace endora::train
