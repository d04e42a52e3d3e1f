#include "endora/trainer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "endora/serialize.hpp"

namespace endora::train {

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("train: learning rate must be >= 0");
    if (lr_min < 0.0 || lr_min > lr) throw ConfigError("train: lr_min must lie in [0, lr]");
    if (lr_warmup < 0) throw ConfigError("train: lr_warmup must be >= 0");
    if (batch < 1) throw ConfigError("train: batch size must be >= 1");
    if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
    if (ema_decay < 0.0 || ema_decay > 1.0) throw ConfigError("train: ema_decay must lie in [0, 1]");
    if (image_ratio < 0.0 || image_ratio > 1.0)
        throw ConfigError("train: image_ratio must lie in [0, 1]");
    if (hflip_prob < 0.0 || hflip_prob > 1.0)
        throw ConfigError("train: hflip_prob must lie in [0, 1]");
    if (alpha < 0.0) throw ConfigError("train: alpha must be >= 0");
    if (timesteps < 1) throw ConfigError("train: timesteps must be >= 1");
    if (elbo_weight != "uniform" && elbo_weight != "inv_sigma2")
        throw ConfigError("train: elbo_weight must be uniform or inv_sigma2");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train: val_fraction must lie in [0, 1)");
    if (clip_len < 1 || stride < 1) throw ConfigError("train: clip_len and stride must be >= 1");
    if (prior_patch < 1 || prior_dim < 1 || prior_heads < 1 || prior_dim % prior_heads != 0)
        throw ConfigError("train: invalid prior geometry");
    if (codec_train_steps < 0) throw ConfigError("train: codec_train_steps must be >= 0");
    model.validate();
    codec.validate();
    if (clip_len > model.frames)
        throw ConfigError("train: clip_len exceeds the model's temporal extent");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"lr_min", lr_min},
            {"lr_warmup", lr_warmup},
            {"batch", batch},
            {"max_steps", max_steps},
            {"ema_decay", ema_decay},
            {"image_ratio", image_ratio},
            {"hflip_prob", hflip_prob},
            {"patience", patience},
            {"alpha", alpha},
            {"timesteps", timesteps},
            {"schedule", diffusion::to_string(schedule)},
            {"elbo_weight", elbo_weight},
            {"weight_decay", weight_decay},
            {"grad_clip", grad_clip},
            {"eval_every", eval_every},
            {"checkpoint_every", checkpoint_every},
            {"val_fraction", val_fraction},
            {"seed", seed},
            {"clip_len", clip_len},
            {"stride", stride},
            {"prior_patch", prior_patch},
            {"prior_dim", prior_dim},
            {"prior_heads", prior_heads},
            {"codec_train_steps", codec_train_steps},
            {"model", model.to_json()},
            {"codec", codec.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.lr_warmup = j.value("lr_warmup", c.lr_warmup);
    c.batch = j.value("batch", c.batch);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.image_ratio = j.value("image_ratio", c.image_ratio);
    c.hflip_prob = j.value("hflip_prob", c.hflip_prob);
    c.patience = j.value("patience", c.patience);
    c.alpha = j.value("alpha", c.alpha);
    c.timesteps = j.value("timesteps", c.timesteps);
    if (j.contains("schedule"))
        c.schedule = diffusion::schedule_kind_from_string(j.at("schedule").get<std::string>());
    c.elbo_weight = j.value("elbo_weight", c.elbo_weight);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
    c.clip_len = j.value("clip_len", c.clip_len);
    c.stride = j.value("stride", c.stride);
    c.prior_patch = j.value("prior_patch", c.prior_patch);
    c.prior_dim = j.value("prior_dim", c.prior_dim);
    c.prior_heads = j.value("prior_heads", c.prior_heads);
    c.codec_train_steps = j.value("codec_train_steps", c.codec_train_steps);
    if (j.contains("model")) c.model = model::BackboneConfig::from_json(j.at("model"));
    if (j.contains("codec")) c.codec = codec::CodecSpec::from_json(j.at("codec"));
    c.validate();
    return c;
}

std::string TrainConfig::hash() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016zx", std::hash<std::string>{}(to_json().dump()));
    return buf;
}

double lr_at(const TrainConfig& cfg, long step) {
    if (cfg.lr_warmup > 0 && step < cfg.lr_warmup)
        return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.lr_warmup);
    if (cfg.lr_min <= 0.0 || cfg.max_steps <= cfg.lr_warmup) return cfg.lr;
    double u = static_cast<double>(step - cfg.lr_warmup) /
               static_cast<double>(cfg.max_steps - cfg.lr_warmup);
    u = std::min(std::max(u, 0.0), 1.0);
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(u * std::numbers::pi));
}

Tensor hflip(const Tensor& clip) {
    require(clip.ndim() == 4, "hflip: clip must be [F,H,W,C]");
    const long F = clip.shape[0], H = clip.shape[1], W = clip.shape[2], C = clip.shape[3];
    Tensor out(clip.shape);
    for (long f = 0; f < F; ++f)
        for (long i = 0; i < H; ++i)
            for (long j = 0; j < W; ++j)
                for (long c = 0; c < C; ++c) out.at({f, i, j, c}) = clip.at({f, i, W - 1 - j, c});
    return out;
}

Tensor augment_hflip(const Tensor& clip, Rng& rng, double prob) {
    require(prob >= 0.0 && prob <= 1.0, "augment_hflip: probability out of range");
    return rng.uniform() < prob ? hflip(clip) : clip;
}

namespace {

Tensor clip_frame(const Tensor& clip, long f) {
    const long fe = clip.shape[1] * clip.shape[2] * clip.shape[3];
    Tensor out({1, clip.shape[1], clip.shape[2], clip.shape[3]});
    std::copy_n(clip.data.begin() + f * fe, fe, out.data.begin());
    return out;
}

}  // namespace

std::vector<Tensor> compose_batch(const std::vector<Tensor>& videos,
                                  const std::vector<Tensor>& images, long batch, double rho,
                                  Rng& rng) {
    require(batch >= 1, "compose_batch: batch must be >= 1");
    require(rho >= 0.0 && rho <= 1.0, "compose_batch: rho must lie in [0, 1]");

    // largest-remainder split of the batch between the two pools
    const double quota_img = rho * static_cast<double>(batch);
    const double quota_vid = (1.0 - rho) * static_cast<double>(batch);
    long n_img = static_cast<long>(quota_img);
    long n_vid = static_cast<long>(quota_vid);
    if (n_img + n_vid < batch) {
        if (quota_img - n_img > quota_vid - n_vid)
            ++n_img;
        else
            ++n_vid;
    }

    if (n_vid > 0 && videos.empty()) throw DataError("compose_batch: video pool is empty");
    if (n_img > 0 && images.empty() && videos.empty())
        throw DataError("compose_batch: no pool can supply image samples");

    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(batch));
    for (long i = 0; i < n_vid; ++i)
        out.push_back(videos[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(videos.size()) - 1))]);
    for (long i = 0; i < n_img; ++i) {
        if (!images.empty()) {
            const auto& img = images[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(images.size()) - 1))];
            require(img.ndim() == 4 && img.shape[0] == 1, "compose_batch: image pool entries must be [1,H,W,C]");
            out.push_back(img);
        } else {
            const auto& v = videos[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(videos.size()) - 1))];
            out.push_back(clip_frame(v, rng.uniform_int(0, v.shape[0] - 1)));
        }
    }
    return out;
}

namespace {

TrainConfig validated(TrainConfig cfg) {
    cfg.validate();
    return cfg;
}

struct SampleLoss {
    ag::Var loss, elbo, prior;
    std::vector<double> corr;
};

double elbo_weight_at(const TrainState& st, long t) {
    if (st.cfg.elbo_weight != "inv_sigma2") return 1.0;
    auto raw = [&](long s) {
        const double v = st.schedule.sigma[static_cast<size_t>(s)];
        return std::min(1.0 / (v * v), 5.0);
    };
    double z = 0.0;
    for (long s = 1; s <= st.schedule.T; ++s) z += raw(s);
    return raw(t) / (z / static_cast<double>(st.schedule.T));
}

/// Build the loss graph for one clip. All randomness comes from `rng`.
SampleLoss sample_loss(const TrainState& st, const Tensor& clip, Rng& rng, bool want_corr) {
    Tensor latent = st.codec->encode(clip);
    const long t = rng.uniform_int(1, st.schedule.T);
    Tensor eps = rng.gaussian_tensor(latent.shape);
    Tensor xt = diffusion::forward_marginal(latent, t, eps, st.schedule);

    const bool use_prior = st.cfg.alpha > 0.0 && st.provider != nullptr;
    auto fwd = st.net.predict_noise(xt, t, use_prior);
    auto elbo_v = diffusion::elbo_loss_var(fwd.eps_pred, eps, elbo_weight_at(st, t));
    if (!elbo_v->value.all_finite()) throw NumericError("train_step: elbo term is non-finite");
    if (!use_prior) return {elbo_v, elbo_v, nullptr, {}};

    auto prior_maps = st.provider->attention_maps(clip);
    auto pairing = prior::level_pairing(st.net.spatial_block_count(), st.provider->levels());
    std::vector<ag::Var> student, adapted;
    for (size_t i = 0; i < pairing.size(); ++i) {
        student.push_back(fwd.spatial_attention[static_cast<size_t>(pairing[i])]);
        adapted.push_back(st.adapter(ag::constant(prior_maps[i])));
    }
    auto ploss = prior::prior_loss(student, adapted);
    if (!ploss->value.all_finite()) throw NumericError("train_step: prior term is non-finite");

    SampleLoss out{prior::total_loss_var(elbo_v, ploss, st.cfg.alpha), elbo_v, ploss, {}};
    if (want_corr)
        for (size_t i = 0; i < pairing.size(); ++i)
            out.corr.push_back(1.0 - prior::prior_loss({student[i]}, {adapted[i]})->value[0]);
    return out;
}

TrainMetrics batch_metrics(const TrainState& st, const std::vector<Tensor>& clips, Rng& rng,
                           bool backprop) {
    require(!clips.empty(), "train: empty batch");
    const double B = static_cast<double>(clips.size());
    TrainMetrics met;
    met.step = st.step + (backprop ? 1 : 0);
    long corr_samples = 0;
    for (const auto& clip : clips) {
        auto s = sample_loss(st, clip, rng, true);
        met.elbo += s.elbo->value[0] / B;
        met.total += s.loss->value[0] / B;
        if (s.prior) {
            met.prior += s.prior->value[0] / B;
            if (met.corr.empty()) met.corr.assign(s.corr.size(), 0.0);
            for (size_t i = 0; i < s.corr.size(); ++i) met.corr[i] += s.corr[i];
            ++corr_samples;
        }
        if (backprop) ag::backward(ag::scale(s.loss, 1.0 / B));
    }
    for (auto& c : met.corr) c /= static_cast<double>(corr_samples);
    return met;
}

}  // namespace

TrainState::TrainState(TrainConfig cfg_in, const prior::PriorProvider* provider_in,
                       std::unique_ptr<codec::Codec> codec_in)
    : cfg(validated(std::move(cfg_in))),
      net(cfg.model, cfg.seed),
      adapter(prior::make_adapter(net.params(), cfg.seed + 1)),
      schedule(diffusion::build_schedule(cfg.timesteps, cfg.schedule)),
      optimizer(opt::AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}),
      rng(cfg.seed),
      provider(provider_in),
      codec(codec_in ? std::move(codec_in) : codec::make_codec(cfg.codec, cfg.seed)) {
    ema = net.params().snapshot();
}

TrainMetrics train_step(TrainState& state, const std::vector<Tensor>& clips) {
    state.net.params().zero_grad();
    TrainMetrics met = batch_metrics(state, clips, state.rng, true);
    met.grad_norm = opt::grad_norm(state.net.params());
    if (state.cfg.grad_clip > 0.0) opt::clip_grad_norm(state.net.params(), state.cfg.grad_clip);
    state.optimizer.set_lr(lr_at(state.cfg, state.step));
    state.optimizer.step(state.net.params());
    opt::ema_update(state.ema, state.net.params(), state.cfg.ema_decay);
    ++state.step;
    return met;
}

TrainMetrics evaluate_batch(const TrainState& state, const std::vector<Tensor>& clips, Rng& rng) {
    return batch_metrics(state, clips, rng, false);
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    io::TensorFile tf;
    tf.meta = {{"kind", "checkpoint"},
               {"version", 1},
               {"step", state.step},
               {"opt_steps", state.optimizer.steps()},
               {"rng", state.rng.state()},
               {"config", state.cfg.to_json()},
               {"config_hash", state.cfg.hash()}};
    for (const auto& [name, t] : state.net.params().snapshot()) tf.tensors["model." + name] = t;
    for (const auto& [name, t] : state.ema) tf.tensors["ema." + name] = t;
    for (const auto& [name, t] : state.optimizer.snapshot()) tf.tensors["opt." + name] = t;
    auto vec1d = [](const std::vector<double>& v) {
        return Tensor({static_cast<long>(v.size())}, v);
    };
    tf.tensors["schedule.alpha"] = vec1d(state.schedule.alpha);
    tf.tensors["schedule.sigma"] = vec1d(state.schedule.sigma);
    tf.tensors["schedule.beta"] = vec1d(state.schedule.beta);
    tf.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto tf = io::TensorFile::load(path);
    if (tf.meta.value("kind", std::string()) != "checkpoint")
        throw DataError("not a checkpoint file: " + path.string());
    Checkpoint ck;
    ck.cfg = TrainConfig::from_json(tf.meta.at("config"));
    ck.step = tf.meta.value("step", 0L);
    ck.opt_steps = tf.meta.value("opt_steps", 0L);
    ck.rng_state = tf.meta.value("rng", std::string());
    ck.config_hash = tf.meta.value("config_hash", std::string());
    for (const auto& [name, t] : tf.tensors) {
        if (name.starts_with("model."))
            ck.model.emplace(name.substr(6), t);
        else if (name.starts_with("ema."))
            ck.ema.emplace(name.substr(4), t);
        else if (name.starts_with("opt."))
            ck.opt_state.emplace(name.substr(4), t);
    }
    ck.schedule.kind = ck.cfg.schedule;
    ck.schedule.alpha = tf.get("schedule.alpha").data;
    ck.schedule.sigma = tf.get("schedule.sigma").data;
    ck.schedule.beta = tf.get("schedule.beta").data;
    ck.schedule.T = static_cast<long>(ck.schedule.alpha.size()) - 1;
    return ck;
}

std::unique_ptr<TrainState> restore(const Checkpoint& ckpt, const prior::PriorProvider* provider,
                                    std::unique_ptr<codec::Codec> codec) {
    auto state = std::make_unique<TrainState>(ckpt.cfg, provider, std::move(codec));
    state->net.params().load(ckpt.model);
    state->ema = ckpt.ema;
    state->optimizer.load(ckpt.opt_state, ckpt.opt_steps);
    if (!ckpt.rng_state.empty()) state->rng.set_state(ckpt.rng_state);
    state->step = ckpt.step;
    state->schedule = ckpt.schedule;
    return state;
}

TrainReport train(TrainState& state, const data::ClipIndex& index,
                  const std::filesystem::path& out_dir, std::ostream* log) {
    const auto& cfg = state.cfg;
    const long N = static_cast<long>(index.records.size());
    if (N < 1) throw DataError("train: dataset holds no clips");
    require(index.clip_len <= cfg.model.frames,
            "train: clip length exceeds the model's temporal extent");

    long val_count = 0;
    if (N >= 2 && cfg.val_fraction > 0.0)
        val_count = std::min<long>(N - 1, std::max<long>(1, std::lround(cfg.val_fraction * N)));
    const long train_count = N - val_count;

    std::filesystem::create_directories(out_dir);
    const auto ckpt_path = out_dir / "checkpoint.etc";

    // desk-scale corpora fit in memory; cache decoded clips
    std::vector<std::optional<Tensor>> cache(static_cast<size_t>(N));
    auto clip_at = [&](long i) -> const Tensor& {
        auto& slot = cache[static_cast<size_t>(i)];
        if (!slot) slot = data::load_clip(index, index.records[static_cast<size_t>(i)]);
        return *slot;
    };

    TrainReport report;
    report.best_val_elbo = std::numeric_limits<double>::infinity();
    long evals_without_improvement = 0;

    while (state.step < cfg.max_steps) {
        std::vector<Tensor> pool;
        pool.reserve(static_cast<size_t>(cfg.batch));
        for (long i = 0; i < cfg.batch; ++i) {
            const long r = state.rng.uniform_int(0, train_count - 1);
            pool.push_back(augment_hflip(clip_at(r), state.rng, cfg.hflip_prob));
        }
        auto batch = compose_batch(pool, {}, cfg.batch, cfg.image_ratio, state.rng);
        report.last = train_step(state, batch);
        ++report.steps_run;

        if (cfg.eval_every > 0 && state.step % cfg.eval_every == 0 && val_count > 0) {
            // fixed draws make successive evaluations comparable
            Rng vrng(cfg.seed ^ 0x5eedULL);
            double val_elbo = 0.0;
            for (long i = 0; i < val_count; ++i)
                val_elbo += evaluate_batch(state, {clip_at(train_count + i)}, vrng).elbo;
            val_elbo /= static_cast<double>(val_count);
            if (log)
                (*log) << "step " << state.step << " train " << report.last.total << " val_elbo "
                       << val_elbo << "\n";
            if (val_elbo < report.best_val_elbo - 1e-12) {
                report.best_val_elbo = val_elbo;
                evals_without_improvement = 0;
            } else if (++evals_without_improvement >= cfg.patience && cfg.patience > 0) {
                report.early_stopped = true;
                break;
            }
        }
        if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
            save_checkpoint(state, ckpt_path);
    }

    save_checkpoint(state, ckpt_path);
    report.checkpoint = ckpt_path;
    return report;
}

}  // namespace endora::train
