// Command-line front end. Talks to the toolkit exclusively through the
// C API in endora.h; all heavy lifting lives behind the shared library.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "endora.h"

namespace {

int report(endora_status status) {
    if (status != ENDORA_OK) std::cerr << "error: " << endora_last_error() << "\n";
    return static_cast<int>(status);
}

struct TrainArgs {
    std::string config, data, out;
    double lr = 0, lr_min = 0, ema_decay = 0, image_ratio = 0, hflip_prob = 0, alpha = 0, grad_clip = 0,
           weight_decay = 0, val_fraction = 0;
    long lr_warmup = 0, batch = 0, max_steps = 0, patience = 0, timesteps = 0, eval_every = 0,
         checkpoint_every = 0, clip_len = 0, stride = 0, prior_patch = 0, prior_dim = 0,
         prior_heads = 0, codec_train_steps = 0;
    std::uint64_t seed = 0;
    std::string schedule, elbo_weight;
    long depth = 0, dim = 0, heads = 0, patch = 0, t_dim = 0, mlp_ratio = 0, frames = 0,
         latent_h = 0, latent_w = 0, latent_c = 0;
    std::string codec_kind;
    long downscale = 0, codec_latent_c = 0;
};

int run_train(const CLI::App& cmd, const TrainArgs& a) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) {
            std::cerr << "error: cannot open config file: " << a.config << "\n";
            return ENDORA_DATA_ERROR;
        }
        try {
            in >> cfg;
        } catch (const std::exception& e) {
            std::cerr << "error: bad config file: " << e.what() << "\n";
            return ENDORA_USAGE_ERROR;
        }
    }

    // command-line flags override file values
    auto set = [&](const char* flag, const char* key, auto value) {
        if (cmd.count(flag)) cfg[key] = value;
    };
    set("--lr", "lr", a.lr);
    set("--lr-min", "lr_min", a.lr_min);
    set("--lr-warmup", "lr_warmup", a.lr_warmup);
    set("--batch", "batch", a.batch);
    set("--max-steps", "max_steps", a.max_steps);
    set("--ema-decay", "ema_decay", a.ema_decay);
    set("--image-ratio", "image_ratio", a.image_ratio);
    set("--hflip-prob", "hflip_prob", a.hflip_prob);
    set("--patience", "patience", a.patience);
    set("--alpha", "alpha", a.alpha);
    set("--timesteps", "timesteps", a.timesteps);
    set("--schedule", "schedule", a.schedule);
    set("--elbo-weight", "elbo_weight", a.elbo_weight);
    set("--weight-decay", "weight_decay", a.weight_decay);
    set("--grad-clip", "grad_clip", a.grad_clip);
    set("--eval-every", "eval_every", a.eval_every);
    set("--checkpoint-every", "checkpoint_every", a.checkpoint_every);
    set("--val-fraction", "val_fraction", a.val_fraction);
    set("--seed", "seed", a.seed);
    set("--clip-len", "clip_len", a.clip_len);
    set("--stride", "stride", a.stride);
    set("--prior-patch", "prior_patch", a.prior_patch);
    set("--prior-dim", "prior_dim", a.prior_dim);
    set("--prior-heads", "prior_heads", a.prior_heads);
    set("--codec-train-steps", "codec_train_steps", a.codec_train_steps);

    auto set_model = [&](const char* flag, const char* key, long value) {
        if (cmd.count(flag)) cfg["model"][key] = value;
    };
    set_model("--depth", "depth", a.depth);
    set_model("--dim", "dim", a.dim);
    set_model("--heads", "heads", a.heads);
    set_model("--patch", "patch", a.patch);
    set_model("--t-dim", "t_dim", a.t_dim);
    set_model("--mlp-ratio", "mlp_ratio", a.mlp_ratio);
    set_model("--frames", "frames", a.frames);
    set_model("--latent-h", "latent_h", a.latent_h);
    set_model("--latent-w", "latent_w", a.latent_w);
    set_model("--latent-c", "latent_c", a.latent_c);

    if (cmd.count("--codec-kind")) cfg["codec"]["kind"] = a.codec_kind;
    if (cmd.count("--downscale")) cfg["codec"]["downscale"] = a.downscale;
    if (cmd.count("--codec-latent-c")) cfg["codec"]["latent_c"] = a.codec_latent_c;

    return report(endora_train(cfg.dump().c_str(), a.data.c_str(), a.out.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"endora: a desk-scale latent video-diffusion toolkit"};
    app.require_subcommand(1);

    // make-synthetic
    auto* mk = app.add_subcommand("make-synthetic", "Write a synthetic frame-folder dataset");
    std::string mk_out;
    long mk_videos = 4, mk_frames = 16, mk_size = 64;
    std::uint64_t mk_seed = 0;
    mk->add_option("--out", mk_out, "Output dataset root")->required();
    mk->add_option("--videos", mk_videos, "Number of videos")->capture_default_str();
    mk->add_option("--frames", mk_frames, "Frames per video")->capture_default_str();
    mk->add_option("--size", mk_size, "Square frame side in pixels")->capture_default_str();
    mk->add_option("--seed", mk_seed, "Generator seed")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Train a diffusion model on a dataset root");
    TrainArgs ta;
    tr->add_option("--config", ta.config, "JSON config file; flags below override its values");
    tr->add_option("--data", ta.data, "Dataset root")->required();
    tr->add_option("--out", ta.out, "Run output directory")->required();
    tr->add_option("--lr", ta.lr, "Learning rate (default 1e-4)");
    tr->add_option("--lr-min", ta.lr_min,
                   "Cosine-decay the learning rate to this floor; <= 0 keeps it constant");
    tr->add_option("--lr-warmup", ta.lr_warmup, "Linear warmup steps (default 0)");
    tr->add_option("--batch", ta.batch, "Batch size (default 5)");
    tr->add_option("--max-steps", ta.max_steps, "Optimization steps (default 1000)");
    tr->add_option("--ema-decay", ta.ema_decay, "EMA decay (default 0.9999)");
    tr->add_option("--image-ratio", ta.image_ratio,
                   "Fraction of each batch trained as single frames (default 0.25)");
    tr->add_option("--hflip-prob", ta.hflip_prob, "Horizontal flip probability (default 0.5)");
    tr->add_option("--patience", ta.patience,
                   "Early-stop evaluations without improvement; <= 0 disables (default 5)");
    tr->add_option("--alpha", ta.alpha, "Prior-guidance weight (default 0.5)");
    tr->add_option("--timesteps", ta.timesteps, "Diffusion steps T (default 50)");
    tr->add_option("--schedule", ta.schedule, "Noise schedule: linear-beta or cosine");
    tr->add_option("--elbo-weight", ta.elbo_weight,
                   "Timestep loss weighting: uniform or inv_sigma2");
    tr->add_option("--weight-decay", ta.weight_decay, "AdamW weight decay (default 0.01)");
    tr->add_option("--grad-clip", ta.grad_clip, "Gradient-norm clip; <= 0 disables (default off)");
    tr->add_option("--eval-every", ta.eval_every, "Validation interval in steps (default 100)");
    tr->add_option("--checkpoint-every", ta.checkpoint_every,
                   "Checkpoint interval in steps (default 500)");
    tr->add_option("--val-fraction", ta.val_fraction, "Held-out clip fraction (default 0.05)");
    tr->add_option("--seed", ta.seed, "Run seed (default 0)");
    tr->add_option("--clip-len", ta.clip_len, "Training clip length (default 16)");
    tr->add_option("--stride", ta.stride, "Clip window stride (default 4)");
    tr->add_option("--prior-patch", ta.prior_patch, "Toy prior patch size (default 4)");
    tr->add_option("--prior-dim", ta.prior_dim, "Toy prior width (default 32)");
    tr->add_option("--prior-heads", ta.prior_heads, "Toy prior attention heads (default 2)");
    tr->add_option("--codec-train-steps", ta.codec_train_steps,
                   "Tiny-ae pre-fit steps (default 200)");
    tr->add_option("--depth", ta.depth, "Backbone blocks, spatial/temporal pairs (default 4)");
    tr->add_option("--dim", ta.dim, "Token width (default 64)");
    tr->add_option("--heads", ta.heads, "Attention heads (default 4)");
    tr->add_option("--patch", ta.patch, "Latent patch size (default 2)");
    tr->add_option("--t-dim", ta.t_dim, "Timestep embedding width (default 64)");
    tr->add_option("--mlp-ratio", ta.mlp_ratio, "MLP expansion (default 4)");
    tr->add_option("--frames", ta.frames, "Maximum clip length (default 8)");
    tr->add_option("--latent-h", ta.latent_h, "Latent height (default 16)");
    tr->add_option("--latent-w", ta.latent_w, "Latent width (default 16)");
    tr->add_option("--latent-c", ta.latent_c, "Latent channels (default 3)");
    tr->add_option("--codec-kind", ta.codec_kind, "identity, pool or tiny-ae (default pool)");
    tr->add_option("--downscale", ta.downscale, "Codec spatial factor (default 2)");
    tr->add_option("--codec-latent-c", ta.codec_latent_c, "Codec latent channels (default 3)");

    // sample
    auto* sm = app.add_subcommand("sample", "Decode sampled clips from a checkpoint");
    std::string sm_ckpt, sm_out;
    long sm_count = 4;
    std::uint64_t sm_seed = 0;
    bool sm_no_ema = false;
    sm->add_option("--checkpoint", sm_ckpt, "Checkpoint file")->required();
    sm->add_option("--count", sm_count, "Clips to sample")->capture_default_str();
    sm->add_option("--seed", sm_seed, "Sampling seed")->capture_default_str();
    sm->add_option("--out", sm_out, "Output directory")->required();
    sm->add_flag("--no-ema", sm_no_ema, "Sample from the raw weights instead of the EMA");

    // eval
    auto* ev = app.add_subcommand("eval", "Compare a generated root against a real root");
    std::string ev_real, ev_gen, ev_report;
    long ev_count = 2048, ev_clip_len = 16;
    std::uint64_t ev_seed = 0;
    ev->add_option("--real", ev_real, "Reference dataset root")->required();
    ev->add_option("--generated", ev_gen, "Generated dataset root")->required();
    ev->add_option("--count", ev_count, "Evaluation clips per side")->capture_default_str();
    ev->add_option("--clip-len", ev_clip_len, "Frames per evaluation clip")->capture_default_str();
    ev->add_option("--seed", ev_seed, "Sampling seed")->capture_default_str();
    ev->add_option("--report", ev_report, "Metric report output path")->required();

    // inspect-checkpoint
    auto* in = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's config and counters");
    std::string in_ckpt;
    in->add_option("--checkpoint", in_ckpt, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ENDORA_USAGE_ERROR;
    }

    if (mk->parsed())
        return report(endora_make_synthetic(mk_out.c_str(), mk_videos, mk_frames, mk_size, mk_seed));
    if (tr->parsed()) return run_train(*tr, ta);
    if (sm->parsed())
        return report(endora_sample(sm_ckpt.c_str(), sm_count, sm_seed, sm_out.c_str(),
                                    sm_no_ema ? 0 : 1));
    if (ev->parsed())
        return report(endora_eval(ev_real.c_str(), ev_gen.c_str(), ev_count, ev_clip_len, ev_seed,
                                  ev_report.c_str()));
    if (in->parsed()) {
        endora_checkpoint* ck = nullptr;
        const endora_status st = endora_checkpoint_open(in_ckpt.c_str(), &ck);
        if (st != ENDORA_OK) return report(st);
        std::cout << "step " << endora_checkpoint_step(ck) << "\n"
                  << "parameters " << endora_checkpoint_param_count(ck) << "\n"
                  << "config " << endora_checkpoint_config_json(ck) << "\n";
        endora_checkpoint_close(ck);
        return 0;
    }
    return ENDORA_USAGE_ERROR;
}
