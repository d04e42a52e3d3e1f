#include "endora/codec.hpp"

#include <iostream>

#include "endora/backbone.hpp"
#include "endora/serialize.hpp"

namespace endora::codec {

CodecKind codec_kind_from_string(const std::string& s) {
    if (s == "identity") return CodecKind::Identity;
    if (s == "pool") return CodecKind::Pool;
    if (s == "tiny-ae") return CodecKind::TinyAe;
    throw ConfigError("unknown codec kind '" + s + "' (expected identity, pool or tiny-ae)");
}

std::string to_string(CodecKind k) {
    switch (k) {
        case CodecKind::Identity: return "identity";
        case CodecKind::Pool: return "pool";
        default: return "tiny-ae";
    }
}

void CodecSpec::validate() const {
    if (downscale < 1) throw ConfigError("codec downscale must be >= 1");
    if (latent_c < 1) throw ConfigError("codec latent channels must be >= 1");
    if (kind == CodecKind::Identity && (downscale != 1 || latent_c != 3))
        throw ConfigError("identity codec requires downscale 1 and 3 channels");
    if (kind == CodecKind::Pool && latent_c != 3)
        throw ConfigError("pool codec preserves the 3 pixel channels");
}

nlohmann::json CodecSpec::to_json() const {
    return {{"kind", to_string(kind)}, {"downscale", downscale}, {"latent_c", latent_c}};
}

CodecSpec CodecSpec::from_json(const nlohmann::json& j) {
    CodecSpec s;
    s.kind = codec_kind_from_string(j.value("kind", std::string("pool")));
    s.downscale = j.value("downscale", s.downscale);
    s.latent_c = j.value("latent_c", s.latent_c);
    s.validate();
    return s;
}

namespace {

void check_video(const Tensor& video, long k) {
    require(video.ndim() == 4 && video.shape[3] == 3, "codec: video must be [F,H,W,3]");
    if (video.shape[1] % k != 0 || video.shape[2] % k != 0)
        throw ConfigError("codec: downscale factor must divide the frame dimensions");
    for (double v : video.data)
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9) {
            std::cerr << "[endora] warning: pixel values outside [-1,1]\n";
            break;
        }
}

class IdentityCodec final : public Codec {
public:
    explicit IdentityCodec(CodecSpec s) : spec_(s) {}
    const CodecSpec& spec() const override { return spec_; }
    Tensor encode(const Tensor& video) const override {
        check_video(video, 1);
        return video;
    }
    Tensor decode(const Tensor& latent) const override {
        require(latent.ndim() == 4 && latent.shape[3] == 3, "identity codec: latent must be [F,h,w,3]");
        return latent;
    }

private:
    CodecSpec spec_;
};

class PoolCodec final : public Codec {
public:
    explicit PoolCodec(CodecSpec s) : spec_(s) {}
    const CodecSpec& spec() const override { return spec_; }

    Tensor encode(const Tensor& video) const override {
        const long k = spec_.downscale;
        check_video(video, k);
        const long F = video.shape[0], H = video.shape[1], W = video.shape[2];
        const long h = H / k, w = W / k;
        Tensor out({F, h, w, 3});
        for (long f = 0; f < F; ++f)
            for (long i = 0; i < h; ++i)
                for (long j = 0; j < w; ++j)
                    for (long c = 0; c < 3; ++c) {
                        double acc = 0.0;
                        for (long ki = 0; ki < k; ++ki)
                            for (long kj = 0; kj < k; ++kj)
                                acc += video.at({f, i * k + ki, j * k + kj, c});
                        out.at({f, i, j, c}) = acc / static_cast<double>(k * k);
                    }
        return out;
    }

    Tensor decode(const Tensor& latent) const override {
        require(latent.ndim() == 4 && latent.shape[3] == 3, "pool codec: latent must be [F,h,w,3]");
        const long k = spec_.downscale;
        const long F = latent.shape[0], h = latent.shape[1], w = latent.shape[2];
        Tensor out({F, h * k, w * k, 3});
        for (long f = 0; f < F; ++f)
            for (long i = 0; i < h * k; ++i)
                for (long j = 0; j < w * k; ++j)
                    for (long c = 0; c < 3; ++c)
                        out.at({f, i, j, c}) = latent.at({f, i / k, j / k, c});  // nearest neighbor
        return out;
    }

private:
    CodecSpec spec_;
};

class TinyAeCodec final : public Codec {
public:
    TinyAeCodec(CodecSpec s, uint64_t seed) : spec_(s) {
        Rng rng(seed);
        const long q = s.downscale * s.downscale * 3;
        enc_ = nn::make_linear(params_, "enc", q, s.latent_c, rng);
        dec_ = nn::make_linear(params_, "dec", s.latent_c, q, rng);
        // scale the random init so an untrained round trip stays bounded
        for (auto& v : enc_.w->value.data) v *= 10.0;
    }

    const CodecSpec& spec() const override { return spec_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    ag::Var encode_var(const ag::Var& video) const {
        const long k = spec_.downscale;
        return enc_(model::extract_patches(video, k));  // [F, L, C]
    }

    ag::Var decode_var(const ag::Var& latent_tokens, long H, long W) const {
        return model::combine_patches(dec_(latent_tokens), H, W, 3, spec_.downscale);
    }

    Tensor encode(const Tensor& video) const override {
        const long k = spec_.downscale;
        check_video(video, k);
        const long F = video.shape[0], h = video.shape[1] / k, w = video.shape[2] / k;
        auto tokens = encode_var(ag::constant(video));
        return tokens->value.reshaped({F, h, w, spec_.latent_c});
    }

    Tensor decode(const Tensor& latent) const override {
        require(latent.ndim() == 4 && latent.shape[3] == spec_.latent_c,
                "tiny-ae codec: latent channel mismatch");
        const long k = spec_.downscale;
        const long F = latent.shape[0], h = latent.shape[1], w = latent.shape[2];
        auto tokens = ag::constant(latent.reshaped({F, h * w, spec_.latent_c}));
        return decode_var(tokens, h * k, w * k)->value;
    }

private:
    CodecSpec spec_;
    nn::ParamStore params_;
    nn::Linear enc_, dec_;
};

}  // namespace

std::unique_ptr<Codec> make_codec(const CodecSpec& spec, uint64_t seed) {
    spec.validate();
    switch (spec.kind) {
        case CodecKind::Identity: return std::make_unique<IdentityCodec>(spec);
        case CodecKind::Pool: return std::make_unique<PoolCodec>(spec);
        default: return std::make_unique<TinyAeCodec>(spec, seed);
    }
}

double train_tiny_ae(Codec& codec, const std::vector<Tensor>& clips, long steps, double lr, Rng& rng) {
    auto* ae = dynamic_cast<TinyAeCodec*>(&codec);
    if (!ae) throw ConfigError("train_tiny_ae: codec is not a tiny-ae");
    require(!clips.empty(), "train_tiny_ae: no training clips");

    double loss_value = 0.0;
    for (long step = 0; step < steps; ++step) {
        const auto& clip = clips[static_cast<size_t>(rng.uniform_int(0, static_cast<long>(clips.size()) - 1))];
        check_video(clip, ae->spec().downscale);
        ae->params().zero_grad();
        auto x = ag::constant(clip);
        auto rec = ae->decode_var(ae->encode_var(x), clip.shape[1], clip.shape[2]);
        auto diff = ag::sub(rec, x);
        auto loss = ag::mean_all(ag::mul(diff, diff));
        ag::backward(loss);
        loss_value = loss->value[0];
        for (auto& [name, v] : ae->params().all())
            for (long i = 0; i < v->value.numel(); ++i) v->value[i] -= lr * v->grad[i];
    }
    return loss_value;
}

void save_codec(const Codec& codec, const std::filesystem::path& path) {
    io::TensorFile tf;
    tf.meta["spec"] = codec.spec().to_json();
    if (const auto* ae = dynamic_cast<const TinyAeCodec*>(&codec))
        for (const auto& [name, v] : ae->params().all()) tf.tensors[name] = v->value;
    tf.save(path);
}

std::unique_ptr<Codec> load_codec(const std::filesystem::path& path) {
    auto tf = io::TensorFile::load(path);
    auto spec = CodecSpec::from_json(tf.meta.at("spec"));
    auto codec = make_codec(spec);
    if (spec.kind == CodecKind::TinyAe) {
        auto* ae = dynamic_cast<TinyAeCodec*>(codec.get());
        std::map<std::string, Tensor> values;
        for (const auto& [name, t] : tf.tensors) values.emplace(name, t);
        ae->params().load(values);
    }
    return codec;
}

}  // namespace endora::codec
