#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "endora/layers.hpp"

namespace endora::codec {

enum class CodecKind { Identity, Pool, TinyAe };

CodecKind codec_kind_from_string(const std::string& s);
std::string to_string(CodecKind k);

struct CodecSpec {
    CodecKind kind = CodecKind::Pool;
    long downscale = 2;    // spatial factor k; h = H/k, w = W/k
    long latent_c = 3;

    void validate() const;
    nlohmann::json to_json() const;
    static CodecSpec from_json(const nlohmann::json& j);
};

/// Pluggable pixel <-> latent codec. Both directions apply per frame; no
/// temporal mixing ever happens here.
class Codec {
public:
    virtual ~Codec() = default;
    virtual const CodecSpec& spec() const = 0;

    /// video: [F, H, W, 3] in [-1, 1] -> latent [F, H/k, W/k, C].
    virtual Tensor encode(const Tensor& video) const = 0;
    /// latent -> video, same frame count.
    virtual Tensor decode(const Tensor& latent) const = 0;
};

std::unique_ptr<Codec> make_codec(const CodecSpec& spec, uint64_t seed = 0);

/// Fit the tiny autoencoder codec on pixel clips by plain gradient descent
/// on reconstruction error; returns the final training MSE. The fitted
/// weights are frozen for diffusion training.
double train_tiny_ae(Codec& codec, const std::vector<Tensor>& clips, long steps, double lr, Rng& rng);

void save_codec(const Codec& codec, const std::filesystem::path& path);
std::unique_ptr<Codec> load_codec(const std::filesystem::path& path);

}  // namespace endora::codec
