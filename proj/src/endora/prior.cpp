#include "endora/prior.hpp"

#include <cmath>

#include "endora/backbone.hpp"
#include "endora/serialize.hpp"

namespace endora::prior {

namespace {

/// Contiguous frame slice of an [F, S, S] map stack.
ag::Var frame_of(const ag::Var& maps, long f) {
    const long F = maps->value.shape[0], S = maps->value.shape[1];
    auto src = std::make_shared<std::vector<long>>(static_cast<size_t>(S * S));
    for (long i = 0; i < S * S; ++i) (*src)[static_cast<size_t>(i)] = f * S * S + i;
    return ag::index_map(maps, {S, S}, std::move(src));
}

class ToyPrior final : public PriorProvider {
public:
    ToyPrior(uint64_t seed, long patch, long dim, long heads, long input_side)
        : patch_(patch), dim_(dim), heads_(heads), input_side_(input_side) {
        require(dim % heads == 0, "toy prior: dim must be divisible by heads");
        require(input_side % patch == 0, "toy prior: patch must divide the input side");
        Rng rng(seed);
        const long q = patch * patch * 3;
        embed_w_ = nn::gaussian_init(rng, {q, dim}, 0.2);
        const long side_tokens = input_side / patch;
        pe_ = nn::sinusoidal_embedding_table(side_tokens * side_tokens, dim);
        for (int i = 0; i < 2; ++i) {
            Block b;
            b.qkv = nn::gaussian_init(rng, {dim, 3 * dim}, 0.2);
            b.proj = nn::gaussian_init(rng, {dim, dim}, 0.2);
            b.mlp_in = nn::gaussian_init(rng, {dim, 2 * dim}, 0.2);
            b.mlp_out = nn::gaussian_init(rng, {2 * dim, dim}, 0.2);
            blocks_.push_back(std::move(b));
        }
    }

    long levels() const override { return 4; }

    long map_side() const override {
        const long s = input_side_ / patch_;
        return s * s;
    }

    std::vector<Tensor> attention_maps(const Tensor& frames) const override {
        require(frames.ndim() == 4 && frames.shape[3] == 3, "prior: frames must be [F,H,W,3]");
        require(frames.shape[1] == input_side_ && frames.shape[2] == input_side_,
                "prior: frame side does not match the provider's declared input side");
        const long F = frames.shape[0], L = map_side(), dh = dim_ / heads_;

        // frozen forward on constants; no gradient path exists by design
        auto x = ag::matmul(model::extract_patches(ag::constant(frames), patch_), ag::constant(embed_w_));
        x = ag::reshape(
            ag::add_rowvec(ag::reshape(x, {F, L * dim_}), ag::constant(pe_.reshaped({L * dim_}))),
            {F, L, dim_});

        std::vector<Tensor> maps;
        for (const auto& blk : blocks_) {
            auto h = ag::layernorm_lastdim(x);
            auto qkv_out = ag::matmul(h, ag::constant(blk.qkv));
            auto split = [&](long i) {
                auto part = ag::slice_lastdim(qkv_out, i * dim_, dim_);
                return ag::reshape(ag::permute(ag::reshape(part, {F, L, heads_, dh}), {0, 2, 1, 3}),
                                   {F * heads_, L, dh});
            };
            auto attn = ag::softmax_lastdim(
                ag::scale(ag::bmm(split(0), split(1), true), 1.0 / std::sqrt(static_cast<double>(dh))));
            maps.push_back(ag::mean_axis(ag::reshape(attn, {F, heads_, L, L}), 1)->value);

            auto ctx = ag::reshape(
                ag::permute(ag::reshape(ag::bmm(attn, split(2)), {F, heads_, L, dh}), {0, 2, 1, 3}),
                {F, L, dim_});
            x = ag::add(x, ag::matmul(ctx, ag::constant(blk.proj)));
            auto m = ag::layernorm_lastdim(x);
            x = ag::add(x, ag::matmul(ag::gelu(ag::matmul(m, ag::constant(blk.mlp_in))),
                                      ag::constant(blk.mlp_out)));
        }
        // layers {0,1} padded to four levels
        return {maps[0], maps[1], maps[0], maps[1]};
    }

private:
    struct Block {
        Tensor qkv, proj, mlp_in, mlp_out;
    };
    long patch_, dim_, heads_, input_side_;
    Tensor embed_w_, pe_;
    std::vector<Block> blocks_;
};

class ReplayPrior final : public PriorProvider {
public:
    explicit ReplayPrior(const std::filesystem::path& file) {
        auto tf = io::TensorFile::load(file);
        const long n = tf.meta.value("levels", 0L);
        if (n < 1) throw DataError("replay prior: header missing a positive 'levels' count");
        for (long i = 0; i < n; ++i) {
            const Tensor& m = tf.get("level" + std::to_string(i));
            if (m.ndim() != 3 || m.shape[1] != m.shape[2])
                throw DataError("replay prior: level maps must be [F,S,S]");
            maps_.push_back(m);
        }
        side_ = maps_[0].shape[1];
    }

    long levels() const override { return static_cast<long>(maps_.size()); }
    long map_side() const override { return side_; }
    std::vector<Tensor> attention_maps(const Tensor&) const override { return maps_; }

private:
    std::vector<Tensor> maps_;
    long side_ = 0;
};

constexpr double kDegenerateVar = 1e-24;

}  // namespace

std::unique_ptr<PriorProvider> toy_prior_provider(uint64_t seed, long patch, long dim, long heads,
                                                  long input_side) {
    return std::make_unique<ToyPrior>(seed, patch, dim, heads, input_side);
}

std::unique_ptr<PriorProvider> replay_prior_provider(const std::filesystem::path& file) {
    return std::make_unique<ReplayPrior>(file);
}

CorrResult pearson_corr(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ContractError("pearson_corr: length mismatch");
    require(a.numel() >= 2, "pearson_corr: need at least two elements");
    const long n = a.numel();
    double ma = 0.0, mb = 0.0;
    for (long i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (long i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va / n <= kDegenerateVar || vb / n <= kDegenerateVar) return {0.0, true};
    return {cov / std::sqrt(va * vb), false};
}

ag::Var pearson_corr_var(const ag::Var& a, const ag::Var& b, bool* degenerate) {
    auto plain = pearson_corr(a->value, b->value);
    if (degenerate) *degenerate = plain.degenerate;
    if (plain.degenerate) return ag::constant(Tensor::zeros({1}));

    auto center = [](const ag::Var& x) {
        return ag::sub(x, ag::broadcast_scalar(ag::mean_all(x), x->value.shape));
    };
    auto da = center(a), db = center(b);
    auto cov = ag::mean_all(ag::mul(da, db));
    auto va = ag::mean_all(ag::mul(da, da));
    auto vb = ag::mean_all(ag::mul(db, db));
    return ag::div(cov, ag::sqrt_v(ag::mul(va, vb)));
}

ag::Var AdapterConv::operator()(const ag::Var& map) const {
    require(map->value.ndim() == 3 && map->value.shape[1] == map->value.shape[2],
            "adapt_map: input must be [F,S,S]");
    const long F = map->value.shape[0], S = map->value.shape[1];
    if (S < 3) throw ContractError("adapt_map: input side must be >= 3");
    auto x = ag::reshape(map, {F, 1, S, S});
    auto y = ag::conv3x3_s2(x, w, b);
    const long So = (S - 1) / 2 + 1;
    return ag::reshape(y, {F, So, So});
}

AdapterConv make_adapter(nn::ParamStore& ps, uint64_t seed) {
    Rng rng(seed);
    Tensor w = nn::gaussian_init(rng, {1, 1, 3, 3}, 0.02);
    for (auto& v : w.data) v += 1.0 / 9.0;  // start near a box average
    return {ps.add("prior_adapter.w", std::move(w)), ps.add("prior_adapter.b", Tensor::zeros({1}))};
}

std::vector<long> level_pairing(long spatial_blocks, long levels) {
    require(spatial_blocks >= 1 && levels >= 1, "level_pairing: counts must be positive");
    std::vector<long> out(static_cast<size_t>(levels));
    for (long i = 0; i < levels; ++i)
        out[static_cast<size_t>(i)] = (i + 1) * spatial_blocks / (levels + 1);
    return out;
}

namespace {

/// Pool the larger map down when the sides disagree after adaptation.
std::pair<ag::Var, ag::Var> equalize(ag::Var student, ag::Var prior_map) {
    const long ss = student->value.shape[1], ps = prior_map->value.shape[1];
    if (ss == ps) return {student, prior_map};
    if (ss > ps && ss % ps == 0) return {ag::avgpool2d(student, ss / ps), prior_map};
    if (ps > ss && ps % ss == 0) return {student, ag::avgpool2d(prior_map, ps / ss)};
    throw ContractError("prior_loss: map sides " + std::to_string(ss) + " and " + std::to_string(ps) +
                        " cannot be equalized by pooling");
}

}  // namespace

ag::Var prior_loss(const std::vector<ag::Var>& student_maps,
                   const std::vector<ag::Var>& adapted_prior_maps) {
    require(!student_maps.empty(), "prior_loss: no levels");
    if (student_maps.size() != adapted_prior_maps.size())
        throw ContractError("prior_loss: unpaired level (student and prior level counts differ)");

    ag::Var acc;
    long count = 0;
    for (size_t lvl = 0; lvl < student_maps.size(); ++lvl) {
        require(student_maps[lvl]->value.ndim() == 3 && adapted_prior_maps[lvl]->value.ndim() == 3,
                "prior_loss: maps must be [F,S,S]");
        require(student_maps[lvl]->value.shape[0] == adapted_prior_maps[lvl]->value.shape[0],
                "prior_loss: frame count mismatch");
        auto [s, p] = equalize(student_maps[lvl], adapted_prior_maps[lvl]);
        const long F = s->value.shape[0];
        for (long f = 0; f < F; ++f) {
            auto corr = pearson_corr_var(frame_of(s, f), frame_of(p, f));
            acc = acc ? ag::add(acc, corr) : corr;
            ++count;
        }
    }
    return ag::add_scalar(ag::scale(acc, -1.0 / static_cast<double>(count)), 1.0);
}

double total_loss(double elbo, double prior, double alpha) {
    if (!std::isfinite(elbo) || !std::isfinite(prior))
        throw NumericError("total_loss: non-finite input");
    return elbo + alpha * prior;
}

ag::Var total_loss_var(const ag::Var& elbo, const ag::Var& prior, double alpha) {
    if (!elbo->value.all_finite() || !prior->value.all_finite())
        throw NumericError("total_loss: non-finite input");
    return ag::add(elbo, ag::scale(prior, alpha));
}

}  // namespace endora::prior
