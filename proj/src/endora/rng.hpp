#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "endora/tensor.hpp"

namespace endora {

/// Seeded generator with a serializable state, so training runs can be
/// checkpointed and resumed bit-exactly. Gaussian draws use Box-Muller over
/// the engine's uniforms instead of std::normal_distribution, whose internal
/// state is not portable across saves.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1).
    double uniform();

    /// Uniform integer on [lo, hi] inclusive.
    long uniform_int(long lo, long hi);

    double gaussian();

    Tensor gaussian_tensor(Shape shape);

    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace endora
