#include "endora/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace endora {

double Rng::uniform() {
    // 53-bit mantissa from the top bits of the engine output.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

long Rng::uniform_int(long lo, long hi) {
    require(lo <= hi, "uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // Rejection sampling keeps the distribution exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return lo + static_cast<long>(v % span);
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Tensor Rng::gaussian_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = gaussian();
    return t;
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_ << " " << (has_spare_ ? 1 : 0) << " ";
    os.precision(17);
    os << spare_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> engine_ >> spare_flag >> spare_;
    if (is.fail()) throw DataError("invalid rng state string");
    has_spare_ = spare_flag != 0;
}

}  // namespace endora
