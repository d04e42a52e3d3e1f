#include "endora/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace endora::ag {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

bool any_requires(const std::vector<Var>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>(std::move(value));
    n->requires_grad = any_requires(parents);
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_fn = std::move(fn);
    return n;
}

long last_dim(const Tensor& t) {
    require(t.ndim() >= 1, "autograd: rank-0 tensor");
    return t.shape.back();
}

}  // namespace

Var param(Tensor value) { return std::make_shared<Node>(std::move(value), true); }

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false); }

void backward(const Var& root) {
    require(root->value.numel() == 1, "backward: root must be scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS for the topological order.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Intermediate grads start at zero; parameter grads accumulate.
    for (Node* n : topo)
        if (n != root.get() && n->backward_fn) n->zero_grad();
    root->ensure_grad();
    root->grad.data[0] = 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- arithmetic

namespace {

template <typename F, typename DF>
Var binary_same_shape(const Var& a, const Var& b, F f, DF df, const char* name) {
    require_same_shape(a->value, b->value, name);
    Tensor out(a->value.shape);
    for (long i = 0; i < out.numel(); ++i) out[i] = f(a->value[i], b->value[i]);
    return make_node(std::move(out), {a, b}, [a, b, df](Node& n) {
        for (long i = 0; i < n.value.numel(); ++i) {
            auto [da, db] = df(a->value[i], b->value[i], n.value[i]);
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad[i] += da * n.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad[i] += db * n.grad[i];
            }
        }
    });
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out(a->value.shape);
    for (long i = 0; i < out.numel(); ++i) out[i] = f(a->value[i]);
    return make_node(std::move(out), {a}, [a, df](Node& n) {
        a->ensure_grad();
        for (long i = 0; i < n.value.numel(); ++i) a->grad[i] += df(a->value[i], n.value[i]) * n.grad[i];
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    return binary_same_shape(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair{1.0, 1.0}; }, "add");
}

Var sub(const Var& a, const Var& b) {
    return binary_same_shape(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair{1.0, -1.0}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
    return binary_same_shape(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair{y, x}; }, "mul");
}

Var div(const Var& a, const Var& b) {
    return binary_same_shape(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double) { return std::pair{1.0 / y, -x / (y * y)}; }, "div");
}

Var scale(const Var& a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var sqrt_v(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

Var silu(const Var& a) {
    return unary(
        a,
        [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var add_rowvec(const Var& x, const Var& v) {
    const long d = last_dim(x->value);
    require(v->value.ndim() == 1 && v->value.shape[0] == d, "add_rowvec: vector length mismatch");
    Tensor out(x->value.shape);
    const long rows = out.numel() / d;
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j) out[r * d + j] = x->value[r * d + j] + v->value[j];
    return make_node(std::move(out), {x, v}, [x, v, d, rows](Node& n) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (long i = 0; i < n.value.numel(); ++i) x->grad[i] += n.grad[i];
        }
        if (v->requires_grad) {
            v->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < d; ++j) v->grad[j] += n.grad[r * d + j];
        }
    });
}

Var mul_rowvec(const Var& x, const Var& v) {
    const long d = last_dim(x->value);
    require(v->value.ndim() == 1 && v->value.shape[0] == d, "mul_rowvec: vector length mismatch");
    Tensor out(x->value.shape);
    const long rows = out.numel() / d;
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j) out[r * d + j] = x->value[r * d + j] * v->value[j];
    return make_node(std::move(out), {x, v}, [x, v, d, rows](Node& n) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < d; ++j) x->grad[r * d + j] += v->value[j] * n.grad[r * d + j];
        }
        if (v->requires_grad) {
            v->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < d; ++j) v->grad[j] += x->value[r * d + j] * n.grad[r * d + j];
        }
    });
}

Var broadcast_scalar(const Var& s, Shape shape) {
    require(s->value.numel() == 1, "broadcast_scalar: source must be scalar");
    Tensor out = Tensor::full(std::move(shape), s->value[0]);
    return make_node(std::move(out), {s}, [s](Node& n) {
        s->ensure_grad();
        double acc = 0.0;
        for (long i = 0; i < n.value.numel(); ++i) acc += n.grad[i];
        s->grad[0] += acc;
    });
}

// ------------------------------------------------------------- linear algebra

Var matmul(const Var& x, const Var& w) {
    require(w->value.ndim() == 2, "matmul: weight must be 2-D");
    const long k = last_dim(x->value);
    require(w->value.shape[0] == k, "matmul: inner dimension mismatch");
    const long n_out = w->value.shape[1];
    const long rows = x->value.numel() / k;

    Shape out_shape = x->value.shape;
    out_shape.back() = n_out;
    Tensor out(out_shape);
    {
        MapCM X(x->value.data.data(), rows, k);
        MapCM W(w->value.data.data(), k, n_out);
        MapM Y(out.data.data(), rows, n_out);
        Y.noalias() = X * W;
    }
    return make_node(std::move(out), {x, w}, [x, w, rows, k, n_out](Node& n) {
        MapCM dY(n.grad.data.data(), rows, n_out);
        if (x->requires_grad) {
            x->ensure_grad();
            MapCM W(w->value.data.data(), k, n_out);
            MapM dX(x->grad.data.data(), rows, k);
            dX.noalias() += dY * W.transpose();
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MapCM X(x->value.data.data(), rows, k);
            MapM dW(w->grad.data.data(), k, n_out);
            dW.noalias() += X.transpose() * dY;
        }
    });
}

Var bmm(const Var& a, const Var& b, bool trans_b) {
    require(a->value.ndim() == 3 && b->value.ndim() == 3, "bmm: inputs must be 3-D");
    const long B = a->value.shape[0], M = a->value.shape[1], K = a->value.shape[2];
    require(b->value.shape[0] == B, "bmm: batch mismatch");
    const long N = trans_b ? b->value.shape[1] : b->value.shape[2];
    require((trans_b ? b->value.shape[2] : b->value.shape[1]) == K, "bmm: inner dimension mismatch");

    Tensor out({B, M, N});
    for (long i = 0; i < B; ++i) {
        MapCM A(a->value.data.data() + i * M * K, M, K);
        MapM Y(out.data.data() + i * M * N, M, N);
        if (trans_b) {
            MapCM Bt(b->value.data.data() + i * N * K, N, K);
            Y.noalias() = A * Bt.transpose();
        } else {
            MapCM Bm(b->value.data.data() + i * K * N, K, N);
            Y.noalias() = A * Bm;
        }
    }
    return make_node(std::move(out), {a, b}, [a, b, trans_b, B, M, K, N](Node& n) {
        for (long i = 0; i < B; ++i) {
            MapCM dY(n.grad.data.data() + i * M * N, M, N);
            MapCM A(a->value.data.data() + i * M * K, M, K);
            if (a->requires_grad) {
                a->ensure_grad();
                MapM dA(a->grad.data.data() + i * M * K, M, K);
                if (trans_b) {
                    MapCM Bt(b->value.data.data() + i * N * K, N, K);
                    dA.noalias() += dY * Bt;
                } else {
                    MapCM Bm(b->value.data.data() + i * K * N, K, N);
                    dA.noalias() += dY * Bm.transpose();
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                if (trans_b) {
                    MapM dB(b->grad.data.data() + i * N * K, N, K);
                    dB.noalias() += dY.transpose() * A;
                } else {
                    MapM dB(b->grad.data.data() + i * K * N, K, N);
                    dB.noalias() += A.transpose() * dY;
                }
            }
        }
    });
}

// ----------------------------------------------------------- shape movement

Var reshape(const Var& x, Shape shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_node(std::move(out), {x}, [x](Node& n) {
        x->ensure_grad();
        for (long i = 0; i < n.value.numel(); ++i) x->grad[i] += n.grad[i];
    });
}

Var index_map(const Var& x, Shape out_shape, std::shared_ptr<std::vector<long>> src) {
    require(shape_numel(out_shape) == static_cast<long>(src->size()), "index_map: size mismatch");
    Tensor out(std::move(out_shape));
    for (long i = 0; i < out.numel(); ++i) out[i] = x->value[(*src)[static_cast<size_t>(i)]];
    return make_node(std::move(out), {x}, [x, src](Node& n) {
        x->ensure_grad();
        for (long i = 0; i < n.value.numel(); ++i) x->grad[(*src)[static_cast<size_t>(i)]] += n.grad[i];
    });
}

Var permute(const Var& x, const std::vector<int>& perm) {
    const int nd = x->value.ndim();
    require(static_cast<int>(perm.size()) == nd, "permute: rank mismatch");
    Shape out_shape(perm.size());
    for (int i = 0; i < nd; ++i) out_shape[static_cast<size_t>(i)] = x->value.shape[static_cast<size_t>(perm[i])];

    Shape strides(static_cast<size_t>(nd));
    long acc = 1;
    for (int i = nd - 1; i >= 0; --i) {
        strides[static_cast<size_t>(i)] = acc;
        acc *= x->value.shape[static_cast<size_t>(i)];
    }
    auto src = std::make_shared<std::vector<long>>(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<long> idx(static_cast<size_t>(nd), 0);
    for (size_t o = 0; o < src->size(); ++o) {
        long s = 0;
        for (int i = 0; i < nd; ++i) s += idx[static_cast<size_t>(i)] * strides[static_cast<size_t>(perm[i])];
        (*src)[o] = s;
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return index_map(x, std::move(out_shape), std::move(src));
}

Var slice_lastdim(const Var& x, long start, long len) {
    const long d = last_dim(x->value);
    require(start >= 0 && len >= 1 && start + len <= d, "slice_lastdim: range out of bounds");
    Shape out_shape = x->value.shape;
    out_shape.back() = len;
    const long rows = x->value.numel() / d;
    Tensor out(out_shape);
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < len; ++j) out[r * len + j] = x->value[r * d + start + j];
    return make_node(std::move(out), {x}, [x, start, len, d, rows](Node& n) {
        x->ensure_grad();
        for (long r = 0; r < rows; ++r)
            for (long j = 0; j < len; ++j) x->grad[r * d + start + j] += n.grad[r * len + j];
    });
}

// --------------------------------------------------- normalization / softmax

Var softmax_lastdim(const Var& x) {
    const long d = last_dim(x->value);
    const long rows = x->value.numel() / d;
    Tensor out(x->value.shape);
    for (long r = 0; r < rows; ++r) {
        const double* in = x->value.data.data() + r * d;
        double* o = out.data.data() + r * d;
        double mx = in[0];
        for (long j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (long j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (long j = 0; j < d; ++j) o[j] /= sum;
    }
    return make_node(std::move(out), {x}, [x, d, rows](Node& n) {
        x->ensure_grad();
        for (long r = 0; r < rows; ++r) {
            const double* y = n.value.data.data() + r * d;
            const double* dy = n.grad.data.data() + r * d;
            double dot = 0.0;
            for (long j = 0; j < d; ++j) dot += y[j] * dy[j];
            double* dx = x->grad.data.data() + r * d;
            for (long j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
}

Var layernorm_lastdim(const Var& x, double eps) {
    const long d = last_dim(x->value);
    const long rows = x->value.numel() / d;
    Tensor out(x->value.shape);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    for (long r = 0; r < rows; ++r) {
        const double* in = x->value.data.data() + r * d;
        double mean = 0.0;
        for (long j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (long j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = is;
        double* o = out.data.data() + r * d;
        for (long j = 0; j < d; ++j) o[j] = (in[j] - mean) * is;
    }
    return make_node(std::move(out), {x}, [x, d, rows, inv_std](Node& n) {
        x->ensure_grad();
        for (long r = 0; r < rows; ++r) {
            const double* y = n.value.data.data() + r * d;
            const double* dy = n.grad.data.data() + r * d;
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (long j = 0; j < d; ++j) {
                mean_dy += dy[j];
                mean_dyy += dy[j] * y[j];
            }
            mean_dy /= static_cast<double>(d);
            mean_dyy /= static_cast<double>(d);
            const double is = (*inv_std)[static_cast<size_t>(r)];
            double* dx = x->grad.data.data() + r * d;
            for (long j = 0; j < d; ++j) dx[j] += is * (dy[j] - mean_dy - y[j] * mean_dyy);
        }
    });
}

// ------------------------------------------------------------------ reductions

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    Tensor out({1});
    out[0] = acc;
    return make_node(std::move(out), {x}, [x](Node& n) {
        x->ensure_grad();
        const double g = n.grad[0];
        for (long i = 0; i < x->value.numel(); ++i) x->grad[i] += g;
    });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x->value.numel())); }

Var mean_axis(const Var& x, int axis) {
    const int nd = x->value.ndim();
    if (axis < 0) axis += nd;
    require(axis >= 0 && axis < nd, "mean_axis: axis out of range");
    const size_t ax = static_cast<size_t>(axis);
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->value.shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= x->value.shape[static_cast<size_t>(i)];
    const long n_ax = x->value.shape[ax];

    Shape out_shape;
    for (int i = 0; i < nd; ++i)
        if (i != axis) out_shape.push_back(x->value.shape[static_cast<size_t>(i)]);
    if (out_shape.empty()) out_shape = {1};

    Tensor out(out_shape);
    for (long o = 0; o < outer; ++o)
        for (long a = 0; a < n_ax; ++a)
            for (long i = 0; i < inner; ++i)
                out[o * inner + i] += x->value[(o * n_ax + a) * inner + i] / static_cast<double>(n_ax);
    return make_node(std::move(out), {x}, [x, outer, inner, n_ax](Node& n) {
        x->ensure_grad();
        const double inv = 1.0 / static_cast<double>(n_ax);
        for (long o = 0; o < outer; ++o)
            for (long a = 0; a < n_ax; ++a)
                for (long i = 0; i < inner; ++i)
                    x->grad[(o * n_ax + a) * inner + i] += inv * n.grad[o * inner + i];
    });
}

// ------------------------------------------------------------------- spatial

Var conv3x3_s2(const Var& x, const Var& w, const Var& bias) {
    require(x->value.ndim() == 4, "conv3x3_s2: input must be [B,C,H,W]");
    require(w->value.ndim() == 4 && w->value.shape[2] == 3 && w->value.shape[3] == 3,
            "conv3x3_s2: kernel must be [Cout,Cin,3,3]");
    const long B = x->value.shape[0], C = x->value.shape[1], H = x->value.shape[2], W = x->value.shape[3];
    require(H >= 3 && W >= 3, "conv3x3_s2: input side must be >= 3");
    require(w->value.shape[1] == C, "conv3x3_s2: channel mismatch");
    const long Co = w->value.shape[0];
    require(bias->value.ndim() == 1 && bias->value.shape[0] == Co, "conv3x3_s2: bias length mismatch");
    const long Ho = (H - 1) / 2 + 1, Wo = (W - 1) / 2 + 1;

    auto x_at = [C, H, W](long b, long c, long i, long j) -> long { return ((b * C + c) * H + i) * W + j; };
    auto w_at = [C](long co, long c, long i, long j) -> long { return ((co * C + c) * 3 + i) * 3 + j; };

    Tensor out({B, Co, Ho, Wo});
    long o = 0;
    for (long b = 0; b < B; ++b)
        for (long co = 0; co < Co; ++co)
            for (long oi = 0; oi < Ho; ++oi)
                for (long oj = 0; oj < Wo; ++oj, ++o) {
                    double acc = bias->value[co];
                    for (long c = 0; c < C; ++c)
                        for (long ki = 0; ki < 3; ++ki)
                            for (long kj = 0; kj < 3; ++kj) {
                                const long ii = 2 * oi + ki - 1, jj = 2 * oj + kj - 1;
                                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                                acc += x->value[x_at(b, c, ii, jj)] * w->value[w_at(co, c, ki, kj)];
                            }
                    out[o] = acc;
                }
    return make_node(std::move(out), {x, w, bias}, [=](Node& n) {
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (bias->requires_grad) bias->ensure_grad();
        long oo = 0;
        for (long b = 0; b < B; ++b)
            for (long co = 0; co < Co; ++co)
                for (long oi = 0; oi < Ho; ++oi)
                    for (long oj = 0; oj < Wo; ++oj, ++oo) {
                        const double g = n.grad[oo];
                        if (bias->requires_grad) bias->grad[co] += g;
                        for (long c = 0; c < C; ++c)
                            for (long ki = 0; ki < 3; ++ki)
                                for (long kj = 0; kj < 3; ++kj) {
                                    const long ii = 2 * oi + ki - 1, jj = 2 * oj + kj - 1;
                                    if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                                    if (x->requires_grad)
                                        x->grad[x_at(b, c, ii, jj)] += g * w->value[w_at(co, c, ki, kj)];
                                    if (w->requires_grad)
                                        w->grad[w_at(co, c, ki, kj)] += g * x->value[x_at(b, c, ii, jj)];
                                }
                    }
    });
}

Var avgpool2d(const Var& x, long k) {
    require(x->value.ndim() == 3, "avgpool2d: input must be [B,H,W]");
    require(k >= 1, "avgpool2d: kernel must be >= 1");
    const long B = x->value.shape[0], H = x->value.shape[1], W = x->value.shape[2];
    require(H % k == 0 && W % k == 0, "avgpool2d: kernel must divide spatial dims");
    const long Ho = H / k, Wo = W / k;
    const double inv = 1.0 / static_cast<double>(k * k);

    Tensor out({B, Ho, Wo});
    for (long b = 0; b < B; ++b)
        for (long oi = 0; oi < Ho; ++oi)
            for (long oj = 0; oj < Wo; ++oj) {
                double acc = 0.0;
                for (long ki = 0; ki < k; ++ki)
                    for (long kj = 0; kj < k; ++kj)
                        acc += x->value[(b * H + oi * k + ki) * W + oj * k + kj];
                out[(b * Ho + oi) * Wo + oj] = acc * inv;
            }
    return make_node(std::move(out), {x}, [x, k, B, H, W, Ho, Wo, inv](Node& n) {
        x->ensure_grad();
        for (long b = 0; b < B; ++b)
            for (long oi = 0; oi < Ho; ++oi)
                for (long oj = 0; oj < Wo; ++oj) {
                    const double g = n.grad[(b * Ho + oi) * Wo + oj] * inv;
                    for (long ki = 0; ki < k; ++ki)
                        for (long kj = 0; kj < k; ++kj)
                            x->grad[(b * H + oi * k + ki) * W + oj * k + kj] += g;
                }
    });
}

}  // namespace endora::ag
