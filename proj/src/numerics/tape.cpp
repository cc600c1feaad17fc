#include "ude/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ude/errors.hpp"

namespace ude {

namespace {

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor Tape::finish(const char* name, Tensor out, bool track, std::function<void()> backward) {
    check_finite(out, name);
    if (track) {
        out.set_requires_grad(true);
        ops_.push_back(Op{name, out.d_, std::move(backward)});
    }
    return out;
}

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(ops_.size());
    for (const auto& op : ops_) names.emplace_back(op.name);
    return names;
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.d_->ensure_grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward();
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    Tensor out(a.shape(), std::move(v));
    const bool track = needs_grad({&a, &b});
    Data ad = a.d_, bd = b.d_, o = out.d_;
    return finish("add", out, track, [ad, bd, o] {
        for (Data d : {ad, bd}) {
            if (!d->requires_grad) continue;
            auto& g = d->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
        }
    });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, bd = b.d_, o = out.d_;
    return finish("sub", out, needs_grad({&a, &b}), [ad, bd, o] {
        if (ad->requires_grad) {
            auto& g = ad->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
        }
        if (bd->requires_grad) {
            auto& g = bd->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
        }
    });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, bd = b.d_, o = out.d_;
    return finish("mul", out, needs_grad({&a, &b}), [ad, bd, o] {
        if (ad->requires_grad) {
            auto& g = ad->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bd->value[i];
        }
        if (bd->requires_grad) {
            auto& g = bd->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * ad->value[i];
        }
    });
}

Tensor Tape::add_row(const Tensor& a, const Tensor& row) {
    const std::size_t n = a.cols();
    if (row.numel() != n) {
        throw DimensionError("add_row: row of " + std::to_string(row.numel()) + " values for " + std::to_string(n) +
                             " columns");
    }
    const std::size_t m = a.rows();
    std::vector<double> v(a.numel());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) v[r * n + c] = a[r * n + c] + row[c];
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, rd = row.d_, o = out.d_;
    return finish("add_row", out, needs_grad({&a, &row}), [ad, rd, o, m, n] {
        if (ad->requires_grad) {
            auto& g = ad->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
        }
        if (rd->requires_grad) {
            auto& g = rd->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) g[c] += o->grad[r * n + c];
        }
    });
}

Tensor Tape::scale(const Tensor& a, double s) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * s;
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("scale", out, needs_grad({&a}), [ad, o, s] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * s;
    });
}

Tensor Tape::add_scalar(const Tensor& a, double s) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + s;
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("add_scalar", out, needs_grad({&a}), [ad, o] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
}

Tensor Tape::relu(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] > 0.0 ? a[i] : 0.0;
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("relu", out, needs_grad({&a}), [ad, o] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (ad->value[i] > 0.0) g[i] += o->grad[i];
    });
}

Tensor Tape::gelu(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = a[i];
        v[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("gelu", out, needs_grad({&a}), [ad, o] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = ad->value[i];
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            g[i] += o->grad[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
        }
    });
}

Tensor Tape::tanh(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a[i]);
    Tensor out(a.shape(), std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("tanh", out, needs_grad({&a}), [ad, o] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = o->value[i];
            g[i] += o->grad[i] * (1.0 - y * y);
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

// c[M x N] += a[M x K] * b[K x N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[M x N] += a[M x K] * b[N x K]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            c[i * n + j] += s;
        }
    }
}

// c[K x N] += a[M x K]^T * b[M x N]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    }
    std::vector<double> v(m * n, 0.0);
    gemm_nn(a.values().data(), b.values().data(), v.data(), m, k, n);
    Tensor out({m, n}, std::move(v));
    Data ad = a.d_, bd = b.d_, o = out.d_;
    return finish("matmul", out, needs_grad({&a, &b}), [ad, bd, o, m, k, n] {
        if (ad->requires_grad) gemm_nt(o->grad.data(), bd->value.data(), ad->ensure_grad().data(), m, n, k);
        if (bd->requires_grad) gemm_tn(ad->value.data(), o->grad.data(), bd->ensure_grad().data(), m, k, n);
    });
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: inner extents differ " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()) + "^T");
    }
    std::vector<double> v(m * n, 0.0);
    gemm_nt(a.values().data(), b.values().data(), v.data(), m, k, n);
    Tensor out({m, n}, std::move(v));
    Data ad = a.d_, bd = b.d_, o = out.d_;
    return finish("matmul_nt", out, needs_grad({&a, &b}), [ad, bd, o, m, k, n] {
        // dA = dC * B ; dB = dC^T * A
        if (ad->requires_grad) gemm_nn(o->grad.data(), bd->value.data(), ad->ensure_grad().data(), m, n, k);
        if (bd->requires_grad) gemm_tn(o->grad.data(), ad->value.data(), bd->ensure_grad().data(), m, n, k);
    });
}

Tensor Tape::transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a[i * n + j];
    Tensor out({n, m}, std::move(v));
    Data ad = a.d_, o = out.d_;
    return finish("transpose", out, needs_grad({&a}), [ad, o, m, n] {
        auto& g = ad->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o->grad[j * m + i];
    });
}

// ---------------------------------------------------------------------------
// Normalisation

Tensor Tape::softmax(const Tensor& x, int axis) {
    const int rank = static_cast<int>(x.rank());
    if (rank == 0) throw DimensionError("softmax: rank-0 tensor has no axis");
    const int ax = axis < 0 ? axis + rank : axis;
    if (ax < 0 || ax >= rank) throw DimensionError("softmax: axis out of range");
    const std::size_t extent = x.shape()[static_cast<std::size_t>(ax)];
    if (extent == 0) throw DimensionError("softmax: empty axis");
    std::size_t inner = 1;
    for (int i = ax + 1; i < rank; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
    const std::size_t outer = x.numel() / (extent * inner);

    std::vector<double> v(x.numel());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < extent; ++e) mx = std::max(mx, x[base + e * inner]);
            double s = 0.0;
            for (std::size_t e = 0; e < extent; ++e) {
                const double ex = std::exp(x[base + e * inner] - mx);
                v[base + e * inner] = ex;
                s += ex;
            }
            for (std::size_t e = 0; e < extent; ++e) v[base + e * inner] /= s;
        }
    }
    Tensor out(x.shape(), std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("softmax", out, needs_grad({&x}), [xd, od, outer, inner, extent] {
        auto& g = xd->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * extent * inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < extent; ++e) dot += od->grad[base + e * inner] * od->value[base + e * inner];
                for (std::size_t e = 0; e < extent; ++e) {
                    const std::size_t i = base + e * inner;
                    g[i] += od->value[i] * (od->grad[i] - dot);
                }
            }
        }
    });
}

Tensor Tape::masked_softmax(const Tensor& x, const VisibilityMask& mask) {
    require_rank2(x, "masked_softmax");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (mask.rows != m || mask.cols != n) throw DimensionError("masked_softmax: mask shape does not match scores");
    std::vector<double> v(m * n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c)
            if (mask(r, c)) mx = std::max(mx, x[r * n + c]);
        if (!std::isfinite(mx)) throw ContractError("masked_softmax: row " + std::to_string(r) + " sees no column");
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (!mask(r, c)) continue;
            const double ex = std::exp(x[r * n + c] - mx);
            v[r * n + c] = ex;
            s += ex;
        }
        for (std::size_t c = 0; c < n; ++c) v[r * n + c] /= s;
    }
    Tensor out({m, n}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("masked_softmax", out, needs_grad({&x}), [xd, od, m, n] {
        auto& g = xd->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
            const double* y = od->value.data() + r * n;
            const double* gy = od->grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += gy[c] * y[c];
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (gy[c] - dot);
        }
    });
}

Tensor Tape::log_softmax(const Tensor& x) {
    const std::size_t n = x.cols(), m = x.rows();
    if (n == 0) throw DimensionError("log_softmax: empty axis");
    std::vector<double> v(x.numel());
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, x[r * n + c]);
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += std::exp(x[r * n + c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < n; ++c) v[r * n + c] = x[r * n + c] - lse;
    }
    Tensor out(x.shape(), std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("log_softmax", out, needs_grad({&x}), [xd, od, m, n] {
        auto& g = xd->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < n; ++c) gs += od->grad[r * n + c];
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t i = r * n + c;
                g[i] += od->grad[i] - std::exp(od->value[i]) * gs;
            }
        }
    });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.cols(), m = x.rows();
    if (d == 0) throw DimensionError("layer_norm: empty feature axis");
    if (gain.numel() != d || bias.numel() != d) throw DimensionError("layer_norm: gain/bias width mismatch");
    std::vector<double> v(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(m);
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = x.values().data() + r * d;
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += row[c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (row[c] - mu) * is;
            xhat[r * d + c] = h;
            v[r * d + c] = h * gain[c] + bias[c];
        }
    }
    Tensor out(x.shape(), std::move(v));
    Data xd = x.d_, gd = gain.d_, bd = bias.d_, od = out.d_;
    return finish("layer_norm", out, needs_grad({&x, &gain, &bias}),
                  [xd, gd, bd, od, m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                      const auto& gy = od->grad;
                      if (gd->requires_grad) {
                          auto& g = gd->ensure_grad();
                          for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t c = 0; c < d; ++c) g[c] += gy[r * d + c] * xhat[r * d + c];
                      }
                      if (bd->requires_grad) {
                          auto& g = bd->ensure_grad();
                          for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t c = 0; c < d; ++c) g[c] += gy[r * d + c];
                      }
                      if (xd->requires_grad) {
                          auto& g = xd->ensure_grad();
                          const double inv_d = 1.0 / static_cast<double>(d);
                          for (std::size_t r = 0; r < m; ++r) {
                              double mean_dh = 0.0, mean_dh_h = 0.0;
                              for (std::size_t c = 0; c < d; ++c) {
                                  const double dh = gy[r * d + c] * gd->value[c];
                                  mean_dh += dh;
                                  mean_dh_h += dh * xhat[r * d + c];
                              }
                              mean_dh *= inv_d;
                              mean_dh_h *= inv_d;
                              for (std::size_t c = 0; c < d; ++c) {
                                  const double dh = gy[r * d + c] * gd->value[c];
                                  g[r * d + c] += inv_std[r] * (dh - mean_dh - xhat[r * d + c] * mean_dh_h);
                              }
                          }
                      }
                  });
}

Tensor Tape::l2_normalize_rows(const Tensor& x) {
    const std::size_t n = x.cols(), m = x.rows();
    std::vector<double> v(x.numel());
    std::vector<double> norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += x[r * n + c] * x[r * n + c];
        const double nr = std::max(std::sqrt(s), 1e-12);
        norms[r] = nr;
        for (std::size_t c = 0; c < n; ++c) v[r * n + c] = x[r * n + c] / nr;
    }
    Tensor out(x.shape(), std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("l2_normalize_rows", out, needs_grad({&x}), [xd, od, m, n, norms = std::move(norms)] {
        auto& g = xd->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += od->grad[r * n + c] * od->value[r * n + c];
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t i = r * n + c;
                g[i] += (od->grad[i] - od->value[i] * dot) / norms[r];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Temporal

Tensor Tape::conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad) {
    require_rank2(x, "conv1d");
    if (kernel.rank() != 3) throw DimensionError("conv1d: kernel must be W x Cin x Cout");
    if (stride == 0) throw DimensionError("conv1d: stride must be positive");
    const std::size_t t_in = x.shape()[0], cin = x.shape()[1];
    const std::size_t w = kernel.shape()[0], cout = kernel.shape()[2];
    if (kernel.shape()[1] != cin) {
        throw DimensionError("conv1d: kernel expects " + std::to_string(kernel.shape()[1]) + " input channels, got " +
                             std::to_string(cin));
    }
    if (t_in + 2 * pad < w) throw DimensionError("conv1d: output length < 1");
    const std::size_t t_out = (t_in + 2 * pad - w) / stride + 1;

    std::vector<double> v(t_out * cout, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    for (std::size_t t = 0; t < t_out; ++t) {
        double* orow = v.data() + t * cout;
        for (std::size_t k = 0; k < w; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
            gemm_nn(xv + static_cast<std::size_t>(src) * cin, kv + k * cin * cout, orow, 1, cin, cout);
        }
    }
    Tensor out({t_out, cout}, std::move(v));
    Data xd = x.d_, kd = kernel.d_, od = out.d_;
    return finish("conv1d", out, needs_grad({&x, &kernel}), [xd, kd, od, t_in, t_out, cin, cout, w, stride, pad] {
        const double* gy = od->grad.data();
        double* gx = xd->requires_grad ? xd->ensure_grad().data() : nullptr;
        double* gk = kd->requires_grad ? kd->ensure_grad().data() : nullptr;
        for (std::size_t t = 0; t < t_out; ++t) {
            for (std::size_t k = 0; k < w; ++k) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
                const std::size_t s = static_cast<std::size_t>(src);
                if (gx) gemm_nt(gy + t * cout, kd->value.data() + k * cin * cout, gx + s * cin, 1, cout, cin);
                if (gk) gemm_tn(xd->value.data() + s * cin, gy + t * cout, gk + k * cin * cout, 1, cin, cout);
            }
        }
    });
}

Tensor Tape::upsample_rows(const Tensor& x, std::size_t factor) {
    require_rank2(x, "upsample_rows");
    if (factor == 0) throw DimensionError("upsample_rows: factor must be positive");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> v(m * factor * n);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t f = 0; f < factor; ++f)
            std::copy_n(x.values().data() + r * n, n, v.data() + (r * factor + f) * n);
    Tensor out({m * factor, n}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("upsample_rows", out, needs_grad({&x}), [xd, od, m, n, factor] {
        auto& g = xd->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t f = 0; f < factor; ++f)
                for (std::size_t c = 0; c < n; ++c) g[r * n + c] += od->grad[(r * factor + f) * n + c];
    });
}

Tensor Tape::max_rows(const Tensor& x) {
    require_rank2(x, "max_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (m == 0) throw DimensionError("max_rows: empty sequence");
    std::vector<double> v(n);
    std::vector<std::size_t> arg(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        double best = x[c];
        for (std::size_t r = 1; r < m; ++r) {
            if (x[r * n + c] > best) {
                best = x[r * n + c];
                arg[c] = r;
            }
        }
        v[c] = best;
    }
    Tensor out({1, n}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("max_rows", out, needs_grad({&x}), [xd, od, n, arg = std::move(arg)] {
        auto& g = xd->ensure_grad();
        for (std::size_t c = 0; c < n; ++c) g[arg[c] * n + c] += od->grad[c];
    });
}

Tensor Tape::mean_rows(const Tensor& x) {
    require_rank2(x, "mean_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (m == 0) throw DimensionError("mean_rows: empty sequence");
    std::vector<double> v(n, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) v[c] += x[r * n + c];
    for (double& e : v) e /= static_cast<double>(m);
    Tensor out({1, n}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("mean_rows", out, needs_grad({&x}), [xd, od, m, n] {
        auto& g = xd->ensure_grad();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += od->grad[c] * inv;
    });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor Tape::gather_rows(const Tensor& table, std::span<const int> ids) {
    require_rank2(table, "gather_rows");
    const std::size_t rows = table.shape()[0], n = table.shape()[1];
    std::vector<double> v(ids.size() * n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
            throw TokenError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(rows) + " rows");
        }
        std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * n, n, v.data() + i * n);
    }
    Tensor out({ids.size(), n}, std::move(v));
    Data td = table.d_, od = out.d_;
    std::vector<int> idv(ids.begin(), ids.end());
    return finish("gather_rows", out, needs_grad({&table}), [td, od, n, idv = std::move(idv)] {
        auto& g = td->ensure_grad();
        for (std::size_t i = 0; i < idv.size(); ++i)
            for (std::size_t c = 0; c < n; ++c) g[static_cast<std::size_t>(idv[i]) * n + c] += od->grad[i * n + c];
    });
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank2(x, "slice_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin + count > m) throw DimensionError("slice_rows: range exceeds " + std::to_string(m) + " rows");
    std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
    Tensor out({count, n}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("slice_rows", out, needs_grad({&x}), [xd, od, begin, count, n] {
        auto& g = xd->ensure_grad();
        for (std::size_t i = 0; i < count * n; ++i) g[begin * n + i] += od->grad[i];
    });
}

Tensor Tape::slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank2(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (begin + count > n) throw DimensionError("slice_cols: range exceeds " + std::to_string(n) + " columns");
    std::vector<double> v(m * count);
    for (std::size_t r = 0; r < m; ++r)
        std::copy_n(x.values().data() + r * n + begin, count, v.data() + r * count);
    Tensor out({m, count}, std::move(v));
    Data xd = x.d_, od = out.d_;
    return finish("slice_cols", out, needs_grad({&x}), [xd, od, m, n, begin, count] {
        auto& g = xd->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < count; ++c) g[r * n + begin + c] += od->grad[r * count + c];
    });
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    bool track = false;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
        m += p.shape()[0];
        track = track || p.requires_grad();
    }
    track = track && recording_;
    std::vector<double> v;
    v.reserve(m * n);
    std::vector<Data> ds;
    for (const auto& p : parts) {
        v.insert(v.end(), p.values().begin(), p.values().end());
        ds.push_back(p.d_);
    }
    Tensor out({m, n}, std::move(v));
    Data od = out.d_;
    return finish("concat_rows", out, track, [ds = std::move(ds), od] {
        std::size_t off = 0;
        for (const auto& d : ds) {
            const std::size_t len = d->value.size();
            if (d->requires_grad) {
                auto& g = d->ensure_grad();
                for (std::size_t i = 0; i < len; ++i) g[i] += od->grad[off + i];
            }
            off += len;
        }
    });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    bool track = false;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.shape()[0] != m) throw DimensionError("concat_cols: row mismatch");
        n += p.shape()[1];
        track = track || p.requires_grad();
    }
    track = track && recording_;
    std::vector<double> v(m * n);
    std::vector<Data> ds;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.shape()[1];
        for (std::size_t r = 0; r < m; ++r) std::copy_n(p.values().data() + r * w, w, v.data() + r * n + off);
        off += w;
        ds.push_back(p.d_);
    }
    Tensor out({m, n}, std::move(v));
    Data od = out.d_;
    return finish("concat_cols", out, track, [ds = std::move(ds), od, m, n] {
        std::size_t off = 0;
        for (const auto& d : ds) {
            const std::size_t w = d->shape[1];
            if (d->requires_grad) {
                auto& g = d->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < w; ++c) g[r * w + c] += od->grad[r * n + off + c];
            }
            off += w;
        }
    });
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
    if (ude::numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor out(std::move(shape), x.to_vector());
    Data xd = x.d_, od = out.d_;
    return finish("reshape", out, needs_grad({&x}), [xd, od] {
        auto& g = xd->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += od->grad[i];
    });
}

Tensor Tape::detach(const Tensor& x) { return Tensor(x.shape(), x.to_vector(), false); }

// ---------------------------------------------------------------------------
// Reductions

Tensor Tape::sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    Data xd = x.d_, od = out.d_;
    return finish("sum", out, needs_grad({&x}), [xd, od] {
        auto& g = xd->ensure_grad();
        for (double& e : g) e += od->grad[0];
    });
}

Tensor Tape::mean(const Tensor& x) {
    if (x.numel() == 0) throw DimensionError("mean: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(s * inv);
    Data xd = x.d_, od = out.d_;
    return finish("mean", out, needs_grad({&x}), [xd, od, inv] {
        auto& g = xd->ensure_grad();
        for (double& e : g) e += od->grad[0] * inv;
    });
}

Tensor Tape::mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.numel() == 0) throw DimensionError("mse: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::scalar(s * inv);
    Data ad = a.d_, bd = b.d_, od = out.d_;
    return finish("mse", out, needs_grad({&a, &b}), [ad, bd, od, inv] {
        const double k = 2.0 * inv * od->grad[0];
        if (ad->requires_grad) {
            auto& g = ad->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (ad->value[i] - bd->value[i]);
        }
        if (bd->requires_grad) {
            auto& g = bd->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (ad->value[i] - bd->value[i]);
        }
    });
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_rank2(logits, "cross_entropy");
    const std::size_t m = logits.shape()[0], n = logits.shape()[1];
    if (targets.size() != m) throw DimensionError("cross_entropy: one target per logit row required");
    if (m == 0) throw DimensionError("cross_entropy: no rows");
    std::vector<double> probs(m * n);
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= n) throw TokenError("cross_entropy: target out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, logits[r * n + c]);
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double e = std::exp(logits[r * n + c] - mx);
            probs[r * n + c] = e;
            s += e;
        }
        for (std::size_t c = 0; c < n; ++c) probs[r * n + c] /= s;
        loss -= logits[r * n + static_cast<std::size_t>(t)] - mx - std::log(s);
    }
    const double inv = 1.0 / static_cast<double>(m);
    Tensor out = Tensor::scalar(loss * inv);
    Data ld = logits.d_, od = out.d_;
    std::vector<int> tv(targets.begin(), targets.end());
    return finish("cross_entropy", out, needs_grad({&logits}),
                  [ld, od, m, n, inv, probs = std::move(probs), tv = std::move(tv)] {
                      auto& g = ld->ensure_grad();
                      const double k = od->grad[0] * inv;
                      for (std::size_t r = 0; r < m; ++r) {
                          for (std::size_t c = 0; c < n; ++c) g[r * n + c] += k * probs[r * n + c];
                          g[r * n + static_cast<std::size_t>(tv[r])] -= k;
                      }
                  });
}

}  // namespace ude
