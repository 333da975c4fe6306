#include "ccvit/numerics/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace ccvit::numerics {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;
template <typename T>
using StridedM = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedM = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MapM<T> as_matrix(Tensor<T>& t) {
    return MapM<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
CMapM<T> as_matrix(const Tensor<T>& t) {
    return CMapM<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
    require(t.rank() == 2, std::string(op) + " expects a rank-2 operand, got " + shape_string(t.shape()));
}

} // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    require(av.dim(1) == bv.dim(0),
            "matmul inner dimensions disagree: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    Tensor<T> out({av.dim(0), bv.dim(1)});
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
    auto ia = a.id(), ib = b.id();
    return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        auto g = as_matrix(std::as_const(t).grad(self));
        if (t.needs_grad(ia)) as_matrix(t.grad(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
        if (t.needs_grad(ib)) as_matrix(t.grad(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
    });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
    const auto& xv = x.value();
    const auto& wv = weight.value();
    const auto& bv = bias.value();
    require_rank2(wv, "linear");
    require(xv.cols() == wv.dim(0), "linear input width " + std::to_string(xv.cols()) + " does not match weight " +
                                        shape_string(wv.shape()));
    require(bv.size() == wv.dim(1), "linear bias length does not match weight columns");
    Shape shape = xv.shape();
    shape.back() = wv.dim(1);
    Tensor<T> out(shape);
    auto o = as_matrix(out);
    o.noalias() = as_matrix(xv) * as_matrix(wv);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(bv.ptr(), static_cast<Eigen::Index>(bv.size()));
    o.rowwise() += bvec;
    auto ix = x.id(), iw = weight.id(), ib = bias.id();
    return x.tape().record("linear", std::move(out), {x, weight, bias}, [ix, iw, ib](Tape<T>& t, std::size_t self) {
        auto g = as_matrix(std::as_const(t).grad(self));
        if (t.needs_grad(ix)) as_matrix(t.grad(ix)).noalias() += g * as_matrix(t.value(iw)).transpose();
        if (t.needs_grad(iw)) as_matrix(t.grad(iw)).noalias() += as_matrix(t.value(ix)).transpose() * g;
        if (t.needs_grad(ib)) {
            auto& gb = t.grad(ib);
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(gb.ptr(), static_cast<Eigen::Index>(gb.size()));
            bvec += g.colwise().sum();
        }
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.shape() == bv.shape(),
            "add shape mismatch: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto ia = a.id(), ib = b.id();
    return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        for (auto id : {ia, ib}) {
            if (!t.needs_grad(id)) continue;
            auto& gi = t.grad(id);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.shape() == bv.shape(),
            "mul shape mismatch: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    auto ia = a.id(), ib = b.id();
    return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        if (t.needs_grad(ia)) {
            auto& ga = t.grad(ia);
            const auto& bv = t.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(ib)) {
            auto& gb = t.grad(ib);
            const auto& av = t.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v *= factor;
    auto ia = a.id();
    return a.tape().record("scale", std::move(out), {a}, [ia, factor](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

template <typename T>
Var<T> sum(Var<T> a) {
    T total{0};
    for (T v : a.value().data()) total += v;
    auto ia = a.id();
    return a.tape().record("sum", Tensor<T>({1}, std::vector<T>{total}), {a}, [ia](Tape<T>& t, std::size_t self) {
        T g = std::as_const(t).grad(self)[0];
        for (auto& v : t.grad(ia).data()) v += g;
    });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    const auto& av = a.value();
    require_rank2(av, "transpose");
    Tensor<T> out({av.dim(1), av.dim(0)});
    as_matrix(out) = as_matrix(av).transpose();
    auto ia = a.id();
    return a.tape().record("transpose", std::move(out), {a}, [ia](Tape<T>& t, std::size_t self) {
        as_matrix(t.grad(ia)) += as_matrix(std::as_const(t).grad(self)).transpose();
    });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    auto ia = a.id();
    return a.tape().record("reshape", std::move(out), {a}, [ia](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        auto& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

template <typename T>
Var<T> softmax(Var<T> a, std::ptrdiff_t axis) {
    const auto& av = a.value();
    const auto rank = static_cast<std::ptrdiff_t>(av.rank());
    if (axis < 0) axis += rank;
    require(axis >= 0 && axis < rank, "softmax axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::ptrdiff_t i = 0; i < axis; ++i) outer *= av.dim(static_cast<std::size_t>(i));
    for (std::ptrdiff_t i = axis + 1; i < rank; ++i) inner *= av.dim(static_cast<std::size_t>(i));
    const std::size_t len = av.dim(static_cast<std::size_t>(axis));

    Tensor<T> out(av.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T m = av[base];
            for (std::size_t k = 1; k < len; ++k) m = std::max(m, av[base + k * inner]);
            T z{0};
            for (std::size_t k = 0; k < len; ++k) {
                T e = std::exp(av[base + k * inner] - m);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
        }
    }
    auto ia = a.id();
    return a.tape().record("softmax", std::move(out), {a}, [ia, outer, inner, len](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        const auto& y = t.value(self);
        auto& ga = t.grad(ia);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot{0};
                for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t i = base + k * inner;
                    ga[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    if (!(eps > T{0})) throw InvalidArgument("layer_norm eps must be positive");
    const auto& xv = x.value();
    const std::size_t cols = xv.cols(), rows = xv.rows();
    require(gamma.value().size() == cols && beta.value().size() == cols,
            "layer_norm affine parameters must match the normalized width");
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    Tensor<T> out(xv.shape());
    std::vector<T> mean(rows), rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.ptr() + r * cols;
        T m{0};
        for (std::size_t c = 0; c < cols; ++c) m += row[c];
        m /= static_cast<T>(cols);
        T var{0};
        for (std::size_t c = 0; c < cols; ++c) var += (row[c] - m) * (row[c] - m);
        var /= static_cast<T>(cols);
        const T rs = T{1} / std::sqrt(var + eps);
        mean[r] = m;
        rstd[r] = rs;
        T* o = out.ptr() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) o[c] = (row[c] - m) * rs * gv[c] + bv[c];
    }
    auto ix = x.id(), ig = gamma.id(), ib = beta.id();
    return x.tape().record(
        "layer_norm", std::move(out), {x, gamma, beta},
        [ix, ig, ib, rows, cols, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
            const auto& g = std::as_const(t).grad(self);
            const auto& xv = t.value(ix);
            const auto& gv = t.value(ig);
            Tensor<T>* gx = t.needs_grad(ix) ? &t.grad(ix) : nullptr;
            Tensor<T>* gg = t.needs_grad(ig) ? &t.grad(ig) : nullptr;
            Tensor<T>* gb = t.needs_grad(ib) ? &t.grad(ib) : nullptr;
            std::vector<T> dxhat(cols), xhat(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = xv.ptr() + r * cols;
                const T* grow = g.ptr() + r * cols;
                T sum_d{0}, sum_dx{0};
                for (std::size_t c = 0; c < cols; ++c) {
                    xhat[c] = (row[c] - mean[r]) * rstd[r];
                    dxhat[c] = grow[c] * gv[c];
                    sum_d += dxhat[c];
                    sum_dx += dxhat[c] * xhat[c];
                    if (gg) (*gg)[c] += grow[c] * xhat[c];
                    if (gb) (*gb)[c] += grow[c];
                }
                if (gx) {
                    const T inv_n = T{1} / static_cast<T>(cols);
                    T* out = gx->ptr() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c)
                        out[c] += rstd[r] * (dxhat[c] - inv_n * sum_d - xhat[c] * inv_n * sum_dx);
                }
            }
        });
}

template <typename T>
Var<T> gelu(Var<T> x) {
    Tensor<T> out = x.value();
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    for (auto& v : out.data()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    auto ix = x.id();
    return x.tape().record("gelu", std::move(out), {x}, [ix](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        const auto& xv = t.value(ix);
        auto& gx = t.grad(ix);
        const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
        const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xv[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            gx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets) {
    const auto& lv = logits.value();
    const std::size_t rows = lv.rows(), k = lv.cols();
    require(targets.size() == rows, "cross_entropy needs one target per row");
    if (rows == 0) throw InvalidArgument("cross_entropy over zero rows");
    Tensor<T> probs({rows, k});
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] >= k)
            throw InvalidArgument("cross_entropy target " + std::to_string(targets[r]) + " outside [0, " +
                                  std::to_string(k) + ")");
        const T* row = lv.ptr() + r * k;
        T m = row[0];
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, row[c]);
        T z{0};
        T* p = probs.ptr() + r * k;
        for (std::size_t c = 0; c < k; ++c) {
            p[c] = std::exp(row[c] - m);
            z += p[c];
        }
        for (std::size_t c = 0; c < k; ++c) p[c] /= z;
        total += static_cast<double>(std::log(z) + m - row[targets[r]]);
    }
    T loss = static_cast<T>(total / static_cast<double>(rows));
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    auto il = logits.id();
    return logits.tape().record(
        "cross_entropy", Tensor<T>({1}, std::vector<T>{loss}), {logits},
        [il, rows, k, probs = std::move(probs), tgt = std::move(tgt)](Tape<T>& t, std::size_t self) {
            const T g = std::as_const(t).grad(self)[0] / static_cast<T>(rows);
            auto& gl = t.grad(il);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < k; ++c) {
                    T p = probs[r * k + c];
                    if (c == tgt[r]) p -= T{1};
                    gl[r * k + c] += g * p;
                }
            }
        });
}

template <typename T>
Var<T> mse(Var<T> pred, Var<T> target) {
    const auto& pv = pred.value();
    const auto& tv = target.value();
    require(pv.shape() == tv.shape(),
            "mse shape mismatch: " + shape_string(pv.shape()) + " vs " + shape_string(tv.shape()));
    if (pv.size() == 0) throw InvalidArgument("mse over zero elements");
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
        total += d * d;
    }
    const std::size_t n = pv.size();
    T loss = static_cast<T>(total / static_cast<double>(n));
    auto ip = pred.id(), it = target.id();
    return pred.tape().record("mse", Tensor<T>({1}, std::vector<T>{loss}), {pred, target},
                              [ip, it, n](Tape<T>& t, std::size_t self) {
                                  const T g = std::as_const(t).grad(self)[0] * T(2) / static_cast<T>(n);
                                  const auto& pv = t.value(ip);
                                  const auto& tv = t.value(it);
                                  if (t.needs_grad(ip)) {
                                      auto& gp = t.grad(ip);
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g * (pv[i] - tv[i]);
                                  }
                                  if (t.needs_grad(it)) {
                                      auto& gt = t.grad(it);
                                      for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (pv[i] - tv[i]);
                                  }
                              });
}

template <typename T>
Var<T> gather_rows(const std::vector<Var<T>>& sources, std::span<const RowRef> rows) {
    require(!sources.empty(), "gather_rows needs at least one source");
    const std::size_t cols = sources.front().value().cols();
    for (const auto& s : sources) require(s.value().cols() == cols, "gather_rows sources differ in width");
    Tensor<T> out({rows.size(), cols});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& ref = rows[r];
        require(ref.source < sources.size(), "gather_rows source index out of range");
        const auto& src = sources[ref.source].value();
        require(ref.row < src.rows(), "gather_rows row index out of range");
        std::copy_n(src.ptr() + std::size_t{ref.row} * cols, cols, out.ptr() + r * cols);
    }
    std::vector<std::size_t> ids;
    ids.reserve(sources.size());
    for (const auto& s : sources) ids.push_back(s.id());
    std::vector<RowRef> refs(rows.begin(), rows.end());
    return sources.front().tape().record(
        "gather_rows", std::move(out), sources,
        [ids = std::move(ids), refs = std::move(refs), cols](Tape<T>& t, std::size_t self) {
            const auto& g = std::as_const(t).grad(self);
            std::vector<Tensor<T>*> grads(ids.size(), nullptr);
            for (std::size_t s = 0; s < ids.size(); ++s)
                if (t.needs_grad(ids[s])) grads[s] = &t.grad(ids[s]);
            for (std::size_t r = 0; r < refs.size(); ++r) {
                Tensor<T>* gs = grads[refs[r].source];
                if (!gs) continue;
                T* dst = gs->ptr() + std::size_t{refs[r].row} * cols;
                const T* src = g.ptr() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
            }
        });
}

template <typename T>
Var<T> gather(Var<T> src, std::span<const std::size_t> index, Shape shape) {
    require(shape_size(shape) == index.size(), "gather output shape does not match index length");
    const auto& sv = src.value();
    Tensor<T> out(std::move(shape));
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < sv.size(), "gather index out of range");
        out[i] = sv[index[i]];
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    auto is = src.id();
    return src.tape().record("gather", std::move(out), {src}, [is, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
        const auto& g = std::as_const(t).grad(self);
        auto& gs = t.grad(is);
        for (std::size_t i = 0; i < idx.size(); ++i) gs[idx[i]] += g[i];
    });
}

template <typename T>
Var<T> attention(Var<T> qkv, Var<T> bias, std::size_t sequences, std::size_t heads, Tensor<T>* probs_out) {
    const auto& qv = qkv.value();
    require_rank2(qv, "attention");
    require(sequences > 0 && qv.rows() % sequences == 0, "attention rows must split evenly into sequences");
    require(qv.cols() % 3 == 0, "attention expects q|k|v packed columns");
    const std::size_t len = qv.rows() / sequences;
    const std::size_t d = qv.cols() / 3;
    require(heads > 0 && d % heads == 0, "attention width must divide evenly into heads");
    const std::size_t dh = d / heads;
    require(bias.value().shape() == Shape({heads, len, len}),
            "attention bias must have shape " + shape_string({heads, len, len}));
    const T scl = T(1) / std::sqrt(static_cast<T>(dh));
    const auto stride3 = static_cast<Eigen::Index>(3 * d);
    const auto L = static_cast<Eigen::Index>(len);
    const auto DH = static_cast<Eigen::Index>(dh);

    Tensor<T> out({sequences * len, d});
    Tensor<T> probs({sequences, heads, len, len});
    const auto& bv = bias.value();
    MatRM<T> scores(L, L);
    for (std::size_t b = 0; b < sequences; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            const T* base = qv.ptr() + b * len * 3 * d + h * dh;
            CStridedM<T> q(base, L, DH, Eigen::OuterStride<>(stride3));
            CStridedM<T> k(base + d, L, DH, Eigen::OuterStride<>(stride3));
            CStridedM<T> v(base + 2 * d, L, DH, Eigen::OuterStride<>(stride3));
            CMapM<T> bh(bv.ptr() + h * len * len, L, L);
            scores.noalias() = q * k.transpose();
            scores = scores * scl + bh;
            MapM<T> a(probs.ptr() + (b * heads + h) * len * len, L, L);
            for (Eigen::Index r = 0; r < L; ++r) {
                const T m = scores.row(r).maxCoeff();
                a.row(r) = (scores.row(r).array() - m).exp();
                a.row(r) /= a.row(r).sum();
            }
            StridedM<T> o(out.ptr() + b * len * d + h * dh, L, DH, Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
            o.noalias() = a * v;
        }
    }
    if (probs_out) *probs_out = probs;
    auto iq = qkv.id(), ib = bias.id();
    return qkv.tape().record(
        "attention", std::move(out), {qkv, bias},
        [iq, ib, sequences, heads, len, d, dh, scl, probs = std::move(probs)](Tape<T>& t, std::size_t self) {
            const auto& g = std::as_const(t).grad(self);
            const auto& qv = t.value(iq);
            Tensor<T>* gq = t.needs_grad(iq) ? &t.grad(iq) : nullptr;
            Tensor<T>* gb = t.needs_grad(ib) ? &t.grad(ib) : nullptr;
            const auto stride3 = static_cast<Eigen::Index>(3 * d);
            const auto L = static_cast<Eigen::Index>(len);
            const auto DH = static_cast<Eigen::Index>(dh);
            MatRM<T> da(L, L), ds(L, L);
            for (std::size_t b = 0; b < sequences; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const T* base = qv.ptr() + b * len * 3 * d + h * dh;
                    CStridedM<T> q(base, L, DH, Eigen::OuterStride<>(stride3));
                    CStridedM<T> k(base + d, L, DH, Eigen::OuterStride<>(stride3));
                    CStridedM<T> v(base + 2 * d, L, DH, Eigen::OuterStride<>(stride3));
                    CMapM<T> a(probs.ptr() + (b * heads + h) * len * len, L, L);
                    CStridedM<T> go(g.ptr() + b * len * d + h * dh, L, DH,
                                    Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
                    da.noalias() = go * v.transpose();
                    for (Eigen::Index r = 0; r < L; ++r) {
                        const T dot = (da.row(r).array() * a.row(r).array()).sum();
                        ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
                    }
                    if (gb) {
                        MapM<T> gbh(gb->ptr() + h * len * len, L, L);
                        gbh += ds;
                    }
                    if (gq) {
                        T* gbase = gq->ptr() + b * len * 3 * d + h * dh;
                        StridedM<T> dq(gbase, L, DH, Eigen::OuterStride<>(stride3));
                        StridedM<T> dk(gbase + d, L, DH, Eigen::OuterStride<>(stride3));
                        StridedM<T> dv(gbase + 2 * d, L, DH, Eigen::OuterStride<>(stride3));
                        dv.noalias() += a.transpose() * go;
                        dq.noalias() += (ds * k) * scl;
                        dk.noalias() += (ds.transpose() * q) * scl;
                    }
                }
            }
        });
}

#define CCVIT_INSTANTIATE_OPS(T)                                                                           \
    template Var<T> matmul(Var<T>, Var<T>);                                                                \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                        \
    template Var<T> add(Var<T>, Var<T>);                                                                   \
    template Var<T> mul(Var<T>, Var<T>);                                                                   \
    template Var<T> scale(Var<T>, T);                                                                      \
    template Var<T> sum(Var<T>);                                                                           \
    template Var<T> transpose(Var<T>);                                                                     \
    template Var<T> reshape(Var<T>, Shape);                                                                \
    template Var<T> softmax(Var<T>, std::ptrdiff_t);                                                       \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                                 \
    template Var<T> gelu(Var<T>);                                                                          \
    template Var<T> cross_entropy(Var<T>, std::span<const std::size_t>);                                   \
    template Var<T> mse(Var<T>, Var<T>);                                                                   \
    template Var<T> gather_rows(const std::vector<Var<T>>&, std::span<const RowRef>);                      \
    template Var<T> gather(Var<T>, std::span<const std::size_t>, Shape);                                   \
    template Var<T> attention(Var<T>, Var<T>, std::size_t, std::size_t, Tensor<T>*);

CCVIT_INSTANTIATE_OPS(float)
CCVIT_INSTANTIATE_OPS(double)

#undef CCVIT_INSTANTIATE_OPS

} // namespace ccvit::numerics
