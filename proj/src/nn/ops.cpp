// SPDX-License-Identifier: Apache-2.0
#include "bseg/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bseg::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstMatMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kMaxColumnFloats = std::size_t{1} << 22;

struct ConvGeometry {
    int batch, cin, h, w;
    int cout, kernel;
    int stride, pad, dilation, groups;
    int ho, wo;
    int cin_g, cout_g;
    int col_rows;  // cin_g * k * k

    [[nodiscard]] bool pointwise() const {
        return kernel == 1 && stride == 1 && pad == 0;
    }
    [[nodiscard]] bool depthwise() const {
        return groups == cin && groups == cout && groups > 1;
    }
    [[nodiscard]] int rows_per_chunk() const {
        const std::size_t per_row = static_cast<std::size_t>(col_rows) * wo;
        const auto rows = static_cast<int>(kMaxColumnFloats / std::max<std::size_t>(per_row, 1));
        return std::clamp(rows, 1, ho);
    }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& wt, const Conv2dOptions& opt) {
    if (opt.stride < 1 || opt.dilation < 1 || opt.groups < 1 || opt.padding < 0) {
        throw std::invalid_argument("conv2d: invalid stride/dilation/groups/padding");
    }
    if (wt.h != wt.w) throw std::invalid_argument("conv2d: only square kernels are supported");
    ConvGeometry g{};
    g.batch = x.n;
    g.cin = x.c;
    g.h = x.h;
    g.w = x.w;
    g.cout = wt.n;
    g.kernel = wt.h;
    g.stride = opt.stride;
    g.pad = opt.padding;
    g.dilation = opt.dilation;
    g.groups = opt.groups;
    if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
        throw std::invalid_argument("conv2d: channels not divisible by groups");
    }
    g.cin_g = g.cin / g.groups;
    g.cout_g = g.cout / g.groups;
    if (wt.c != g.cin_g) {
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(wt.c * g.groups) +
                                    " input channels, got " + std::to_string(g.cin));
    }
    const int span = g.dilation * (g.kernel - 1) + 1;
    g.ho = (g.h + 2 * g.pad - span) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - span) / g.stride + 1;
    if (g.ho < 1 || g.wo < 1) {
        throw std::invalid_argument("conv2d: input " + to_string(x) + " too small for kernel");
    }
    g.col_rows = g.cin_g * g.kernel * g.kernel;
    return g;
}

// Gathers receptive-field patches for output rows [oy0, oy1) into a
// col_rows x ((oy1 - oy0) * wo) matrix.
void im2col(const float* x, const ConvGeometry& g, int oy0, int oy1, float* col) {
    const int k = g.kernel;
    const int pc = (oy1 - oy0) * g.wo;
    for (int c = 0; c < g.cin_g; ++c) {
        const float* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * pc;
                for (int oy = oy0; oy < oy1; ++oy) {
                    float* dst = row + static_cast<std::size_t>(oy - oy0) * g.wo;
                    const int iy = oy * g.stride - g.pad + ki * g.dilation;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(dst, dst + g.wo, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * g.w;
                    const int offset = kj * g.dilation - g.pad;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride + offset;
                        dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, const ConvGeometry& g, int oy0, int oy1, float* dx) {
    const int k = g.kernel;
    const int pc = (oy1 - oy0) * g.wo;
    for (int c = 0; c < g.cin_g; ++c) {
        float* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * pc;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki * g.dilation;
                    if (iy < 0 || iy >= g.h) continue;
                    const float* src = row + static_cast<std::size_t>(oy - oy0) * g.wo;
                    float* dst = plane + static_cast<std::size_t>(iy) * g.w;
                    const int offset = kj * g.dilation - g.pad;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride + offset;
                        if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void depthwise_forward(const float* x, const float* w, const ConvGeometry& g, float* y) {
    const int k = g.kernel;
    for (int n = 0; n < g.batch; ++n) {
        for (int c = 0; c < g.cin; ++c) {
            const float* xp = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
            const float* wp = w + static_cast<std::size_t>(c) * k * k;
            float* yp = y + (static_cast<std::size_t>(n) * g.cout + c) * g.ho * g.wo;
            for (int oy = 0; oy < g.ho; ++oy) {
                for (int ox = 0; ox < g.wo; ++ox) {
                    float acc = 0.0f;
                    for (int ki = 0; ki < k; ++ki) {
                        const int iy = oy * g.stride - g.pad + ki * g.dilation;
                        if (iy < 0 || iy >= g.h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int ix = ox * g.stride - g.pad + kj * g.dilation;
                            if (ix < 0 || ix >= g.w) continue;
                            acc += wp[ki * k + kj] * xp[iy * g.w + ix];
                        }
                    }
                    yp[oy * g.wo + ox] = acc;
                }
            }
        }
    }
}

void depthwise_backward(const float* x, const float* w, const float* dy, const ConvGeometry& g,
                        float* dx, float* dw) {
    const int k = g.kernel;
    for (int n = 0; n < g.batch; ++n) {
        for (int c = 0; c < g.cin; ++c) {
            const float* xp = x + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w;
            const float* wp = w + static_cast<std::size_t>(c) * k * k;
            const float* dyp = dy + (static_cast<std::size_t>(n) * g.cout + c) * g.ho * g.wo;
            float* dxp = dx ? dx + (static_cast<std::size_t>(n) * g.cin + c) * g.h * g.w : nullptr;
            float* dwp = dw ? dw + static_cast<std::size_t>(c) * k * k : nullptr;
            for (int oy = 0; oy < g.ho; ++oy) {
                for (int ox = 0; ox < g.wo; ++ox) {
                    const float d = dyp[oy * g.wo + ox];
                    if (d == 0.0f) continue;
                    for (int ki = 0; ki < k; ++ki) {
                        const int iy = oy * g.stride - g.pad + ki * g.dilation;
                        if (iy < 0 || iy >= g.h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int ix = ox * g.stride - g.pad + kj * g.dilation;
                            if (ix < 0 || ix >= g.w) continue;
                            if (dwp) dwp[ki * k + kj] += d * xp[iy * g.w + ix];
                            if (dxp) dxp[iy * g.w + ix] += d * wp[ki * k + kj];
                        }
                    }
                }
            }
        }
    }
}

void gemm_forward(const float* x, const float* w, const ConvGeometry& g, float* y) {
    const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
    const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
    const int chunk = g.rows_per_chunk();
    std::vector<float> col;
    if (!g.pointwise()) col.resize(static_cast<std::size_t>(g.col_rows) * chunk * g.wo);
    for (int n = 0; n < g.batch; ++n) {
        for (int gr = 0; gr < g.groups; ++gr) {
            const float* xg = x + (static_cast<std::size_t>(n) * g.cin + gr * g.cin_g) * in_plane;
            float* yg = y + (static_cast<std::size_t>(n) * g.cout + gr * g.cout_g) * out_plane;
            ConstMatMap wm(w + static_cast<std::size_t>(gr) * g.cout_g * g.col_rows, g.cout_g,
                           g.col_rows, Eigen::OuterStride<>(g.col_rows));
            if (g.pointwise()) {
                ConstMatMap xm(xg, g.col_rows, static_cast<Eigen::Index>(out_plane),
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
                MatMap ym(yg, g.cout_g, static_cast<Eigen::Index>(out_plane),
                          Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
                ym.noalias() = wm * xm;
                continue;
            }
            for (int oy0 = 0; oy0 < g.ho; oy0 += chunk) {
                const int oy1 = std::min(g.ho, oy0 + chunk);
                const int pc = (oy1 - oy0) * g.wo;
                im2col(xg, g, oy0, oy1, col.data());
                ConstMatMap cm(col.data(), g.col_rows, pc, Eigen::OuterStride<>(pc));
                MatMap ym(yg + static_cast<std::size_t>(oy0) * g.wo, g.cout_g, pc,
                          Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
                ym.noalias() = wm * cm;
            }
        }
    }
}

void gemm_backward(const float* x, const float* w, const float* dy, const ConvGeometry& g,
                   float* dx, float* dw) {
    const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
    const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
    const int chunk = g.rows_per_chunk();
    std::vector<float> col;
    std::vector<float> dcol;
    if (!g.pointwise()) {
        col.resize(static_cast<std::size_t>(g.col_rows) * chunk * g.wo);
        if (dx) dcol.resize(col.size());
    }
    for (int n = 0; n < g.batch; ++n) {
        for (int gr = 0; gr < g.groups; ++gr) {
            const float* xg = x + (static_cast<std::size_t>(n) * g.cin + gr * g.cin_g) * in_plane;
            const float* dyg = dy + (static_cast<std::size_t>(n) * g.cout + gr * g.cout_g) * out_plane;
            float* dxg = dx ? dx + (static_cast<std::size_t>(n) * g.cin + gr * g.cin_g) * in_plane
                            : nullptr;
            const std::size_t woff = static_cast<std::size_t>(gr) * g.cout_g * g.col_rows;
            ConstMatMap wm(w + woff, g.cout_g, g.col_rows, Eigen::OuterStride<>(g.col_rows));
            if (g.pointwise()) {
                const auto p = static_cast<Eigen::Index>(out_plane);
                ConstMatMap xm(xg, g.col_rows, p, Eigen::OuterStride<>(p));
                ConstMatMap dym(dyg, g.cout_g, p, Eigen::OuterStride<>(p));
                if (dw) {
                    MatMap dwm(dw + woff, g.cout_g, g.col_rows, Eigen::OuterStride<>(g.col_rows));
                    dwm.noalias() += dym * xm.transpose();
                }
                if (dxg) {
                    MatMap dxm(dxg, g.col_rows, p, Eigen::OuterStride<>(p));
                    dxm.noalias() += wm.transpose() * dym;
                }
                continue;
            }
            for (int oy0 = 0; oy0 < g.ho; oy0 += chunk) {
                const int oy1 = std::min(g.ho, oy0 + chunk);
                const int pc = (oy1 - oy0) * g.wo;
                ConstMatMap dym(dyg + static_cast<std::size_t>(oy0) * g.wo, g.cout_g, pc,
                                Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
                if (dw) {
                    im2col(xg, g, oy0, oy1, col.data());
                    ConstMatMap cm(col.data(), g.col_rows, pc, Eigen::OuterStride<>(pc));
                    MatMap dwm(dw + woff, g.cout_g, g.col_rows, Eigen::OuterStride<>(g.col_rows));
                    dwm.noalias() += dym * cm.transpose();
                }
                if (dxg) {
                    MatMap dcm(dcol.data(), g.col_rows, pc, Eigen::OuterStride<>(pc));
                    dcm.noalias() = wm.transpose() * dym;
                    col2im(dcol.data(), g, oy0, oy1, dxg);
                }
            }
        }
    }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                                    to_string(b));
    }
}

struct LerpTable {
    std::vector<int> i0;
    std::vector<int> i1;
    std::vector<float> w1;
};

LerpTable lerp_table(int in, int out) {
    LerpTable t;
    t.i0.resize(out);
    t.i1.resize(out);
    t.w1.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(std::floor(src));
        lo = std::min(lo, in - 1);
        t.i0[o] = lo;
        t.i1[o] = std::min(lo + 1, in - 1);
        t.w1[o] = static_cast<float>(src - lo);
    }
    return t;
}

void resize_planes(const float* src, int planes, int in_h, int in_w, float* dst, int out_h,
                   int out_w) {
    const LerpTable ty = lerp_table(in_h, out_h);
    const LerpTable tx = lerp_table(in_w, out_w);
    for (int p = 0; p < planes; ++p) {
        const float* s = src + static_cast<std::size_t>(p) * in_h * in_w;
        float* d = dst + static_cast<std::size_t>(p) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const float* r0 = s + static_cast<std::size_t>(ty.i0[oy]) * in_w;
            const float* r1 = s + static_cast<std::size_t>(ty.i1[oy]) * in_w;
            const float wy = ty.w1[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                const float wx = tx.w1[ox];
                const float top = r0[tx.i0[ox]] + wx * (r0[tx.i1[ox]] - r0[tx.i0[ox]]);
                const float bot = r1[tx.i0[ox]] + wx * (r1[tx.i1[ox]] - r1[tx.i0[ox]]);
                d[oy * out_w + ox] = top + wy * (bot - top);
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const Conv2dOptions& opt) {
    const ConvGeometry g = conv_geometry(x->value.shape(), weight->value.shape(), opt);
    if (bias && bias->value.numel() != static_cast<std::size_t>(g.cout)) {
        throw std::invalid_argument("conv2d: bias size does not match output channels");
    }
    Tensor out(Shape{g.batch, g.cout, g.ho, g.wo});
    if (g.depthwise()) {
        depthwise_forward(x->value.data(), weight->value.data(), g, out.data());
    } else {
        gemm_forward(x->value.data(), weight->value.data(), g, out.data());
    }
    if (bias) {
        const float* b = bias->value.data();
        for (int n = 0; n < g.batch; ++n) {
            for (int c = 0; c < g.cout; ++c) {
                float* p = out.plane(n, c);
                const float bc = b[c];
                for (std::size_t i = 0; i < out.shape().plane(); ++i) p[i] += bc;
            }
        }
    }
    Node* xn = x.get();
    Node* wn = weight.get();
    Node* bn = bias.get();
    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(bias);
    return make_result(std::move(out), std::move(inputs), [xn, wn, bn, g](Node& self) {
        const float* dy = self.grad.data();
        float* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        float* dw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        if (g.depthwise()) {
            depthwise_backward(xn->value.data(), wn->value.data(), dy, g, dx, dw);
        } else {
            gemm_backward(xn->value.data(), wn->value.data(), dy, g, dx, dw);
        }
        if (bn && bn->requires_grad) {
            float* db = bn->grad_buffer().data();
            const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
            for (int n = 0; n < g.batch; ++n) {
                for (int c = 0; c < g.cout; ++c) {
                    const float* p = dy + (static_cast<std::size_t>(n) * g.cout + c) * plane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                    db[c] += static_cast<float>(acc);
                }
            }
        }
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
               bool training) {
    const Shape s = x->value.shape();
    if (gamma->value.numel() != static_cast<std::size_t>(s.c) ||
        beta->value.numel() != static_cast<std::size_t>(s.c) ||
        state.running_mean.numel() != static_cast<std::size_t>(s.c)) {
        throw std::invalid_argument("batch_norm: channel count mismatch for input " + to_string(s));
    }
    const std::size_t plane = s.plane();
    const std::size_t count = static_cast<std::size_t>(s.n) * plane;
    auto xhat = std::make_shared<Tensor>(s);
    auto invstd = std::make_shared<std::vector<float>>(s.c);
    Tensor out(s);
    const float* xv = x->value.data();
    const float* gv = gamma->value.data();
    const float* bv = beta->value.data();
    for (int c = 0; c < s.c; ++c) {
        double mean = 0.0;
        double var = 0.0;
        if (training) {
            for (int n = 0; n < s.n; ++n) {
                const float* p = x->value.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) mean += p[i];
            }
            mean /= static_cast<double>(count);
            for (int n = 0; n < s.n; ++n) {
                const float* p = x->value.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(count);
            const double m = state.momentum;
            float& rm = state.running_mean.data()[c];
            float& rv = state.running_var.data()[c];
            const double unbiased =
                count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
            rm = static_cast<float>((1.0 - m) * rm + m * mean);
            rv = static_cast<float>((1.0 - m) * rv + m * unbiased);
        } else {
            mean = state.running_mean.data()[c];
            var = state.running_var.data()[c];
        }
        const auto is = static_cast<float>(1.0 / std::sqrt(var + state.eps));
        (*invstd)[c] = is;
        const auto mf = static_cast<float>(mean);
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const float h = (xv[base + i] - mf) * is;
                xhat->data()[base + i] = h;
                out.data()[base + i] = gv[c] * h + bv[c];
            }
        }
    }
    Node* xn = x.get();
    Node* gn = gamma.get();
    Node* bn = beta.get();
    return make_result(std::move(out), {x, gamma, beta},
                       [xn, gn, bn, xhat, invstd, training, s, plane, count](Node& self) {
        const float* dy = self.grad.data();
        const float* xh = xhat->data();
        const float* gv = gn->value.data();
        float* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        float* dg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
        float* db = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
        for (int c = 0; c < s.c; ++c) {
            double sum_dy = 0.0;
            double sum_dy_xh = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dy[base + i];
                    sum_dy_xh += static_cast<double>(dy[base + i]) * xh[base + i];
                }
            }
            if (dg) dg[c] += static_cast<float>(sum_dy_xh);
            if (db) db[c] += static_cast<float>(sum_dy);
            if (!dx) continue;
            const float scale = gv[c] * (*invstd)[c];
            if (training) {
                const auto m = static_cast<double>(count);
                const auto mean_dy = static_cast<float>(sum_dy / m);
                const auto mean_dy_xh = static_cast<float>(sum_dy_xh / m);
                for (int n = 0; n < s.n; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        dx[base + i] += scale * (dy[base + i] - mean_dy - xh[base + i] * mean_dy_xh);
                    }
                }
            } else {
                for (int n = 0; n < s.n; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) dx[base + i] += scale * dy[base + i];
                }
            }
        }
    });
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::relu6: return "relu6";
        case Activation::silu: return "silu";
        case Activation::hardswish: return "hardswish";
        case Activation::sigmoid: return "sigmoid";
        case Activation::hardsigmoid: return "hardsigmoid";
    }
    return "identity";
}

Activation activation_from_string(std::string_view name) {
    for (auto a : {Activation::identity, Activation::relu, Activation::relu6, Activation::silu,
                   Activation::hardswish, Activation::sigmoid, Activation::hardsigmoid}) {
        if (to_string(a) == name) return a;
    }
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

inline float sigmoidf(float v) { return 1.0f / (1.0f + std::exp(-v)); }

float act_forward(Activation a, float v) {
    switch (a) {
        case Activation::identity: return v;
        case Activation::relu: return v > 0.0f ? v : 0.0f;
        case Activation::relu6: return std::clamp(v, 0.0f, 6.0f);
        case Activation::silu: return v * sigmoidf(v);
        case Activation::hardswish: return v * std::clamp(v + 3.0f, 0.0f, 6.0f) / 6.0f;
        case Activation::sigmoid: return sigmoidf(v);
        case Activation::hardsigmoid: return std::clamp(v + 3.0f, 0.0f, 6.0f) / 6.0f;
    }
    return v;
}

// Derivative expressed through the input v and output y.
float act_derivative(Activation a, float v, float y) {
    switch (a) {
        case Activation::identity: return 1.0f;
        case Activation::relu: return v > 0.0f ? 1.0f : 0.0f;
        case Activation::relu6: return (v > 0.0f && v < 6.0f) ? 1.0f : 0.0f;
        case Activation::silu: {
            const float s = sigmoidf(v);
            return s * (1.0f + v * (1.0f - s));
        }
        case Activation::hardswish:
            if (v <= -3.0f) return 0.0f;
            if (v >= 3.0f) return 1.0f;
            return (2.0f * v + 3.0f) / 6.0f;
        case Activation::sigmoid: return y * (1.0f - y);
        case Activation::hardsigmoid: return (v > -3.0f && v < 3.0f) ? 1.0f / 6.0f : 0.0f;
    }
    return 1.0f;
}

}  // namespace

Var activate(const Var& x, Activation act) {
    if (act == Activation::identity) return x;
    Tensor out(x->value.shape());
    const float* xv = x->value.data();
    float* o = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = act_forward(act, xv[i]);
    Node* xn = x.get();
    return make_result(std::move(out), {x}, [xn, act](Node& self) {
        float* dx = xn->grad_buffer().data();
        const float* dy = self.grad.data();
        const float* xv = xn->value.data();
        const float* yv = self.value.data();
        for (std::size_t i = 0; i < self.value.numel(); ++i) {
            dx[i] += dy[i] * act_derivative(act, xv[i], yv[i]);
        }
    });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
    if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding >= kernel + 1) {
        throw std::invalid_argument("max_pool2d: invalid kernel/stride/padding");
    }
    const Shape s = x->value.shape();
    const int ho = (s.h + 2 * padding - kernel) / stride + 1;
    const int wo = (s.w + 2 * padding - kernel) / stride + 1;
    if (ho < 1 || wo < 1) throw std::invalid_argument("max_pool2d: input too small");
    Tensor out(Shape{s.n, s.c, ho, wo});
    auto argmax = std::make_shared<std::vector<int>>(out.numel());
    std::size_t idx = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* p = x->value.plane(n, c);
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++idx) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_i = -1;
                    for (int ki = 0; ki < kernel; ++ki) {
                        const int iy = oy * stride - padding + ki;
                        if (iy < 0 || iy >= s.h) continue;
                        for (int kj = 0; kj < kernel; ++kj) {
                            const int ix = ox * stride - padding + kj;
                            if (ix < 0 || ix >= s.w) continue;
                            const float v = p[iy * s.w + ix];
                            if (best_i < 0 || v > best) {
                                best = v;
                                best_i = iy * s.w + ix;
                            }
                        }
                    }
                    out.data()[idx] = best;
                    (*argmax)[idx] = best_i;
                }
            }
        }
    }
    Node* xn = x.get();
    return make_result(std::move(out), {x}, [xn, argmax, s, ho, wo](Node& self) {
        float* dx = xn->grad_buffer().data();
        const float* dy = self.grad.data();
        const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
        for (std::size_t i = 0; i < self.value.numel(); ++i) {
            const std::size_t plane_index = i / out_plane;
            dx[plane_index * s.plane() + static_cast<std::size_t>((*argmax)[i])] += dy[i];
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value.shape(), b->value.shape(), "add");
    Tensor out(a->value.shape());
    const float* av = a->value.data();
    const float* bv = b->value.data();
    float* o = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = av[i] + bv[i];
    Node* an = a.get();
    Node* bn = b.get();
    return make_result(std::move(out), {a, b}, [an, bn](Node& self) {
        const float* dy = self.grad.data();
        for (Node* in : {an, bn}) {
            if (!in->requires_grad) continue;
            float* d = in->grad_buffer().data();
            for (std::size_t i = 0; i < self.value.numel(); ++i) d[i] += dy[i];
        }
    });
}

Var scale_channels(const Var& x, const Var& s) {
    const Shape xs = x->value.shape();
    const Shape ss = s->value.shape();
    if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1) {
        throw std::invalid_argument("scale_channels: scale must be " + std::to_string(xs.n) + "x" +
                                    std::to_string(xs.c) + "x1x1, got " + to_string(ss));
    }
    Tensor out(xs);
    const std::size_t plane = xs.plane();
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
            const float k = s->value.data()[n * xs.c + c];
            const float* p = x->value.plane(n, c);
            float* o = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * k;
        }
    }
    Node* xn = x.get();
    Node* sn = s.get();
    return make_result(std::move(out), {x, s}, [xn, sn, xs, plane](Node& self) {
        for (int n = 0; n < xs.n; ++n) {
            for (int c = 0; c < xs.c; ++c) {
                const float* dy = self.grad.plane(n, c);
                const float k = sn->value.data()[n * xs.c + c];
                if (xn->requires_grad) {
                    float* dx = xn->grad_buffer().plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) dx[i] += dy[i] * k;
                }
                if (sn->requires_grad) {
                    const float* p = xn->value.plane(n, c);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(dy[i]) * p[i];
                    sn->grad_buffer().data()[n * xs.c + c] += static_cast<float>(acc);
                }
            }
        }
    });
}

Var concat_channels(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    Shape s = xs.front()->value.shape();
    int channels = 0;
    for (const auto& v : xs) {
        const Shape& t = v->value.shape();
        if (t.n != s.n || t.h != s.h || t.w != s.w) {
            throw std::invalid_argument("concat_channels: spatial/batch mismatch " + to_string(t) +
                                        " vs " + to_string(s));
        }
        channels += t.c;
    }
    s.c = channels;
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        int offset = 0;
        for (const auto& v : xs) {
            const int c = v->value.shape().c;
            std::copy_n(v->value.plane(n, 0), static_cast<std::size_t>(c) * plane,
                        out.plane(n, offset));
            offset += c;
        }
    }
    std::vector<Var> inputs(xs.begin(), xs.end());
    std::vector<Node*> raw;
    raw.reserve(inputs.size());
    for (const auto& v : inputs) raw.push_back(v.get());
    return make_result(std::move(out), std::move(inputs), [raw, s, plane](Node& self) {
        for (int n = 0; n < s.n; ++n) {
            int offset = 0;
            for (Node* in : raw) {
                const int c = in->value.shape().c;
                if (in->requires_grad) {
                    const float* src = self.grad.plane(n, offset);
                    float* dst = in->grad_buffer().plane(n, 0);
                    const std::size_t len = static_cast<std::size_t>(c) * plane;
                    for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                }
                offset += c;
            }
        }
    });
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: empty target size");
    const Shape s = x.shape();
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    resize_planes(x.data(), s.n * s.c, s.h, s.w, out.data(), out_h, out_w);
    return out;
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const Shape s = x->value.shape();
    if (s.h == out_h && s.w == out_w) return x;
    Tensor out = resize_bilinear(x->value, out_h, out_w);
    Node* xn = x.get();
    return make_result(std::move(out), {x}, [xn, s, out_h, out_w](Node& self) {
        const LerpTable ty = lerp_table(s.h, out_h);
        const LerpTable tx = lerp_table(s.w, out_w);
        float* dx = xn->grad_buffer().data();
        const float* dy = self.grad.data();
        for (int p = 0; p < s.n * s.c; ++p) {
            float* d = dx + static_cast<std::size_t>(p) * s.plane();
            const float* g = dy + static_cast<std::size_t>(p) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const float wy = ty.w1[oy];
                float* r0 = d + static_cast<std::size_t>(ty.i0[oy]) * s.w;
                float* r1 = d + static_cast<std::size_t>(ty.i1[oy]) * s.w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const float v = g[oy * out_w + ox];
                    const float wx = tx.w1[ox];
                    r0[tx.i0[ox]] += v * (1.0f - wy) * (1.0f - wx);
                    r0[tx.i1[ox]] += v * (1.0f - wy) * wx;
                    r1[tx.i0[ox]] += v * wy * (1.0f - wx);
                    r1[tx.i1[ox]] += v * wy * wx;
                }
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    const Shape s = x->value.shape();
    Tensor out(Shape{s.n, s.c, 1, 1});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* p = x->value.plane(n, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out.data()[n * s.c + c] = static_cast<float>(acc / static_cast<double>(plane));
        }
    }
    Node* xn = x.get();
    return make_result(std::move(out), {x}, [xn, s, plane](Node& self) {
        const float inv = 1.0f / static_cast<float>(plane);
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const float g = self.grad.data()[n * s.c + c] * inv;
                float* d = xn->grad_buffer().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) d[i] += g;
            }
        }
    });
}

}  // namespace bseg::nn
