#include "mmcof/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmcof::ag {

namespace {

thread_local uint64_t g_kink_sig = 0xcbf29ce484222325ull;

inline void sig_mix(uint64_t v) { g_kink_sig = (g_kink_sig ^ v) * 1099511628211ull; }

void check_4d(const Tensor& t, const char* where) {
    if (t.rank() != 4) throw std::invalid_argument(std::string(where) + ": expected 4-d tensor, got " + t.shape_str());
}

struct ConvDims {
    int B, Cin, H, W, Cout, k, Ho, Wo, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                   bool depthwise) {
    check_4d(x, "conv2d");
    check_4d(w, "conv2d kernel");
    ConvDims d;
    d.B = x.dim(0);
    d.Cin = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.Cout = w.dim(0);
    d.k = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    if (d.k % 2 == 0) throw std::invalid_argument("conv2d: kernel spatial size must be odd");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (depthwise) {
        if (w.dim(1) != 1) throw std::invalid_argument("depthwise_conv2d: kernel channel multiplier must be 1");
        if (d.Cout != d.Cin)
            throw std::invalid_argument("depthwise_conv2d: one spatial kernel per input channel required");
    } else if (w.dim(1) != d.Cin) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(d.Cin) +
                                    " do not match kernel " + std::to_string(w.dim(1)));
    }
    if (b.rank() != 1 || b.dim(0) != d.Cout)
        throw std::invalid_argument("conv2d: bias must have one entry per output channel");
    d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
    if (d.Ho < 1 || d.Wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
    return d;
}

// Valid output range for a kernel tap: ix = ox*stride - pad + kx must land in [0,W).
inline void tap_range(int extent, int stride, int pad, int kx, int out_extent, int& lo, int& hi) {
    // smallest ox with ox*stride >= pad - kx
    int num = pad - kx;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    // largest ox with ox*stride <= extent - 1 + pad - kx
    int top = extent - 1 + pad - kx;
    hi = top < 0 ? -1 : std::min(out_extent - 1, top / stride);
}

void conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out,
                  const ConvDims& d, bool depthwise) {
    // taps accumulate into a double plane to keep forward rounding noise low
    std::vector<double> plane(static_cast<size_t>(d.Ho) * d.Wo);
    for (int n = 0; n < d.B; ++n)
        for (int oc = 0; oc < d.Cout; ++oc) {
            double* oplane = plane.data();
            std::fill(plane.begin(), plane.end(), static_cast<double>(b.data[oc]));
            int ic_begin = depthwise ? oc : 0;
            int ic_end = depthwise ? oc + 1 : d.Cin;
            for (int ic = ic_begin; ic < ic_end; ++ic) {
                const float* xplane = &x.at4(n, ic, 0, 0);
                const float* wk = &w.data[((static_cast<size_t>(oc) * w.dim(1)) +
                                           (depthwise ? 0 : ic)) *
                                          d.k * d.k];
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx) {
                        float wv = wk[ky * d.k + kx];
                        if (wv == 0.0f) continue;
                        int xlo, xhi, ylo, yhi;
                        tap_range(d.W, d.stride, d.pad, kx, d.Wo, xlo, xhi);
                        tap_range(d.H, d.stride, d.pad, ky, d.Ho, ylo, yhi);
                        for (int oy = ylo; oy <= yhi; ++oy) {
                            int iy = oy * d.stride - d.pad + ky;
                            const float* xrow = xplane + static_cast<size_t>(iy) * d.W;
                            double* orow = oplane + static_cast<size_t>(oy) * d.Wo;
                            int ix = xlo * d.stride - d.pad + kx;
                            for (int ox = xlo; ox <= xhi; ++ox, ix += d.stride)
                                orow[ox] += static_cast<double>(wv) * xrow[ix];
                        }
                    }
            }
            float* dst = &out.at4(n, oc, 0, 0);
            for (int i = 0; i < d.Ho * d.Wo; ++i) dst[i] = static_cast<float>(oplane[i]);
        }
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& gout, Tensor* gx, Tensor* gw,
                   Tensor* gb, const ConvDims& d, bool depthwise) {
    for (int n = 0; n < d.B; ++n)
        for (int oc = 0; oc < d.Cout; ++oc) {
            const float* gplane = &gout.at4(n, oc, 0, 0);
            if (gb) {
                float acc = 0.0f;
                for (int i = 0; i < d.Ho * d.Wo; ++i) acc += gplane[i];
                gb->data[oc] += acc;
            }
            int ic_begin = depthwise ? oc : 0;
            int ic_end = depthwise ? oc + 1 : d.Cin;
            for (int ic = ic_begin; ic < ic_end; ++ic) {
                const float* xplane = &x.at4(n, ic, 0, 0);
                size_t wbase = ((static_cast<size_t>(oc) * w.dim(1)) + (depthwise ? 0 : ic)) *
                               d.k * d.k;
                float* gxplane = gx ? &gx->at4(n, ic, 0, 0) : nullptr;
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx) {
                        int xlo, xhi, ylo, yhi;
                        tap_range(d.W, d.stride, d.pad, kx, d.Wo, xlo, xhi);
                        tap_range(d.H, d.stride, d.pad, ky, d.Ho, ylo, yhi);
                        float wv = w.data[wbase + ky * d.k + kx];
                        float wacc = 0.0f;
                        for (int oy = ylo; oy <= yhi; ++oy) {
                            int iy = oy * d.stride - d.pad + ky;
                            const float* xrow = xplane + static_cast<size_t>(iy) * d.W;
                            const float* grow = gplane + static_cast<size_t>(oy) * d.Wo;
                            float* gxrow = gxplane ? gxplane + static_cast<size_t>(iy) * d.W : nullptr;
                            int ix = xlo * d.stride - d.pad + kx;
                            for (int ox = xlo; ox <= xhi; ++ox, ix += d.stride) {
                                if (gw) wacc += grow[ox] * xrow[ix];
                                if (gxrow) gxrow[ix] += wv * grow[ox];
                            }
                        }
                        if (gw) gw->data[wbase + ky * d.k + kx] += wacc;
                    }
            }
        }
}

Var conv_common(const Var& x, const Var& w, const Var& b, int stride, int pad, bool depthwise) {
    ConvDims d = conv_dims(x->value, w->value, b->value, stride, pad, depthwise);
    Tensor out({d.B, d.Cout, d.Ho, d.Wo});
    conv_forward(x->value, w->value, b->value, out, d, depthwise);
    Var xv = x, wv = w, bv = b;
    return make_op(std::move(out), {x, w, b}, [xv, wv, bv, d, depthwise](Node& self) {
        Tensor* gx = xv->requires_grad ? &xv->ensure_grad() : nullptr;
        Tensor* gw = wv->requires_grad ? &wv->ensure_grad() : nullptr;
        Tensor* gb = bv->requires_grad ? &bv->ensure_grad() : nullptr;
        conv_backward(xv->value, wv->value, self.grad, gx, gw, gb, d, depthwise);
    });
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
    return conv_common(x, w, b, stride, padding, false);
}

Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int padding) {
    return conv_common(x, w, b, 1, padding, true);
}

Var maxpool2d(const Var& x, int window, int stride) {
    check_4d(x->value, "maxpool2d");
    const Tensor& v = x->value;
    int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (H % stride != 0 || W % stride != 0 || window != stride)
        throw std::invalid_argument("maxpool2d: spatial extents must be divisible by the window");
    int Ho = H / stride, Wo = W / stride;
    Tensor out({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int>>(out.data.size());
    size_t o = 0;
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    int besti = 0;
                    for (int dy = 0; dy < window; ++dy)
                        for (int dx = 0; dx < window; ++dx) {
                            int iy = oy * stride + dy, ix = ox * stride + dx;
                            float val = v.at4(n, c, iy, ix);
                            if (val > best) {
                                best = val;
                                besti = ((n * C + c) * H + iy) * W + ix;
                            }
                        }
                    out.data[o] = best;
                    (*argmax)[o] = besti;
                    sig_mix(static_cast<uint64_t>(besti));
                }
    Var xv = x;
    return make_op(std::move(out), {x}, [xv, argmax](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            gx.data[(*argmax)[i]] += self.grad.data[i];
    });
}

Var dense(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    const Tensor& bv = b->value;
    if (xv.rank() != 2 || wv.rank() != 2)
        throw std::invalid_argument("dense: input and weight must be rank 2");
    int B = xv.dim(0), K = xv.dim(1), M = wv.dim(1);
    if (wv.dim(0) != K)
        throw std::invalid_argument("dense: input length " + std::to_string(K) +
                                    " does not match weight rows " + std::to_string(wv.dim(0)));
    if (bv.rank() != 1 || bv.dim(0) != M) throw std::invalid_argument("dense: bias length mismatch");
    Tensor out({B, M});
    std::vector<double> acc(static_cast<size_t>(M));
    for (int n = 0; n < B; ++n) {
        for (int m = 0; m < M; ++m) acc[m] = bv.data[m];
        for (int k = 0; k < K; ++k) {
            float xnk = xv.at2(n, k);
            if (xnk == 0.0f) continue;
            const float* wrow = &wv.at2(k, 0);
            for (int m = 0; m < M; ++m) acc[m] += static_cast<double>(xnk) * wrow[m];
        }
        float* orow = &out.at2(n, 0);
        for (int m = 0; m < M; ++m) orow[m] = static_cast<float>(acc[m]);
    }
    Var xn = x, wn = w, bn = b;
    return make_op(std::move(out), {x, w, b}, [xn, wn, bn, B, K, M](Node& self) {
        const Tensor& g = self.grad;
        if (bn->requires_grad) {
            Tensor& gb = bn->ensure_grad();
            for (int n = 0; n < B; ++n)
                for (int m = 0; m < M; ++m) gb.data[m] += g.at2(n, m);
        }
        if (wn->requires_grad) {
            Tensor& gw = wn->ensure_grad();
            for (int n = 0; n < B; ++n)
                for (int k = 0; k < K; ++k) {
                    float xnk = xn->value.at2(n, k);
                    if (xnk == 0.0f) continue;
                    float* gwrow = &gw.at2(k, 0);
                    const float* grow = &g.at2(n, 0);
                    for (int m = 0; m < M; ++m) gwrow[m] += xnk * grow[m];
                }
        }
        if (xn->requires_grad) {
            Tensor& gx = xn->ensure_grad();
            for (int n = 0; n < B; ++n)
                for (int k = 0; k < K; ++k) {
                    const float* wrow = &wn->value.at2(k, 0);
                    const float* grow = &g.at2(n, 0);
                    float acc = 0.0f;
                    for (int m = 0; m < M; ++m) acc += wrow[m] * grow[m];
                    gx.at2(n, k) += acc;
                }
        }
    });
}

Var flatten(const Var& x) {
    const Tensor& v = x->value;
    if (v.rank() < 2) throw std::invalid_argument("flatten: need at least rank 2");
    int B = v.dim(0);
    int rest = static_cast<int>(v.data.size()) / std::max(B, 1);
    Tensor out = Tensor::from({B, rest}, v.data);
    Var xv = x;
    return make_op(std::move(out), {x}, [xv](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += self.grad.data[i];
    });
}

void reset_kink_signature() { g_kink_sig = 0xcbf29ce484222325ull; }

uint64_t kink_signature() { return g_kink_sig; }

Var relu(const Var& x) {
    Tensor out = x->value;
    uint64_t bits = 0;
    int nbits = 0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        bits = (bits << 1) | (out.data[i] > 0.0f ? 1u : 0u);
        if (++nbits == 64) {
            sig_mix(bits);
            bits = 0;
            nbits = 0;
        }
        if (out.data[i] <= 0.0f) out.data[i] = 0.0f;
    }
    if (nbits) sig_mix(bits);
    Var xv = x;
    return make_op(std::move(out), {x}, [xv](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        // derivative at exactly 0 is defined as 0
        for (size_t i = 0; i < gx.data.size(); ++i)
            if (xv->value.data[i] > 0.0f) gx.data[i] += self.grad.data[i];
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (float& v : out.data) {
        // stable in both tails; underflows to 0 below roughly -103 in f32
        double e = std::exp(-std::abs(static_cast<double>(v)));
        double y = 1.0 / (1.0 + e);
        v = static_cast<float>(v >= 0.0f ? y : 1.0 - y);
    }
    Var xv = x;
    Tensor saved = out;
    return make_op(std::move(out), {x}, [xv, saved](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (size_t i = 0; i < gx.data.size(); ++i) {
            float y = saved.data[i];
            gx.data[i] += self.grad.data[i] * y * (1.0f - y);
        }
    });
}

Var layer_norm_spatial(const Var& x, const Var& scale, const Var& shift, float epsilon) {
    check_4d(x->value, "layer_norm_spatial");
    const Tensor& v = x->value;
    int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    int N = H * W;
    if (N == 0) throw std::invalid_argument("layer_norm_spatial: zero spatial extent");
    if (scale->value.numel() != C || shift->value.numel() != C)
        throw std::invalid_argument("layer_norm_spatial: scale/shift must have one entry per channel");
    Tensor out(v.shape);
    Tensor xhat(v.shape);
    Tensor inv_std({B, C});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const float* p = &v.at4(n, c, 0, 0);
            double mu = 0.0;
            for (int i = 0; i < N; ++i) mu += p[i];
            mu /= N;
            double var = 0.0;
            for (int i = 0; i < N; ++i) {
                double d = p[i] - mu;
                var += d * d;
            }
            var /= N;
            float is = static_cast<float>(1.0 / std::sqrt(var + epsilon));
            inv_std.at2(n, c) = is;
            float* xh = &xhat.at4(n, c, 0, 0);
            float* o = &out.at4(n, c, 0, 0);
            float sc = scale->value.data[c], sh = shift->value.data[c];
            for (int i = 0; i < N; ++i) {
                xh[i] = (p[i] - static_cast<float>(mu)) * is;
                o[i] = sc * xh[i] + sh;
            }
        }
    Var xv = x, sv = scale, hv = shift;
    auto xh = std::make_shared<Tensor>(std::move(xhat));
    auto is = std::make_shared<Tensor>(std::move(inv_std));
    return make_op(std::move(out), {x, scale, shift}, [xv, sv, hv, xh, is, B, C, N](Node& self) {
        const Tensor& g = self.grad;
        for (int n = 0; n < B; ++n)
            for (int c = 0; c < C; ++c) {
                const float* grow = &g.at4(n, c, 0, 0);
                const float* xhrow = &xh->at4(n, c, 0, 0);
                if (sv->requires_grad) {
                    float acc = 0.0f;
                    for (int i = 0; i < N; ++i) acc += grow[i] * xhrow[i];
                    sv->ensure_grad().data[c] += acc;
                }
                if (hv->requires_grad) {
                    float acc = 0.0f;
                    for (int i = 0; i < N; ++i) acc += grow[i];
                    hv->ensure_grad().data[c] += acc;
                }
                if (xv->requires_grad) {
                    float sc = sv->value.data[c];
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (int i = 0; i < N; ++i) {
                        double dxh = static_cast<double>(grow[i]) * sc;
                        m1 += dxh;
                        m2 += dxh * xhrow[i];
                    }
                    m1 /= N;
                    m2 /= N;
                    float* gx = &xv->ensure_grad().at4(n, c, 0, 0);
                    float isv = is->at2(n, c);
                    for (int i = 0; i < N; ++i) {
                        double dxh = static_cast<double>(grow[i]) * sc;
                        gx[i] += static_cast<float>(isv * (dxh - m1 - xhrow[i] * m2));
                    }
                }
            }
    });
}

Var batch_norm2d(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
                 Tensor& running_var, float momentum, float epsilon, bool training) {
    check_4d(x->value, "batch_norm2d");
    const Tensor& v = x->value;
    int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
    if (B == 0) throw std::invalid_argument("batch_norm2d: empty batch");
    if (scale->value.numel() != C || shift->value.numel() != C ||
        running_mean.numel() != C || running_var.numel() != C)
        throw std::invalid_argument("batch_norm2d: per-channel parameter size mismatch");
    long long N = static_cast<long long>(B) * H * W;
    std::vector<float> mu(C), var(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < B; ++n) {
                const float* p = &v.at4(n, c, 0, 0);
                for (int i = 0; i < H * W; ++i) s += p[i];
            }
            mu[c] = static_cast<float>(s / N);
            double q = 0.0;
            for (int n = 0; n < B; ++n) {
                const float* p = &v.at4(n, c, 0, 0);
                for (int i = 0; i < H * W; ++i) {
                    double d = p[i] - mu[c];
                    q += d * d;
                }
            }
            var[c] = static_cast<float>(q / N);
            running_mean.data[c] = (1.0f - momentum) * running_mean.data[c] + momentum * mu[c];
            running_var.data[c] = (1.0f - momentum) * running_var.data[c] + momentum * var[c];
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mu[c] = running_mean.data[c];
            var[c] = running_var.data[c];
        }
    }
    Tensor out(v.shape);
    Tensor xhat(v.shape);
    std::vector<float> inv_std(C);
    for (int c = 0; c < C; ++c) inv_std[c] = 1.0f / std::sqrt(var[c] + epsilon);
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const float* p = &v.at4(n, c, 0, 0);
            float* xh = &xhat.at4(n, c, 0, 0);
            float* o = &out.at4(n, c, 0, 0);
            float sc = scale->value.data[c], sh = shift->value.data[c];
            for (int i = 0; i < H * W; ++i) {
                xh[i] = (p[i] - mu[c]) * inv_std[c];
                o[i] = sc * xh[i] + sh;
            }
        }
    Var xv = x, sv = scale, hv = shift;
    auto xhp = std::make_shared<Tensor>(std::move(xhat));
    auto isp = std::make_shared<std::vector<float>>(std::move(inv_std));
    return make_op(std::move(out), {x, scale, shift},
                   [xv, sv, hv, xhp, isp, B, C, H, W, N, training](Node& self) {
        const Tensor& g = self.grad;
        int HW = H * W;
        for (int c = 0; c < C; ++c) {
            double gsum = 0.0, gxhat = 0.0;
            for (int n = 0; n < B; ++n) {
                const float* grow = &g.at4(n, c, 0, 0);
                const float* xhrow = &xhp->at4(n, c, 0, 0);
                for (int i = 0; i < HW; ++i) {
                    gsum += grow[i];
                    gxhat += static_cast<double>(grow[i]) * xhrow[i];
                }
            }
            if (sv->requires_grad) sv->ensure_grad().data[c] += static_cast<float>(gxhat);
            if (hv->requires_grad) hv->ensure_grad().data[c] += static_cast<float>(gsum);
            if (xv->requires_grad) {
                float sc = sv->value.data[c];
                float is = (*isp)[c];
                double m1 = gsum * sc / static_cast<double>(N);
                double m2 = gxhat * sc / static_cast<double>(N);
                for (int n = 0; n < B; ++n) {
                    const float* grow = &g.at4(n, c, 0, 0);
                    const float* xhrow = &xhp->at4(n, c, 0, 0);
                    float* gx = &xv->ensure_grad().at4(n, c, 0, 0);
                    for (int i = 0; i < HW; ++i) {
                        double dxh = static_cast<double>(grow[i]) * sc;
                        if (training)
                            gx[i] += static_cast<float>(is * (dxh - m1 - xhrow[i] * m2));
                        else
                            gx[i] += static_cast<float>(is * dxh);
                    }
                }
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    Var av = a, bv = b;
    return make_op(std::move(out), {a, b}, [av, bv](Node& self) {
        for (const Var& p : {av, bv}) {
            if (!p->requires_grad) continue;
            Tensor& gp = p->ensure_grad();
            for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += self.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    Var av = a, bv = b;
    return make_op(std::move(out), {a, b}, [av, bv](Node& self) {
        if (av->requires_grad) {
            Tensor& ga = av->ensure_grad();
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += self.grad.data[i];
        }
        if (bv->requires_grad) {
            Tensor& gb = bv->ensure_grad();
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= self.grad.data[i];
        }
    });
}

namespace {

bool broadcastable_gate(const Tensor& gate, const Tensor& full) {
    return gate.rank() == 4 && full.rank() == 4 && gate.dim(0) == full.dim(0) &&
           gate.dim(1) == 1 && gate.dim(2) == full.dim(2) && gate.dim(3) == full.dim(3);
}

// gate (B,1,H,W) times full (B,C,H,W)
Var mul_broadcast(const Var& gate, const Var& full) {
    const Tensor& gv = gate->value;
    const Tensor& fv = full->value;
    int B = fv.dim(0), C = fv.dim(1), HW = fv.dim(2) * fv.dim(3);
    Tensor out(fv.shape);
    for (int n = 0; n < B; ++n) {
        const float* grow = &gv.at4(n, 0, 0, 0);
        for (int c = 0; c < C; ++c) {
            const float* frow = &fv.at4(n, c, 0, 0);
            float* orow = &out.at4(n, c, 0, 0);
            for (int i = 0; i < HW; ++i) orow[i] = grow[i] * frow[i];
        }
    }
    Var gn = gate, fn = full;
    return make_op(std::move(out), {gate, full}, [gn, fn, B, C, HW](Node& self) {
        const Tensor& g = self.grad;
        if (gn->requires_grad) {
            Tensor& gg = gn->ensure_grad();
            for (int n = 0; n < B; ++n) {
                float* ggrow = &gg.at4(n, 0, 0, 0);
                for (int c = 0; c < C; ++c) {
                    const float* frow = &fn->value.at4(n, c, 0, 0);
                    const float* grow = &g.at4(n, c, 0, 0);
                    for (int i = 0; i < HW; ++i) ggrow[i] += grow[i] * frow[i];
                }
            }
        }
        if (fn->requires_grad) {
            Tensor& gf = fn->ensure_grad();
            for (int n = 0; n < B; ++n) {
                const float* gaterow = &gn->value.at4(n, 0, 0, 0);
                for (int c = 0; c < C; ++c) {
                    const float* grow = &g.at4(n, c, 0, 0);
                    float* gfrow = &gf.at4(n, c, 0, 0);
                    for (int i = 0; i < HW; ++i) gfrow[i] += grow[i] * gaterow[i];
                }
            }
        }
    });
}

}  // namespace

Var mul(const Var& a, const Var& b) {
    if (a->value.same_shape(b->value)) {
        Tensor out = a->value;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
        Var av = a, bv = b;
        return make_op(std::move(out), {a, b}, [av, bv](Node& self) {
            if (av->requires_grad) {
                Tensor& ga = av->ensure_grad();
                for (size_t i = 0; i < ga.data.size(); ++i)
                    ga.data[i] += self.grad.data[i] * bv->value.data[i];
            }
            if (bv->requires_grad) {
                Tensor& gb = bv->ensure_grad();
                for (size_t i = 0; i < gb.data.size(); ++i)
                    gb.data[i] += self.grad.data[i] * av->value.data[i];
            }
        });
    }
    if (broadcastable_gate(a->value, b->value)) return mul_broadcast(a, b);
    if (broadcastable_gate(b->value, a->value)) return mul_broadcast(b, a);
    throw std::invalid_argument("mul: shapes " + a->value.shape_str() + " and " +
                                b->value.shape_str() + " are not compatible");
}

Var scale(const Var& x, float s) {
    Tensor out = x->value;
    for (float& v : out.data) v *= s;
    Var xv = x;
    return make_op(std::move(out), {x}, [xv, s](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += s * self.grad.data[i];
    });
}

Var add_scalar(const Var& x, float s) {
    Tensor out = x->value;
    for (float& v : out.data) v += s;
    Var xv = x;
    return make_op(std::move(out), {x}, [xv](Node& self) {
        if (!xv->requires_grad) return;
        Tensor& gx = xv->ensure_grad();
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += self.grad.data[i];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    check_4d(av, "concat_channels");
    check_4d(bv, "concat_channels");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: non-channel extents must match");
    int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
    Tensor out({B, Ca + Cb, av.dim(2), av.dim(3)});
    for (int n = 0; n < B; ++n) {
        std::copy(&av.at4(n, 0, 0, 0), &av.at4(n, 0, 0, 0) + Ca * HW, &out.at4(n, 0, 0, 0));
        std::copy(&bv.at4(n, 0, 0, 0), &bv.at4(n, 0, 0, 0) + Cb * HW, &out.at4(n, Ca, 0, 0));
    }
    Var an = a, bn = b;
    return make_op(std::move(out), {a, b}, [an, bn, B, Ca, Cb, HW](Node& self) {
        for (int n = 0; n < B; ++n) {
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad();
                const float* g = &self.grad.at4(n, 0, 0, 0);
                float* dst = &ga.at4(n, 0, 0, 0);
                for (int i = 0; i < Ca * HW; ++i) dst[i] += g[i];
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->ensure_grad();
                const float* g = &self.grad.at4(n, Ca, 0, 0);
                float* dst = &gb.at4(n, 0, 0, 0);
                for (int i = 0; i < Cb * HW; ++i) dst[i] += g[i];
            }
        }
    });
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax: expected rank-2 logits");
    int B = logits.dim(0), C = logits.dim(1);
    Tensor p(logits.shape);
    for (int n = 0; n < B; ++n) {
        const float* row = &logits.at2(n, 0);
        float mx = *std::max_element(row, row + C);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
        for (int c = 0; c < C; ++c)
            p.at2(n, c) = static_cast<float>(std::exp(static_cast<double>(row[c]) - mx) / z);
    }
    return p;
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Tensor& lv = logits->value;
    if (lv.rank() != 2) throw std::invalid_argument("softmax_cross_entropy: expected rank-2 logits");
    int B = lv.dim(0), C = lv.dim(1);
    if (static_cast<int>(labels.size()) != B)
        throw std::invalid_argument("softmax_cross_entropy: label count does not match batch");
    for (int y : labels)
        if (y < 0 || y >= C)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
    Tensor p = softmax_rows(lv);
    double loss = 0.0;
    for (int n = 0; n < B; ++n) {
        // recompute log softmax directly for accuracy
        const float* row = &lv.at2(n, 0);
        float mx = *std::max_element(row, row + C);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
        loss -= (static_cast<double>(row[labels[n]]) - mx) - std::log(z);
    }
    loss /= B;
    if (!std::isfinite(loss)) throw std::runtime_error("softmax_cross_entropy: non-finite loss");
    Tensor out = Tensor::from({1}, {static_cast<float>(loss)});
    Var ln = logits;
    auto pp = std::make_shared<Tensor>(std::move(p));
    auto lab = std::make_shared<std::vector<int>>(labels);
    return make_op(std::move(out), {logits}, [ln, pp, lab, B, C](Node& self) {
        if (!ln->requires_grad) return;
        float up = self.grad.data[0];
        Tensor& gl = ln->ensure_grad();
        for (int n = 0; n < B; ++n)
            for (int c = 0; c < C; ++c) {
                float d = pp->at2(n, c) - (c == (*lab)[n] ? 1.0f : 0.0f);
                gl.at2(n, c) += up * d / B;
            }
    });
}

}  // namespace mmcof::ag
