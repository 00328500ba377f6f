#pragma once

#include <cmath>
#include <limits>

#include "axnn/autograd.hpp"
#include "axnn/tensor.hpp"

namespace axnn {

// ---------------------------------------------------------------------------
// gemm helpers. The exact kernels go through these so the float paths
// auto-vectorize; the hardware-simulation kernels stay scalar on purpose.
// ---------------------------------------------------------------------------

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        float* cr = c + i * n;
        const float* ar = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const float av = ar[p];
            const float* br = b + p * n;
            for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
inline void gemm_abt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* ar = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const float* br = b + j * k;
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
            c[i * n + j] += acc;
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_atb(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const float* ar = a + p * m;
        const float* br = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const float av = ar[i];
            float* cr = c + i * n;
            for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Exact conv2d / linear reference kernels (cross-correlation convention).
// ---------------------------------------------------------------------------

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad, const char* who) {
    if (stride < 1) throw std::invalid_argument(std::string(who) + ": stride must be >= 1");
    int64_t out = (in + 2 * pad - k) / stride + 1;
    if (in + 2 * pad < k || out < 1)
        throw std::invalid_argument(std::string(who) + ": kernel does not fit input (in=" + std::to_string(in) +
                                    " k=" + std::to_string(k) + " pad=" + std::to_string(pad) + ")");
    return out;
}

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& bias, const char* who) {
    require_rank(x, 4, who);
    require_rank(w, 4, who);
    if (x.shape[1] != w.shape[1])
        throw std::invalid_argument(std::string(who) + ": input channels " + std::to_string(x.shape[1]) +
                                    " != weight channels " + std::to_string(w.shape[1]));
    if (!bias.empty() && (bias.rank() != 1 || bias.shape[0] != w.shape[0]))
        throw std::invalid_argument(std::string(who) + ": bias shape " + shape_str(bias.shape) +
                                    " does not match out channels " + std::to_string(w.shape[0]));
}

// cols[C*kh*kw, OH*OW] for one image x[C,H,W]; out-of-bounds taps read 0.
inline void im2col(const float* x, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
                   int64_t pad, int64_t oh, int64_t ow, float* cols) {
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                float* row = cols + ((c * kh + ki) * kw + kj) * (oh * ow);
                for (int64_t i = 0; i < oh; ++i) {
                    const int64_t ih = i * stride - pad + ki;
                    for (int64_t j = 0; j < ow; ++j) {
                        const int64_t iw = j * stride - pad + kj;
                        row[i * ow + j] = (ih >= 0 && ih < h && iw >= 0 && iw < w)
                                              ? x[(c * h + ih) * w + iw]
                                              : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im_add(const float* cols, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
                       int64_t pad, int64_t oh, int64_t ow, float* dx) {
    for (int64_t c = 0; c < c_in; ++c) {
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                const float* row = cols + ((c * kh + ki) * kw + kj) * (oh * ow);
                for (int64_t i = 0; i < oh; ++i) {
                    const int64_t ih = i * stride - pad + ki;
                    if (ih < 0 || ih >= h) continue;
                    for (int64_t j = 0; j < ow; ++j) {
                        const int64_t iw = j * stride - pad + kj;
                        if (iw < 0 || iw >= w) continue;
                        dx[(c * h + ih) * w + iw] += row[i * ow + j];
                    }
                }
            }
        }
    }
}

// y = cross_correlation(x, w); bias may be empty.
inline Tensor conv2d_exact(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad) {
    check_conv_args(x, w, bias, "conv2d_exact");
    counters().exact_conv_calls++;
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wid = x.shape[3];
    const int64_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int64_t oh = conv_out_dim(h, kh, stride, pad, "conv2d_exact");
    const int64_t ow = conv_out_dim(wid, kw, stride, pad, "conv2d_exact");
    const int64_t ckk = c * kh * kw;

    Tensor y = Tensor::zeros({n, k, oh, ow});
    std::vector<float> cols(static_cast<size_t>(ckk * oh * ow));
    for (int64_t img = 0; img < n; ++img) {
        im2col(x.data.data() + img * c * h * wid, c, h, wid, kh, kw, stride, pad, oh, ow, cols.data());
        float* yi = y.data.data() + img * k * oh * ow;
        gemm_nn(w.data.data(), cols.data(), yi, k, ckk, oh * ow);
        if (!bias.empty())
            for (int64_t f = 0; f < k; ++f)
                for (int64_t t = 0; t < oh * ow; ++t) yi[f * oh * ow + t] += bias[f];
    }
    y.ensure_finite("conv2d_exact");
    return y;
}

// y = x . w^T + bias, x[N,D], w[M,D]
inline Tensor linear_exact(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(x, 2, "linear_exact");
    require_rank(w, 2, "linear_exact");
    if (x.shape[1] != w.shape[1])
        throw std::invalid_argument("linear_exact: inner dims " + std::to_string(x.shape[1]) + " vs " +
                                    std::to_string(w.shape[1]));
    if (!bias.empty() && (bias.rank() != 1 || bias.shape[0] != w.shape[0]))
        throw std::invalid_argument("linear_exact: bias shape " + shape_str(bias.shape));
    counters().exact_linear_calls++;
    const int64_t n = x.shape[0], d = x.shape[1], m = w.shape[0];
    Tensor y = Tensor::zeros({n, m});
    gemm_abt(x.data.data(), w.data.data(), y.data.data(), n, d, m);
    if (!bias.empty())
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j) y.at2(i, j) += bias[j];
    y.ensure_finite("linear_exact");
    return y;
}

inline Tensor relu_eval(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

inline Tensor maxpool2x2_eval(const Tensor& x, std::vector<int64_t>* argmax = nullptr) {
    require_rank(x, 4, "maxpool2x2");
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int64_t oh = h / 2, ow = w / 2;
    if (oh < 1 || ow < 1) throw std::invalid_argument("maxpool2x2: input too small " + shape_str(x.shape));
    Tensor y = Tensor::zeros({n, c, oh, ow});
    if (argmax) argmax->assign(static_cast<size_t>(y.numel()), 0);
    int64_t o = 0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t ph = 0; ph < oh; ++ph)
                for (int64_t pw = 0; pw < ow; ++pw, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_idx = 0;
                    for (int64_t dh = 0; dh < 2; ++dh)
                        for (int64_t dw = 0; dw < 2; ++dw) {
                            const int64_t idx = ((i * c + ch) * h + 2 * ph + dh) * w + 2 * pw + dw;
                            if (x[idx] > best) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    y[o] = best;
                    if (argmax) (*argmax)[static_cast<size_t>(o)] = best_idx;
                }
    return y;
}

// ---------------------------------------------------------------------------
// Autograd op builders.
// ---------------------------------------------------------------------------

inline NodePtr conv2d(NodePtr x, NodePtr w, NodePtr bias, int64_t stride, int64_t pad) {
    auto n = std::make_shared<Node>();
    n->op = "conv2d";
    n->value = conv2d_exact(x->value, w->value, bias ? bias->value : Tensor{}, stride, pad);
    n->requires_grad = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
    n->parents = bias ? std::vector<NodePtr>{x, w, bias} : std::vector<NodePtr>{x, w};
    n->backward_fn = [stride, pad](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const Tensor& dy = self.grad;
        const int64_t nb = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3];
        const int64_t k = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
        const int64_t oh = dy.shape[2], ow = dy.shape[3];
        const int64_t ckk = c * kh * kw;

        Tensor dx = Tensor::zeros(xv.shape);
        Tensor dw = Tensor::zeros(wv.shape);
        std::vector<float> cols(static_cast<size_t>(ckk * oh * ow));
        std::vector<float> dcols(static_cast<size_t>(ckk * oh * ow));
        for (int64_t img = 0; img < nb; ++img) {
            const float* dyi = dy.data.data() + img * k * oh * ow;
            im2col(xv.data.data() + img * c * h * wd, c, h, wd, kh, kw, stride, pad, oh, ow, cols.data());
            gemm_abt(dyi, cols.data(), dw.data.data(), k, oh * ow, ckk);
            std::fill(dcols.begin(), dcols.end(), 0.0f);
            gemm_atb(wv.data.data(), dyi, dcols.data(), ckk, k, oh * ow);
            col2im_add(dcols.data(), c, h, wd, kh, kw, stride, pad, oh, ow, dx.data.data() + img * c * h * wd);
        }
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate_grad(dx);
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate_grad(dw);
        if (self.parents.size() == 3 && self.parents[2]->requires_grad) {
            Tensor db = Tensor::zeros({k});
            for (int64_t img = 0; img < nb; ++img)
                for (int64_t f = 0; f < k; ++f)
                    for (int64_t t = 0; t < oh * ow; ++t) db[f] += dy[(img * k + f) * oh * ow + t];
            self.parents[2]->accumulate_grad(db);
        }
    };
    return n;
}

inline NodePtr linear(NodePtr x, NodePtr w, NodePtr bias) {
    auto n = std::make_shared<Node>();
    n->op = "linear";
    n->value = linear_exact(x->value, w->value, bias ? bias->value : Tensor{});
    n->requires_grad = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
    n->parents = bias ? std::vector<NodePtr>{x, w, bias} : std::vector<NodePtr>{x, w};
    n->backward_fn = [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const Tensor& dy = self.grad;
        const int64_t nb = xv.shape[0], d = xv.shape[1], m = wv.shape[0];
        if (self.parents[0]->requires_grad) {
            Tensor dx = Tensor::zeros(xv.shape);
            gemm_nn(dy.data.data(), wv.data.data(), dx.data.data(), nb, m, d);
            self.parents[0]->accumulate_grad(dx);
        }
        if (self.parents[1]->requires_grad) {
            Tensor dw = Tensor::zeros(wv.shape);
            gemm_atb(dy.data.data(), xv.data.data(), dw.data.data(), m, nb, d);
            self.parents[1]->accumulate_grad(dw);
        }
        if (self.parents.size() == 3 && self.parents[2]->requires_grad) {
            Tensor db = Tensor::zeros({m});
            for (int64_t i = 0; i < nb; ++i)
                for (int64_t j = 0; j < m; ++j) db[j] += dy.at2(i, j);
            self.parents[2]->accumulate_grad(db);
        }
    };
    return n;
}

inline NodePtr relu(NodePtr x) {
    auto n = std::make_shared<Node>();
    n->op = "relu";
    n->value = relu_eval(x->value);
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        Tensor dx = Tensor::zeros(xv.shape);
        for (int64_t i = 0; i < xv.numel(); ++i) dx[i] = xv[i] > 0.0f ? self.grad[i] : 0.0f;
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

inline NodePtr neg(NodePtr x) {
    auto n = std::make_shared<Node>();
    n->op = "neg";
    n->value = x->value;
    for (float& v : n->value.data) v = -v;
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [](Node& self) {
        Tensor dx = self.grad;
        for (float& v : dx.data) v = -v;
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

inline NodePtr scale(NodePtr x, float s) {
    auto n = std::make_shared<Node>();
    n->op = "scale";
    n->value = x->value;
    for (float& v : n->value.data) v *= s;
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [s](Node& self) {
        Tensor dx = self.grad;
        for (float& v : dx.data) v *= s;
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

inline NodePtr add(NodePtr a, NodePtr b) {
    if (!same_shape(a->value, b->value))
        throw std::invalid_argument("add: shape mismatch " + shape_str(a->value.shape) + " vs " +
                                    shape_str(b->value.shape));
    auto n = std::make_shared<Node>();
    n->op = "add";
    n->value = a->value;
    for (int64_t i = 0; i < n->value.numel(); ++i) n->value[i] += b->value[i];
    n->requires_grad = a->requires_grad || b->requires_grad;
    n->parents = {std::move(a), std::move(b)};
    n->backward_fn = [](Node& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->accumulate_grad(self.grad);
    };
    return n;
}

inline NodePtr sub(NodePtr a, NodePtr b) { return add(std::move(a), neg(std::move(b))); }

// y[N,K,H,W] + b[K]
inline NodePtr add_channel_bias(NodePtr y, NodePtr b) {
    require_rank(y->value, 4, "add_channel_bias");
    if (b->value.rank() != 1 || b->value.shape[0] != y->value.shape[1])
        throw std::invalid_argument("add_channel_bias: bias shape " + shape_str(b->value.shape));
    auto n = std::make_shared<Node>();
    n->op = "add_channel_bias";
    n->value = y->value;
    const int64_t k = y->value.shape[1], hw = y->value.shape[2] * y->value.shape[3];
    const int64_t nb = y->value.shape[0];
    for (int64_t img = 0; img < nb; ++img)
        for (int64_t f = 0; f < k; ++f)
            for (int64_t t = 0; t < hw; ++t) n->value[(img * k + f) * hw + t] += b->value[f];
    n->requires_grad = y->requires_grad || b->requires_grad;
    n->parents = {std::move(y), std::move(b)};
    n->backward_fn = [](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate_grad(self.grad);
        if (self.parents[1]->requires_grad) {
            const Tensor& dy = self.grad;
            const int64_t nb = dy.shape[0], k = dy.shape[1], hw = dy.shape[2] * dy.shape[3];
            Tensor db = Tensor::zeros({k});
            for (int64_t img = 0; img < nb; ++img)
                for (int64_t f = 0; f < k; ++f)
                    for (int64_t t = 0; t < hw; ++t) db[f] += dy[(img * k + f) * hw + t];
            self.parents[1]->accumulate_grad(db);
        }
    };
    return n;
}

// y[N,M] + b[M]
inline NodePtr add_row_bias(NodePtr y, NodePtr b) {
    require_rank(y->value, 2, "add_row_bias");
    if (b->value.rank() != 1 || b->value.shape[0] != y->value.shape[1])
        throw std::invalid_argument("add_row_bias: bias shape " + shape_str(b->value.shape));
    auto n = std::make_shared<Node>();
    n->op = "add_row_bias";
    n->value = y->value;
    for (int64_t i = 0; i < y->value.shape[0]; ++i)
        for (int64_t j = 0; j < y->value.shape[1]; ++j) n->value.at2(i, j) += b->value[j];
    n->requires_grad = y->requires_grad || b->requires_grad;
    n->parents = {std::move(y), std::move(b)};
    n->backward_fn = [](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate_grad(self.grad);
        if (self.parents[1]->requires_grad) {
            const Tensor& dy = self.grad;
            Tensor db = Tensor::zeros({dy.shape[1]});
            for (int64_t i = 0; i < dy.shape[0]; ++i)
                for (int64_t j = 0; j < dy.shape[1]; ++j) db[j] += dy.at2(i, j);
            self.parents[1]->accumulate_grad(db);
        }
    };
    return n;
}

inline NodePtr maxpool2x2(NodePtr x) {
    auto indices = std::make_shared<std::vector<int64_t>>();
    auto n = std::make_shared<Node>();
    n->op = "maxpool2x2";
    n->value = maxpool2x2_eval(x->value, indices.get());
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [indices](Node& self) {
        Tensor dx = Tensor::zeros(self.parents[0]->value.shape);
        for (size_t o = 0; o < indices->size(); ++o) dx[(*indices)[o]] += self.grad[static_cast<int64_t>(o)];
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

inline NodePtr flatten(NodePtr x) {
    auto n = std::make_shared<Node>();
    n->op = "flatten";
    const int64_t nb = x->value.shape[0];
    n->value = Tensor({nb, x->value.numel() / nb}, x->value.data);
    n->requires_grad = x->requires_grad;
    n->parents = {std::move(x)};
    n->backward_fn = [](Node& self) {
        Tensor dx(self.parents[0]->value.shape, self.grad.data);
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

// Mean cross-entropy over the batch with log-sum-exp stabilization.
inline NodePtr softmax_cross_entropy(NodePtr logits, const std::vector<int>& labels) {
    require_rank(logits->value, 2, "softmax_cross_entropy");
    const int64_t nb = logits->value.shape[0], m = logits->value.shape[1];
    if (static_cast<int64_t>(labels.size()) != nb)
        throw std::invalid_argument("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                                    " != batch " + std::to_string(nb));
    for (int y : labels)
        if (y < 0 || y >= m)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) + " out of range [0," +
                                        std::to_string(m) + ")");
    double loss = 0.0;
    for (int64_t i = 0; i < nb; ++i) {
        float mx = -std::numeric_limits<float>::infinity();
        for (int64_t j = 0; j < m; ++j) mx = std::max(mx, logits->value.at2(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < m; ++j) sum += std::exp(static_cast<double>(logits->value.at2(i, j) - mx));
        loss += mx + std::log(sum) - logits->value.at2(i, labels[static_cast<size_t>(i)]);
    }
    auto n = std::make_shared<Node>();
    n->op = "softmax_cross_entropy";
    n->value = Tensor::scalar(static_cast<float>(loss / static_cast<double>(nb)));
    n->requires_grad = logits->requires_grad;
    n->parents = {std::move(logits)};
    n->backward_fn = [labels](Node& self) {
        const Tensor& lv = self.parents[0]->value;
        const int64_t nb = lv.shape[0], m = lv.shape[1];
        const float g = self.grad[0] / static_cast<float>(nb);
        Tensor dx = Tensor::zeros(lv.shape);
        for (int64_t i = 0; i < nb; ++i) {
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t j = 0; j < m; ++j) mx = std::max(mx, lv.at2(i, j));
            double sum = 0.0;
            for (int64_t j = 0; j < m; ++j) sum += std::exp(static_cast<double>(lv.at2(i, j) - mx));
            for (int64_t j = 0; j < m; ++j) {
                const float p = static_cast<float>(std::exp(static_cast<double>(lv.at2(i, j) - mx)) / sum);
                dx.at2(i, j) = g * (p - (labels[static_cast<size_t>(i)] == j ? 1.0f : 0.0f));
            }
        }
        self.parents[0]->accumulate_grad(dx);
    };
    return n;
}

inline Tensor kaiming_uniform(const Shape& shape, int64_t fan_in, Rng& rng) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    return Tensor::uniform(shape, -bound, bound, rng);
}

}  // namespace axnn
