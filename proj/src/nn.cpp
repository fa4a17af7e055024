#include "snnergy/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "snnergy/counters.hpp"

namespace snnergy {

namespace {

// im2col for one sample: x [C, H, W] -> col [C*k*k, Ho*Wo]
void im2col(const float* x, Dim C, Dim H, Dim W, int k, int pad, int stride, Dim Ho, Dim Wo,
            float* col) {
    for (Dim c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* dst = col + ((c * k + ki) * k + kj) * Ho * Wo;
                for (Dim oi = 0; oi < Ho; ++oi) {
                    Dim ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= H) {
                        std::fill(dst + oi * Wo, dst + (oi + 1) * Wo, 0.0f);
                        continue;
                    }
                    const float* src = x + (c * H + ii) * W;
                    for (Dim oj = 0; oj < Wo; ++oj) {
                        Dim jj = oj * stride + kj - pad;
                        dst[oi * Wo + oj] = (jj >= 0 && jj < W) ? src[jj] : 0.0f;
                    }
                }
            }
        }
    }
}

// col2im scatter-add, inverse of im2col
void col2im_acc(const float* col, Dim C, Dim H, Dim W, int k, int pad, int stride, Dim Ho, Dim Wo,
                float* x) {
    for (Dim c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* src = col + ((c * k + ki) * k + kj) * Ho * Wo;
                for (Dim oi = 0; oi < Ho; ++oi) {
                    Dim ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= H) continue;
                    float* dst = x + (c * H + ii) * W;
                    for (Dim oj = 0; oj < Wo; ++oj) {
                        Dim jj = oj * stride + kj - pad;
                        if (jj >= 0 && jj < W) dst[jj] += src[oi * Wo + oj];
                    }
                }
            }
        }
    }
}

// C[M,P] += A[M,K]*B[K,P]
void mm_acc(const float* A, const float* B, float* C, Dim M, Dim K, Dim P) {
    for (Dim i = 0; i < M; ++i) {
        float* crow = C + i * P;
        const float* arow = A + i * K;
        for (Dim k = 0; k < K; ++k) {
            float av = arow[k];
            if (av == 0.0f) continue;
            const float* brow = B + k * P;
            for (Dim j = 0; j < P; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,P] += A[K,M]^T * B[K,P]
void mm_at_acc(const float* A, const float* B, float* C, Dim K, Dim M, Dim P) {
    for (Dim k = 0; k < K; ++k) {
        const float* arow = A + k * M;
        const float* brow = B + k * P;
        for (Dim i = 0; i < M; ++i) {
            float av = arow[i];
            if (av == 0.0f) continue;
            float* crow = C + i * P;
            for (Dim j = 0; j < P; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,K] += A[M,P] * B[K,P]^T
void mm_bt_acc(const float* A, const float* B, float* C, Dim M, Dim P, Dim K) {
    for (Dim i = 0; i < M; ++i) {
        const float* arow = A + i * P;
        float* crow = C + i * K;
        for (Dim k = 0; k < K; ++k) {
            const float* brow = B + k * P;
            float acc = 0.0f;
            for (Dim j = 0; j < P; ++j) acc += arow[j] * brow[j];
            crow[k] += acc;
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, int stride) {
    SNN_CHECK_SHAPE(x.rank() >= 3, "conv2d: input must be [..., C, H, W], got ",
                    shape_str(x.shape()));
    SNN_CHECK_SHAPE(weight.rank() == 4, "conv2d: weight must be [Cout, Cin, k, k], got ",
                    shape_str(weight.shape()));
    const Dim Cout = weight.dim(0), Cin = weight.dim(1);
    const int k = static_cast<int>(weight.dim(2));
    SNN_CHECK_SHAPE(k == 1 || k == 3, "conv2d: kernel must be 1 or 3, got ", k);
    SNN_CHECK_SHAPE(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2, got ", stride);
    const int r = x.rank();
    const Dim C = x.dim(r - 3), H = x.dim(r - 2), W = x.dim(r - 1);
    SNN_CHECK_SHAPE(C == Cin, "conv2d: input channels ", C, " do not match weight ",
                    shape_str(weight.shape()));
    const int pad = k == 3 ? 1 : 0;
    const Dim Ho = (H + 2 * pad - k) / stride + 1;
    const Dim Wo = (W + 2 * pad - k) / stride + 1;

    Dim batch = 1;
    for (int i = 0; i < r - 3; ++i) batch *= x.dim(i);
    Shape os(x.shape().begin(), x.shape().end() - 3);
    os.push_back(Cout);
    os.push_back(Ho);
    os.push_back(Wo);
    Tensor out = Tensor::zeros(os);
    prof::add_ops(static_cast<uint64_t>(batch) * Cout * Cin * k * k * Ho * Wo);

    const Dim ckk = Cin * k * k;
    std::vector<float> col(static_cast<size_t>(ckk * Ho * Wo));
    const float* px = x.data();
    const float* pw = weight.data();
    float* po = out.data();
    const Dim in_sz = C * H * W, out_sz = Cout * Ho * Wo;
    for (Dim b = 0; b < batch; ++b) {
        if (k == 1 && stride == 1) {
            // pointwise: out = W[Cout,Cin] * x[Cin, H*W]
            mm_acc(pw, px + b * in_sz, po + b * out_sz, Cout, Cin, H * W);
        } else {
            im2col(px + b * in_sz, C, H, W, k, pad, stride, Ho, Wo, col.data());
            mm_acc(pw, col.data(), po + b * out_sz, Cout, ckk, Ho * Wo);
        }
    }

    if (grad::tracking({&x, &weight})) {
        auto ix = x.impl(), iw = weight.impl(), io = out.impl();
        grad::record(out, [ix, iw, io, batch, Cout, Cin, k, pad, stride, H, W, Ho, Wo]() {
            if (io->grad.empty()) return;
            const Dim ckk = Cin * k * k;
            const Dim C = Cin;
            const Dim in_sz = C * H * W, out_sz = Cout * Ho * Wo;
            bool need_x = ix->requires_grad || ix->node >= 0;
            bool need_w = iw->requires_grad || iw->node >= 0;
            std::vector<float> gx, gw, col, gcol;
            if (need_x) gx.assign(ix->data.size(), 0.0f);
            if (need_w) gw.assign(iw->data.size(), 0.0f);
            col.resize(static_cast<size_t>(ckk * Ho * Wo));
            gcol.resize(static_cast<size_t>(ckk * Ho * Wo));
            const float* pg = io->grad.data();
            for (Dim b = 0; b < batch; ++b) {
                const float* gout = pg + b * out_sz;
                if (k == 1 && stride == 1) {
                    if (need_w)
                        mm_bt_acc(gout, ix->data.data() + b * in_sz, gw.data(), Cout, H * W, Cin);
                    if (need_x)
                        mm_at_acc(iw->data.data(), gout, gx.data() + b * in_sz, Cout, Cin, H * W);
                } else {
                    if (need_w) {
                        im2col(ix->data.data() + b * in_sz, C, H, W, k, pad, stride, Ho, Wo,
                               col.data());
                        mm_bt_acc(gout, col.data(), gw.data(), Cout, Ho * Wo, ckk);
                    }
                    if (need_x) {
                        std::fill(gcol.begin(), gcol.end(), 0.0f);
                        mm_at_acc(iw->data.data(), gout, gcol.data(), Cout, ckk, Ho * Wo);
                        col2im_acc(gcol.data(), C, H, W, k, pad, stride, Ho, Wo,
                                   gx.data() + b * in_sz);
                    }
                }
            }
            if (need_x) grad::accum(*ix, gx.data(), static_cast<Dim>(gx.size()));
            if (need_w) grad::accum(*iw, gw.data(), static_cast<Dim>(gw.size()));
        });
    }
    return out;
}

Tensor conv1d(const Tensor& x, const Tensor& weight) {
    SNN_CHECK_SHAPE(x.rank() >= 2, "conv1d: input must be [..., C, L], got ", shape_str(x.shape()));
    SNN_CHECK_SHAPE(weight.rank() == 3, "conv1d: weight must be [Cout, Cin, k], got ",
                    shape_str(weight.shape()));
    const Dim Cout = weight.dim(0), Cin = weight.dim(1);
    const int k = static_cast<int>(weight.dim(2));
    SNN_CHECK_SHAPE(k == 1 || k == 3, "conv1d: kernel must be 1 or 3, got ", k);
    const int r = x.rank();
    const Dim C = x.dim(r - 2), L = x.dim(r - 1);
    SNN_CHECK_SHAPE(C == Cin, "conv1d: input channels ", C, " do not match weight ",
                    shape_str(weight.shape()));
    if (k == 1) {
        // pointwise = batched matmul with the flattened weight
        Tensor w2 = reshape(weight, {Cout, Cin});
        return matmul(w2, x);
    }
    const int pad = 1;
    Dim batch = 1;
    for (int i = 0; i < r - 2; ++i) batch *= x.dim(i);
    Shape os(x.shape().begin(), x.shape().end() - 2);
    os.push_back(Cout);
    os.push_back(L);
    Tensor out = Tensor::zeros(os);
    prof::add_ops(static_cast<uint64_t>(batch) * Cout * Cin * k * L);

    const float* px = x.data();
    const float* pw = weight.data();
    float* po = out.data();
    const Dim in_sz = C * L, out_sz = Cout * L;
    for (Dim b = 0; b < batch; ++b) {
        for (Dim co = 0; co < Cout; ++co) {
            float* dst = po + b * out_sz + co * L;
            for (Dim ci = 0; ci < C; ++ci) {
                const float* src = px + b * in_sz + ci * L;
                const float* wk = pw + (co * Cin + ci) * k;
                for (Dim l = 0; l < L; ++l) {
                    float acc = 0.0f;
                    for (int kk = 0; kk < k; ++kk) {
                        Dim ll = l + kk - pad;
                        if (ll >= 0 && ll < L) acc += wk[kk] * src[ll];
                    }
                    dst[l] += acc;
                }
            }
        }
    }

    if (grad::tracking({&x, &weight})) {
        auto ix = x.impl(), iw = weight.impl(), io = out.impl();
        grad::record(out, [ix, iw, io, batch, Cout, Cin, k, pad, L]() {
            if (io->grad.empty()) return;
            const Dim C = Cin;
            const Dim in_sz = C * L, out_sz = Cout * L;
            bool need_x = ix->requires_grad || ix->node >= 0;
            bool need_w = iw->requires_grad || iw->node >= 0;
            std::vector<float> gx, gw;
            if (need_x) gx.assign(ix->data.size(), 0.0f);
            if (need_w) gw.assign(iw->data.size(), 0.0f);
            const float* pg = io->grad.data();
            for (Dim b = 0; b < batch; ++b) {
                for (Dim co = 0; co < Cout; ++co) {
                    const float* gout = pg + b * out_sz + co * L;
                    for (Dim ci = 0; ci < C; ++ci) {
                        const float* src = ix->data.data() + b * in_sz + ci * L;
                        const float* wk = iw->data.data() + (co * Cin + ci) * k;
                        float* gsrc = need_x ? gx.data() + b * in_sz + ci * L : nullptr;
                        float* gwk = need_w ? gw.data() + (co * Cin + ci) * k : nullptr;
                        for (Dim l = 0; l < L; ++l) {
                            float g = gout[l];
                            if (g == 0.0f) continue;
                            for (int kk = 0; kk < k; ++kk) {
                                Dim ll = l + kk - pad;
                                if (ll < 0 || ll >= L) continue;
                                if (gwk) gwk[kk] += g * src[ll];
                                if (gsrc) gsrc[ll] += g * wk[kk];
                            }
                        }
                    }
                }
            }
            if (need_x) grad::accum(*ix, gx.data(), static_cast<Dim>(gx.size()));
            if (need_w) grad::accum(*iw, gw.data(), static_cast<Dim>(gw.size()));
        });
    }
    return out;
}

Tensor batchnorm(const Tensor& x, BnBuffers& bn, int c_axis, bool training, bool track_running) {
    prof::CatScope cat(prof::Cat::Norm);
    SNN_CHECK_SHAPE(c_axis >= 0 && c_axis < x.rank(), "batchnorm: channel axis ", c_axis,
                    " out of range for ", shape_str(x.shape()));
    const Dim C = x.dim(c_axis);
    SNN_CHECK_SHAPE(C == bn.gamma.numel(), "batchnorm: channel count ", C,
                    " does not match parameters (", bn.gamma.numel(), ")");
    Dim outer = 1, inner = 1;
    for (int i = 0; i < c_axis; ++i) outer *= x.dim(i);
    for (int i = c_axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const Dim n_per_c = outer * inner;
    SNN_CHECK_CONTRACT(n_per_c > 0, "batchnorm: zero-size batch");

    std::vector<float> mean(static_cast<size_t>(C), 0.0f), var(static_cast<size_t>(C), 0.0f);
    const float* px = x.data();
    if (training) {
        for (Dim o = 0; o < outer; ++o)
            for (Dim c = 0; c < C; ++c) {
                const float* src = px + (o * C + c) * inner;
                double s = 0.0;
                for (Dim i = 0; i < inner; ++i) s += src[i];
                mean[static_cast<size_t>(c)] += static_cast<float>(s);
            }
        for (Dim c = 0; c < C; ++c) mean[static_cast<size_t>(c)] /= static_cast<float>(n_per_c);
        for (Dim o = 0; o < outer; ++o)
            for (Dim c = 0; c < C; ++c) {
                const float* src = px + (o * C + c) * inner;
                double s = 0.0;
                float m = mean[static_cast<size_t>(c)];
                for (Dim i = 0; i < inner; ++i) {
                    float d = src[i] - m;
                    s += static_cast<double>(d) * d;
                }
                var[static_cast<size_t>(c)] += static_cast<float>(s);
            }
        for (Dim c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<float>(n_per_c);
        if (track_running) {
            float* rm = bn.running_mean.data();
            float* rv = bn.running_var.data();
            for (Dim c = 0; c < C; ++c) {
                rm[c] = (1.0f - bn.momentum) * rm[c] + bn.momentum * mean[static_cast<size_t>(c)];
                rv[c] = (1.0f - bn.momentum) * rv[c] + bn.momentum * var[static_cast<size_t>(c)];
            }
        }
    } else {
        std::memcpy(mean.data(), bn.running_mean.data(), static_cast<size_t>(C) * sizeof(float));
        std::memcpy(var.data(), bn.running_var.data(), static_cast<size_t>(C) * sizeof(float));
    }

    std::vector<float> inv_std(static_cast<size_t>(C));
    for (Dim c = 0; c < C; ++c)
        inv_std[static_cast<size_t>(c)] = 1.0f / std::sqrt(var[static_cast<size_t>(c)] + bn.eps);

    Tensor out = Tensor::zeros(x.shape());
    prof::add_ops(static_cast<uint64_t>(x.numel()) * 2);
    float* po = out.data();
    const float* pg = bn.gamma.data();
    const float* pb = bn.beta.data();
    for (Dim o = 0; o < outer; ++o)
        for (Dim c = 0; c < C; ++c) {
            const float* src = px + (o * C + c) * inner;
            float* dst = po + (o * C + c) * inner;
            const float m = mean[static_cast<size_t>(c)];
            const float is = inv_std[static_cast<size_t>(c)];
            const float g = pg[c], b = pb[c];
            for (Dim i = 0; i < inner; ++i) dst[i] = (src[i] - m) * is * g + b;
        }

    if (grad::tracking({&x, &bn.gamma, &bn.beta})) {
        auto ix = x.impl(), igm = bn.gamma.impl(), ibt = bn.beta.impl(), io = out.impl();
        grad::record(out, [ix, igm, ibt, io, mean, inv_std, outer, C, inner, training]() {
            if (io->grad.empty()) return;
            const Dim n_per_c = outer * inner;
            const float* pg = io->grad.data();
            const float* px = ix->data.data();
            const float* gamma = igm->data.data();
            std::vector<float> dgamma(static_cast<size_t>(C), 0.0f);
            std::vector<float> dbeta(static_cast<size_t>(C), 0.0f);
            // per-channel sums of dy and dy*xhat
            for (Dim o = 0; o < outer; ++o)
                for (Dim c = 0; c < C; ++c) {
                    const float* gy = pg + (o * C + c) * inner;
                    const float* sx = px + (o * C + c) * inner;
                    const float m = mean[static_cast<size_t>(c)];
                    const float is = inv_std[static_cast<size_t>(c)];
                    double sg = 0.0, sgx = 0.0;
                    for (Dim i = 0; i < inner; ++i) {
                        sg += gy[i];
                        sgx += static_cast<double>(gy[i]) * (sx[i] - m) * is;
                    }
                    dbeta[static_cast<size_t>(c)] += static_cast<float>(sg);
                    dgamma[static_cast<size_t>(c)] += static_cast<float>(sgx);
                }
            if (igm->requires_grad || igm->node >= 0)
                grad::accum(*igm, dgamma.data(), C);
            if (ibt->requires_grad || ibt->node >= 0)
                grad::accum(*ibt, dbeta.data(), C);
            if (ix->requires_grad || ix->node >= 0) {
                std::vector<float> gx(ix->data.size());
                for (Dim o = 0; o < outer; ++o)
                    for (Dim c = 0; c < C; ++c) {
                        const float* gy = pg + (o * C + c) * inner;
                        const float* sx = px + (o * C + c) * inner;
                        float* dst = gx.data() + (o * C + c) * inner;
                        const float m = mean[static_cast<size_t>(c)];
                        const float is = inv_std[static_cast<size_t>(c)];
                        const float gmc = gamma[c];
                        if (training) {
                            const float mg = dbeta[static_cast<size_t>(c)] / static_cast<float>(n_per_c);
                            const float mgx = dgamma[static_cast<size_t>(c)] / static_cast<float>(n_per_c);
                            for (Dim i = 0; i < inner; ++i) {
                                float xhat = (sx[i] - m) * is;
                                dst[i] = gmc * is * (gy[i] - mg - xhat * mgx);
                            }
                        } else {
                            for (Dim i = 0; i < inner; ++i) dst[i] = gy[i] * gmc * is;
                        }
                    }
                grad::accum(*ix, gx.data(), static_cast<Dim>(gx.size()));
            }
        });
    }
    return out;
}

Tensor maxpool2d(const Tensor& x) {
    SNN_CHECK_SHAPE(x.rank() >= 2, "maxpool2d: input must be [..., H, W]");
    const int r = x.rank();
    const Dim H = x.dim(r - 2), W = x.dim(r - 1);
    SNN_CHECK_SHAPE(H % 2 == 0 && W % 2 == 0, "maxpool2d: spatial size must be even, got ", H, "x", W);
    const Dim Ho = H / 2, Wo = W / 2;
    Dim batch = 1;
    for (int i = 0; i < r - 2; ++i) batch *= x.dim(i);
    Shape os(x.shape().begin(), x.shape().end() - 2);
    os.push_back(Ho);
    os.push_back(Wo);
    Tensor out = Tensor::zeros(os);
    prof::add_ops(static_cast<uint64_t>(x.numel()));

    auto argmax = std::make_shared<std::vector<Dim>>(static_cast<size_t>(batch * Ho * Wo));
    const float* px = x.data();
    float* po = out.data();
    for (Dim b = 0; b < batch; ++b) {
        const float* src = px + b * H * W;
        for (Dim oi = 0; oi < Ho; ++oi)
            for (Dim oj = 0; oj < Wo; ++oj) {
                Dim base = (2 * oi) * W + 2 * oj;
                Dim cand[4] = {base, base + 1, base + W, base + W + 1};
                Dim best = cand[0];
                float bv = src[best];
                for (int q = 1; q < 4; ++q) {
                    if (src[cand[q]] > bv) {  // strict: first index wins ties
                        bv = src[cand[q]];
                        best = cand[q];
                    }
                }
                po[(b * Ho + oi) * Wo + oj] = bv;
                (*argmax)[static_cast<size_t>((b * Ho + oi) * Wo + oj)] = b * H * W + best;
            }
    }

    if (grad::tracking({&x})) {
        auto ix = x.impl(), io = out.impl();
        grad::record(out, [ix, io, argmax]() {
            if (io->grad.empty()) return;
            if (!(ix->requires_grad || ix->node >= 0)) return;
            if (ix->grad.empty()) ix->grad.assign(ix->data.size(), 0.0f);
            for (size_t i = 0; i < argmax->size(); ++i) {
                ix->grad[static_cast<size_t>((*argmax)[i])] += io->grad[i];
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    SNN_CHECK_SHAPE(logits.rank() == 2, "softmax_rows: want [B, K]");
    const Dim B = logits.dim(0), K = logits.dim(1);
    Tensor out = Tensor::zeros(logits.shape());
    const float* pl = logits.data();
    float* po = out.data();
    for (Dim b = 0; b < B; ++b) {
        const float* row = pl + b * K;
        float mx = row[0];
        for (Dim k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (Dim k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - mx));
        for (Dim k = 0; k < K; ++k)
            po[b * K + k] = static_cast<float>(std::exp(static_cast<double>(row[k] - mx)) / z);
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    SNN_CHECK_SHAPE(logits.rank() == 2, "cross_entropy: logits must be [B, K]");
    const Dim B = logits.dim(0), K = logits.dim(1);
    SNN_CHECK_CONTRACT(static_cast<Dim>(labels.size()) == B, "cross_entropy: ", labels.size(),
                       " labels for batch ", B);
    for (int y : labels)
        SNN_CHECK_CONTRACT(y >= 0 && y < K, "cross_entropy: label ", y, " outside [0,", K, ")");

    Tensor probs = softmax_rows(logits);
    Tensor out = Tensor::zeros({1});
    double loss = 0.0;
    const float* pp = probs.data();
    for (Dim b = 0; b < B; ++b) {
        float p = std::max(pp[b * K + labels[static_cast<size_t>(b)]], 1e-12f);
        loss -= std::log(static_cast<double>(p));
    }
    out.data()[0] = static_cast<float>(loss / static_cast<double>(B));

    if (grad::tracking({&logits})) {
        auto il = logits.impl(), io = out.impl();
        auto iprobs = probs.impl();
        auto labels_copy = labels;
        grad::record(out, [il, io, iprobs, labels_copy, B, K]() {
            if (io->grad.empty()) return;
            float g = io->grad[0] / static_cast<float>(B);
            std::vector<float> gl(il->data.size());
            for (Dim b = 0; b < B; ++b) {
                for (Dim k = 0; k < K; ++k)
                    gl[static_cast<size_t>(b * K + k)] = g * iprobs->data[static_cast<size_t>(b * K + k)];
                gl[static_cast<size_t>(b * K + labels_copy[static_cast<size_t>(b)])] -= g;
            }
            grad::accum(*il, gl.data(), static_cast<Dim>(gl.size()));
        });
    }
    return out;
}

}  // namespace snnergy
