#include "snnergy/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "snnergy/counters.hpp"

namespace snnergy {

Dim shape_numel(const Shape& s) {
    Dim n = 1;
    for (Dim d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    out += ")";
    return out;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace {
void check_shape_valid(const Shape& s) {
    for (Dim d : s) SNN_CHECK_SHAPE(d >= 1, "shape entries must be >= 1, got ", shape_str(s));
}

std::vector<Dim> row_major_strides(const Shape& s) {
    std::vector<Dim> st(s.size());
    Dim acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}
}  // namespace

TensorImpl::TensorImpl(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (prof::audit_active()) {
        audited_bytes = data.size() * sizeof(float);
        prof::on_alloc(audited_bytes);
    }
}

TensorImpl::~TensorImpl() {
    if (audited_bytes) prof::on_free(audited_bytes);
}

Tensor Tensor::zeros(Shape s) {
    check_shape_valid(s);
    Dim n = shape_numel(s);
    return Tensor(std::make_shared<TensorImpl>(std::move(s), std::vector<float>(static_cast<size_t>(n), 0.0f)));
}

Tensor Tensor::full(Shape s, float v) {
    check_shape_valid(s);
    Dim n = shape_numel(s);
    return Tensor(std::make_shared<TensorImpl>(std::move(s), std::vector<float>(static_cast<size_t>(n), v)));
}

Tensor Tensor::from(Shape s, std::vector<float> d) {
    check_shape_valid(s);
    SNN_CHECK_SHAPE(shape_numel(s) == static_cast<Dim>(d.size()),
                    "data length ", d.size(), " does not match shape ", shape_str(s));
    return Tensor(std::make_shared<TensorImpl>(std::move(s), std::move(d)));
}

Tensor Tensor::scalar(float v) { return from({1}, {v}); }

float Tensor::item() const {
    SNN_CHECK_CONTRACT(numel() == 1, "item() on tensor of shape ", shape_str(shape()));
    return impl_->data[0];
}

float Tensor::at(std::initializer_list<Dim> idx) const {
    SNN_CHECK_SHAPE(idx.size() == impl_->shape.size(), "index rank mismatch");
    auto st = row_major_strides(impl_->shape);
    Dim off = 0;
    size_t i = 0;
    for (Dim v : idx) off += v * st[i++];
    return impl_->data[static_cast<size_t>(off)];
}

const std::vector<float>& Tensor::grad() const {
    SNN_CHECK_CONTRACT(has_grad(), "tensor has no gradient");
    return impl_->grad;
}

std::vector<float>& Tensor::grad_ref() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::backward() {
    SNN_CHECK_CONTRACT(impl_ && impl_->tape, "backward() on a tensor with no tape node");
    impl_->tape->backward_from(*this);
}

Tensor Tensor::clone() const {
    return Tensor::from(shape(), values());
}

Tensor Tensor::detached() const {
    auto t = Tensor::from(shape(), values());
    return t;
}

// ---- Tape ----

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Use::Use(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Use::~Use() { g_active_tape = prev_; }

long long Tape::append(std::function<void()> backprop, std::shared_ptr<TensorImpl> output) {
    nodes_.push_back(Node{std::move(backprop), std::move(output)});
    return static_cast<long long>(nodes_.size()) - 1;
}

void Tape::backward_from(const Tensor& loss) {
    SNN_CHECK_CONTRACT(loss.numel() == 1, "backward() requires a scalar loss, got shape ",
                       shape_str(loss.shape()));
    SNN_CHECK_CONTRACT(!nodes_.empty(), "backward() on an empty tape");
    // interior gradients are per-sweep scratch; only leaves accumulate
    for (auto& n : nodes_) {
        if (n.output && !n.output->grad.empty())
            std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0f);
    }
    auto impl = loss.impl();
    if (impl->grad.empty()) impl->grad.assign(1, 0.0f);
    impl->grad[0] = 1.0f;
    for (size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop();
    }
}

void Tape::reset() { nodes_.clear(); }

namespace grad {

void accum(TensorImpl& t, const float* g, Dim n) {
    if (!t.requires_grad && t.node < 0) return;
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0f);
    float* dst = t.grad.data();
    for (Dim i = 0; i < n; ++i) dst[i] += g[i];
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && (t->requires_grad() || t->impl()->node >= 0)) return true;
    }
    return false;
}

void record(Tensor& out, std::function<void()> backprop) {
    Tape* tape = Tape::active();
    out.impl()->tape = tape;
    out.impl()->node = tape->append(std::move(backprop), out.impl());
    out.set_requires_grad(true);
}

}  // namespace grad

// ---- broadcasting helpers ----

namespace {

// Left-pads shapes with 1s; each axis must match or be 1.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* opname) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        Dim da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        Dim db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        SNN_CHECK_SHAPE(da == db || da == 1 || db == 1, opname, ": shapes not broadcastable: ",
                        shape_str(a), " vs ", shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `shape` viewed in `out` coordinates (0 on broadcast axes).
std::vector<Dim> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<Dim> st(out.size(), 0);
    auto own = row_major_strides(shape);
    size_t pad = out.size() - shape.size();
    for (size_t i = 0; i < shape.size(); ++i) {
        st[pad + i] = (shape[i] == 1 && out[pad + i] != 1) ? 0 : own[i];
    }
    return st;
}

// Sum `g` (shaped like `out`) back down to `target` shape.
std::vector<float> reduce_to_shape(const float* g, const Shape& out, const Shape& target) {
    Dim tn = shape_numel(target);
    std::vector<float> acc(static_cast<size_t>(tn), 0.0f);
    auto tstr = broadcast_strides(target, out);
    size_t r = out.size();
    std::vector<Dim> idx(r, 0);
    Dim off = 0;
    Dim n = shape_numel(out);
    for (Dim lin = 0; lin < n; ++lin) {
        acc[static_cast<size_t>(off)] += g[lin];
        for (size_t ax = r; ax-- > 0;) {
            idx[ax]++;
            off += tstr[ax];
            if (idx[ax] < out[ax]) break;
            off -= tstr[ax] * out[ax];
            idx[ax] = 0;
        }
    }
    return acc;
}

template <typename FwdFn>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name, FwdFn fn) {
    Shape os = broadcast_shape(a.shape(), b.shape(), name);
    Tensor out = Tensor::zeros(os);
    Dim n = out.numel();
    prof::add_ops(static_cast<uint64_t>(n));
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    if (same_shape(a.shape(), b.shape())) {
        for (Dim i = 0; i < n; ++i) po[i] = fn(pa[i], pb[i]);
    } else {
        auto sa = broadcast_strides(a.shape(), os);
        auto sb = broadcast_strides(b.shape(), os);
        size_t r = os.size();
        std::vector<Dim> idx(r, 0);
        Dim offa = 0, offb = 0;
        for (Dim lin = 0; lin < n; ++lin) {
            po[lin] = fn(pa[offa], pb[offb]);
            for (size_t ax = r; ax-- > 0;) {
                idx[ax]++;
                offa += sa[ax];
                offb += sb[ax];
                if (idx[ax] < os[ax]) break;
                offa -= sa[ax] * os[ax];
                offb -= sb[ax] * os[ax];
                idx[ax] = 0;
            }
        }
    }
    return out;
}

}  // namespace

// ---- elementwise ops ----

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = elementwise_binary(a, b, "add", [](float x, float y) { return x + y; });
    if (grad::tracking({&a, &b})) {
        auto ia = a.impl(), ib = b.impl(), io = out.impl();
        grad::record(out, [ia, ib, io]() {
            if (io->grad.empty()) return;
            if (ia->requires_grad || ia->node >= 0) {
                auto ga = reduce_to_shape(io->grad.data(), io->shape, ia->shape);
                grad::accum(*ia, ga.data(), static_cast<Dim>(ga.size()));
            }
            if (ib->requires_grad || ib->node >= 0) {
                auto gb = reduce_to_shape(io->grad.data(), io->shape, ib->shape);
                grad::accum(*ib, gb.data(), static_cast<Dim>(gb.size()));
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = elementwise_binary(a, b, "sub", [](float x, float y) { return x - y; });
    if (grad::tracking({&a, &b})) {
        auto ia = a.impl(), ib = b.impl(), io = out.impl();
        grad::record(out, [ia, ib, io]() {
            if (io->grad.empty()) return;
            if (ia->requires_grad || ia->node >= 0) {
                auto ga = reduce_to_shape(io->grad.data(), io->shape, ia->shape);
                grad::accum(*ia, ga.data(), static_cast<Dim>(ga.size()));
            }
            if (ib->requires_grad || ib->node >= 0) {
                auto gb = reduce_to_shape(io->grad.data(), io->shape, ib->shape);
                for (auto& v : gb) v = -v;
                grad::accum(*ib, gb.data(), static_cast<Dim>(gb.size()));
            }
        });
    }
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor out = elementwise_binary(a, b, "hadamard", [](float x, float y) { return x * y; });
    if (grad::tracking({&a, &b})) {
        auto ia = a.impl(), ib = b.impl(), io = out.impl();
        grad::record(out, [ia, ib, io]() {
            if (io->grad.empty()) return;
            const Shape& os = io->shape;
            Dim n = shape_numel(os);
            // d(a*b)/da = b, broadcast-expanded then reduced back
            auto expand_mul = [&](const TensorImpl& other) {
                std::vector<float> g(static_cast<size_t>(n));
                auto so = broadcast_strides(other.shape, os);
                size_t r = os.size();
                std::vector<Dim> idx(r, 0);
                Dim off = 0;
                const float* pg = io->grad.data();
                const float* po = other.data.data();
                for (Dim lin = 0; lin < n; ++lin) {
                    g[static_cast<size_t>(lin)] = pg[lin] * po[off];
                    for (size_t ax = r; ax-- > 0;) {
                        idx[ax]++;
                        off += so[ax];
                        if (idx[ax] < os[ax]) break;
                        off -= so[ax] * os[ax];
                        idx[ax] = 0;
                    }
                }
                return g;
            };
            if (ia->requires_grad || ia->node >= 0) {
                auto full = expand_mul(*ib);
                auto ga = reduce_to_shape(full.data(), os, ia->shape);
                grad::accum(*ia, ga.data(), static_cast<Dim>(ga.size()));
            }
            if (ib->requires_grad || ib->node >= 0) {
                auto full = expand_mul(*ia);
                auto gb = reduce_to_shape(full.data(), os, ib->shape);
                grad::accum(*ib, gb.data(), static_cast<Dim>(gb.size()));
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, float c) {
    Tensor out = Tensor::zeros(a.shape());
    Dim n = a.numel();
    prof::add_ops(static_cast<uint64_t>(n));
    const float* pa = a.data();
    float* po = out.data();
    for (Dim i = 0; i < n; ++i) po[i] = pa[i] * c;
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io, c]() {
            if (io->grad.empty()) return;
            std::vector<float> g(io->grad.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = io->grad[i] * c;
            grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

Tensor add_const(const Tensor& a, float c) {
    Tensor out = Tensor::zeros(a.shape());
    Dim n = a.numel();
    prof::add_ops(static_cast<uint64_t>(n));
    const float* pa = a.data();
    float* po = out.data();
    for (Dim i = 0; i < n; ++i) po[i] = pa[i] + c;
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io]() {
            if (io->grad.empty()) return;
            grad::accum(*ia, io->grad.data(), static_cast<Dim>(io->grad.size()));
        });
    }
    return out;
}

Tensor rsub_const(float c, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    Dim n = a.numel();
    prof::add_ops(static_cast<uint64_t>(n));
    const float* pa = a.data();
    float* po = out.data();
    for (Dim i = 0; i < n; ++i) po[i] = c - pa[i];
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io]() {
            if (io->grad.empty()) return;
            std::vector<float> g(io->grad.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = -io->grad[i];
            grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

// ---- matmul ----

namespace {

// C[M,P] += A[M,K] * B[K,P]
void gemm_acc(const float* A, const float* B, float* C, Dim M, Dim K, Dim P) {
    for (Dim i = 0; i < M; ++i) {
        const float* arow = A + i * K;
        float* crow = C + i * P;
        for (Dim k = 0; k < K; ++k) {
            float av = arow[k];
            if (av == 0.0f) continue;
            const float* brow = B + k * P;
            for (Dim j = 0; j < P; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,P] += A[M,K] * B[P,K]^T
void gemm_bt_acc(const float* A, const float* B, float* C, Dim M, Dim K, Dim P) {
    for (Dim i = 0; i < M; ++i) {
        const float* arow = A + i * K;
        float* crow = C + i * P;
        for (Dim j = 0; j < P; ++j) {
            const float* brow = B + j * K;
            float acc = 0.0f;
            for (Dim k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

// C[K,P] += A[M,K]^T * B[M,P]
void gemm_at_acc(const float* A, const float* B, float* C, Dim M, Dim K, Dim P) {
    for (Dim i = 0; i < M; ++i) {
        const float* arow = A + i * K;
        const float* brow = B + i * P;
        for (Dim k = 0; k < K; ++k) {
            float av = arow[k];
            if (av == 0.0f) continue;
            float* crow = C + k * P;
            for (Dim j = 0; j < P; ++j) crow[j] += av * brow[j];
        }
    }
}

struct BatchedView {
    Shape batch;          // broadcast leading dims
    std::vector<Dim> sa;  // per-axis strides in units of whole matrices
    std::vector<Dim> sb;
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    SNN_CHECK_SHAPE(a.rank() >= 2 && b.rank() >= 2, "matmul: need rank >= 2, got ",
                    shape_str(a.shape()), " and ", shape_str(b.shape()));
    Dim M = a.dim(a.rank() - 2), K = a.dim(a.rank() - 1);
    Dim K2 = b.dim(b.rank() - 2), P = b.dim(b.rank() - 1);
    SNN_CHECK_SHAPE(K == K2, "matmul: inner dimensions differ: ", shape_str(a.shape()), " vs ",
                    shape_str(b.shape()));

    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shape(abatch, bbatch, "matmul");
    Shape os = batch;
    os.push_back(M);
    os.push_back(P);
    Tensor out = Tensor::zeros(os);

    Dim nb = shape_numel(batch);
    prof::add_ops(static_cast<uint64_t>(nb) * static_cast<uint64_t>(M) * static_cast<uint64_t>(K) *
                  static_cast<uint64_t>(P));

    auto sa = broadcast_strides(abatch, batch);
    auto sb = broadcast_strides(bbatch, batch);
    const Dim amat = M * K, bmat = K * P, omat = M * P;
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();

    std::vector<Dim> idx(batch.size(), 0);
    Dim offa = 0, offb = 0;
    for (Dim bi = 0; bi < nb; ++bi) {
        gemm_acc(pa + offa * amat, pb + offb * bmat, po + bi * omat, M, K, P);
        for (size_t ax = batch.size(); ax-- > 0;) {
            idx[ax]++;
            offa += sa[ax];
            offb += sb[ax];
            if (idx[ax] < batch[ax]) break;
            offa -= sa[ax] * batch[ax];
            offb -= sb[ax] * batch[ax];
            idx[ax] = 0;
        }
    }

    if (grad::tracking({&a, &b})) {
        auto ia = a.impl(), ib = b.impl(), io = out.impl();
        Shape batch_copy = batch;
        auto sa_c = sa, sb_c = sb;
        grad::record(out, [ia, ib, io, M, K, P, batch_copy, sa_c, sb_c]() {
            if (io->grad.empty()) return;
            Dim nb = shape_numel(batch_copy);
            const Dim amat = M * K, bmat = K * P, omat = M * P;
            bool need_a = ia->requires_grad || ia->node >= 0;
            bool need_b = ib->requires_grad || ib->node >= 0;
            std::vector<float> ga, gb;
            if (need_a) ga.assign(ia->data.size(), 0.0f);
            if (need_b) gb.assign(ib->data.size(), 0.0f);
            const float* pg = io->grad.data();
            std::vector<Dim> idx(batch_copy.size(), 0);
            Dim offa = 0, offb = 0;
            for (Dim bi = 0; bi < nb; ++bi) {
                // dA = dC * B^T ; dB = A^T * dC (accumulated over broadcast)
                if (need_a)
                    gemm_bt_acc(pg + bi * omat, ib->data.data() + offb * bmat,
                                ga.data() + offa * amat, M, P, K);
                if (need_b)
                    gemm_at_acc(ia->data.data() + offa * amat, pg + bi * omat,
                                gb.data() + offb * bmat, M, K, P);
                for (size_t ax = batch_copy.size(); ax-- > 0;) {
                    idx[ax]++;
                    offa += sa_c[ax];
                    offb += sb_c[ax];
                    if (idx[ax] < batch_copy[ax]) break;
                    offa -= sa_c[ax] * batch_copy[ax];
                    offb -= sb_c[ax] * batch_copy[ax];
                    idx[ax] = 0;
                }
            }
            if (need_a) grad::accum(*ia, ga.data(), static_cast<Dim>(ga.size()));
            if (need_b) grad::accum(*ib, gb.data(), static_cast<Dim>(gb.size()));
        });
    }
    return out;
}

// ---- reductions ----

Tensor reduce(const Tensor& a, int axis, Reduce mode) {
    SNN_CHECK_SHAPE(axis >= 0 && axis < a.rank(), "reduce: axis ", axis,
                    " out of range for shape ", shape_str(a.shape()));
    Shape os = a.shape();
    Dim len = os[static_cast<size_t>(axis)];
    os[static_cast<size_t>(axis)] = 1;
    Tensor out = Tensor::zeros(os);
    prof::add_ops(static_cast<uint64_t>(a.numel()));

    // split input as [outer, len, inner]
    Dim inner = 1, outer = 1;
    for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);

    const float* pa = a.data();
    float* po = out.data();
    float inv = mode == Reduce::Mean ? 1.0f / static_cast<float>(len) : 1.0f;
    for (Dim o = 0; o < outer; ++o) {
        for (Dim l = 0; l < len; ++l) {
            const float* src = pa + (o * len + l) * inner;
            float* dst = po + o * inner;
            for (Dim i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    if (mode == Reduce::Mean) {
        for (Dim i = 0; i < out.numel(); ++i) po[i] *= inv;
    }

    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io, outer, len, inner, inv]() {
            if (io->grad.empty()) return;
            std::vector<float> g(ia->data.size());
            const float* pg = io->grad.data();
            for (Dim o = 0; o < outer; ++o) {
                for (Dim l = 0; l < len; ++l) {
                    float* dst = g.data() + (o * len + l) * inner;
                    const float* src = pg + o * inner;
                    for (Dim i = 0; i < inner; ++i) dst[i] = src[i] * inv;
                }
            }
            grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

Tensor reduce_all_sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1});
    prof::add_ops(static_cast<uint64_t>(a.numel()));
    // pairwise-ish accumulation in double keeps large sums stable
    double acc = 0.0;
    const float* pa = a.data();
    for (Dim i = 0; i < a.numel(); ++i) acc += pa[i];
    out.data()[0] = static_cast<float>(acc);
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io]() {
            if (io->grad.empty()) return;
            std::vector<float> g(ia->data.size(), io->grad[0]);
            grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

// ---- data movement ----

namespace {
bool is_permutation(const std::vector<int>& order, int rank) {
    if (static_cast<int>(order.size()) != rank) return false;
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int v : order) {
        if (v < 0 || v >= rank || seen[static_cast<size_t>(v)]) return false;
        seen[static_cast<size_t>(v)] = true;
    }
    return true;
}

std::vector<float> permute_values(const float* src, const Shape& in_shape,
                                  const std::vector<int>& order) {
    size_t r = in_shape.size();
    Shape os(r);
    for (size_t i = 0; i < r; ++i) os[i] = in_shape[static_cast<size_t>(order[i])];
    auto in_str = row_major_strides(in_shape);
    std::vector<Dim> src_str(r);
    for (size_t i = 0; i < r; ++i) src_str[i] = in_str[static_cast<size_t>(order[i])];
    Dim n = shape_numel(in_shape);
    std::vector<float> out(static_cast<size_t>(n));
    std::vector<Dim> idx(r, 0);
    Dim off = 0;
    for (Dim lin = 0; lin < n; ++lin) {
        out[static_cast<size_t>(lin)] = src[off];
        for (size_t ax = r; ax-- > 0;) {
            idx[ax]++;
            off += src_str[ax];
            if (idx[ax] < os[ax]) break;
            off -= src_str[ax] * os[ax];
            idx[ax] = 0;
        }
    }
    return out;
}
}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& order) {
    SNN_CHECK_SHAPE(is_permutation(order, a.rank()), "permute: invalid order for shape ",
                    shape_str(a.shape()));
    Shape os(order.size());
    for (size_t i = 0; i < order.size(); ++i) os[i] = a.dim(order[i]);
    Tensor out = Tensor::from(os, permute_values(a.data(), a.shape(), order));
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        std::vector<int> inverse(order.size());
        for (size_t i = 0; i < order.size(); ++i) inverse[static_cast<size_t>(order[i])] = static_cast<int>(i);
        grad::record(out, [ia, io, inverse]() {
            if (io->grad.empty()) return;
            auto g = permute_values(io->grad.data(), io->shape, inverse);
            grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
        });
    }
    return out;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    check_shape_valid(new_shape);
    SNN_CHECK_SHAPE(shape_numel(new_shape) == a.numel(), "reshape: ", shape_str(a.shape()),
                    " -> ", shape_str(new_shape), " changes element count");
    Tensor out = Tensor::from(std::move(new_shape), a.values());
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io]() {
            if (io->grad.empty()) return;
            grad::accum(*ia, io->grad.data(), static_cast<Dim>(io->grad.size()));
        });
    }
    return out;
}

Tensor transpose_last2(const Tensor& a) {
    std::vector<int> order(static_cast<size_t>(a.rank()));
    for (int i = 0; i < a.rank(); ++i) order[static_cast<size_t>(i)] = i;
    std::swap(order[order.size() - 1], order[order.size() - 2]);
    return permute(a, order);
}

Tensor select0(const Tensor& a, Dim index) {
    SNN_CHECK_SHAPE(a.rank() >= 1 && index >= 0 && index < a.dim(0), "select0: index ", index,
                    " out of range for shape ", shape_str(a.shape()));
    Shape os(a.shape().begin() + 1, a.shape().end());
    if (os.empty()) os = {1};
    Dim chunk = shape_numel(os);
    std::vector<float> vals(a.data() + index * chunk, a.data() + (index + 1) * chunk);
    Tensor out = Tensor::from(os, std::move(vals));
    if (grad::tracking({&a})) {
        auto ia = a.impl(), io = out.impl();
        grad::record(out, [ia, io, index, chunk]() {
            if (io->grad.empty()) return;
            if (!(ia->requires_grad || ia->node >= 0)) return;
            if (ia->grad.empty()) ia->grad.assign(ia->data.size(), 0.0f);
            float* dst = ia->grad.data() + index * chunk;
            for (Dim i = 0; i < chunk; ++i) dst[i] += io->grad[static_cast<size_t>(i)];
        });
    }
    return out;
}

Tensor stack0(const std::vector<Tensor>& parts) {
    SNN_CHECK_CONTRACT(!parts.empty(), "stack0: empty input sequence");
    const Shape& ps = parts[0].shape();
    for (const auto& p : parts)
        SNN_CHECK_SHAPE(same_shape(p.shape(), ps), "stack0: mismatched part shapes ",
                        shape_str(p.shape()), " vs ", shape_str(ps));
    Shape os;
    os.push_back(static_cast<Dim>(parts.size()));
    os.insert(os.end(), ps.begin(), ps.end());
    Tensor out = Tensor::zeros(os);
    Dim chunk = shape_numel(ps);
    for (size_t i = 0; i < parts.size(); ++i) {
        std::memcpy(out.data() + static_cast<Dim>(i) * chunk, parts[i].data(),
                    static_cast<size_t>(chunk) * sizeof(float));
    }
    bool track = false;
    for (const auto& p : parts) {
        const Tensor* tp = &p;
        if (grad::tracking({tp})) track = true;
    }
    if (track) {
        std::vector<std::shared_ptr<TensorImpl>> impls;
        impls.reserve(parts.size());
        for (const auto& p : parts) impls.push_back(p.impl());
        auto io = out.impl();
        grad::record(out, [impls, io, chunk]() {
            if (io->grad.empty()) return;
            for (size_t i = 0; i < impls.size(); ++i) {
                grad::accum(*impls[i], io->grad.data() + static_cast<Dim>(i) * chunk, chunk);
            }
        });
    }
    return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    SNN_CHECK_SHAPE(a.rank() == b.rank(), "concat_last: rank mismatch ", shape_str(a.shape()),
                    " vs ", shape_str(b.shape()));
    for (int i = 0; i + 1 < a.rank(); ++i)
        SNN_CHECK_SHAPE(a.dim(i) == b.dim(i), "concat_last: leading dims differ: ",
                        shape_str(a.shape()), " vs ", shape_str(b.shape()));
    Dim la = a.dim(a.rank() - 1), lb = b.dim(b.rank() - 1);
    Shape os = a.shape();
    os.back() = la + lb;
    Tensor out = Tensor::zeros(os);
    Dim rows = a.numel() / la;
    for (Dim r = 0; r < rows; ++r) {
        std::memcpy(out.data() + r * (la + lb), a.data() + r * la,
                    static_cast<size_t>(la) * sizeof(float));
        std::memcpy(out.data() + r * (la + lb) + la, b.data() + r * lb,
                    static_cast<size_t>(lb) * sizeof(float));
    }
    if (grad::tracking({&a, &b})) {
        auto ia = a.impl(), ib = b.impl(), io = out.impl();
        grad::record(out, [ia, ib, io, rows, la, lb]() {
            if (io->grad.empty()) return;
            if (ia->requires_grad || ia->node >= 0) {
                std::vector<float> g(ia->data.size());
                for (Dim r = 0; r < rows; ++r)
                    std::memcpy(g.data() + r * la, io->grad.data() + r * (la + lb),
                                static_cast<size_t>(la) * sizeof(float));
                grad::accum(*ia, g.data(), static_cast<Dim>(g.size()));
            }
            if (ib->requires_grad || ib->node >= 0) {
                std::vector<float> g(ib->data.size());
                for (Dim r = 0; r < rows; ++r)
                    std::memcpy(g.data() + r * lb, io->grad.data() + r * (la + lb) + la,
                                static_cast<size_t>(lb) * sizeof(float));
                grad::accum(*ib, g.data(), static_cast<Dim>(g.size()));
            }
        });
    }
    return out;
}

}  // namespace snnergy
