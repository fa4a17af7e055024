#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "snnergy/common.hpp"

namespace snnergy {

using Dim = long long;
using Shape = std::vector<Dim>;

Dim shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

class Tape;

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    Tape* tape = nullptr;  // tape holding the producing node, if any
    long long node = -1;
    uint64_t audited_bytes = 0;

    TensorImpl(Shape s, std::vector<float> d);
    ~TensorImpl();
    TensorImpl(const TensorImpl&) = delete;
    TensorImpl& operator=(const TensorImpl&) = delete;
};

// Dense row-major float32 tensor with value semantics (copies share storage).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, float v);
    static Tensor from(Shape s, std::vector<float> d);
    static Tensor scalar(float v);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    Dim dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    Dim numel() const { return static_cast<Dim>(impl_->data.size()); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& values() { return impl_->data; }
    const std::vector<float>& values() const { return impl_->data; }
    float item() const;
    float at(std::initializer_list<Dim> idx) const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        impl_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    const std::vector<float>& grad() const;
    std::vector<float>& grad_ref();
    void zero_grad();

    // Reverse-mode sweep from a scalar loss through the tape that produced it.
    void backward();

    Tensor clone() const;    // deep copy, detached from the tape
    Tensor detached() const; // shares storage, drops grad tracking

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Append-only gradient tape. Nodes run in reverse append order on backward.
// Cleared only by explicit reset().
class Tape {
public:
    long long append(std::function<void()> backprop, std::shared_ptr<TensorImpl> output);
    void backward_from(const Tensor& loss);
    void reset();
    size_t size() const { return nodes_.size(); }

    static Tape* active();

    // RAII activation; ops record while a tape is active.
    class Use {
    public:
        explicit Use(Tape& t);
        ~Use();
        Use(const Use&) = delete;
        Use& operator=(const Use&) = delete;
    private:
        Tape* prev_;
    };

private:
    struct Node {
        std::function<void()> backprop;
        std::shared_ptr<TensorImpl> output;
    };
    std::vector<Node> nodes_;
};

namespace grad {
// Accumulate a gradient contribution into t's grad buffer (allocated lazily).
void accum(TensorImpl& t, const float* g, Dim n);
// True when recording should happen for an op with these inputs.
bool tracking(std::initializer_list<const Tensor*> inputs);
void record(Tensor& out, std::function<void()> backprop);
}  // namespace grad

// ---- primitive ops (all autodiff-aware) ----

Tensor add(const Tensor& a, const Tensor& b);       // broadcasting
Tensor sub(const Tensor& a, const Tensor& b);       // broadcasting
Tensor hadamard(const Tensor& a, const Tensor& b);  // broadcasting
Tensor scale(const Tensor& a, float c);
Tensor add_const(const Tensor& a, float c);
Tensor rsub_const(float c, const Tensor& a);  // c - a

// Batched matmul [..., M, K] x [..., K, P] -> [..., M, P]; leading dims
// broadcast with singleton promotion.
Tensor matmul(const Tensor& a, const Tensor& b);

enum class Reduce { Sum, Mean };
Tensor reduce(const Tensor& a, int axis, Reduce mode);  // keeps the axis as size 1
Tensor reduce_all_sum(const Tensor& a);                 // scalar

Tensor permute(const Tensor& a, const std::vector<int>& order);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose_last2(const Tensor& a);

Tensor select0(const Tensor& a, Dim index);          // drop leading axis
Tensor stack0(const std::vector<Tensor>& parts);     // inverse of select0
Tensor concat_last(const Tensor& a, const Tensor& b);  // join along the last axis

}  // namespace snnergy
