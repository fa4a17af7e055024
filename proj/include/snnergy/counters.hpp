#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

namespace snnergy::prof {

// Operation categories. Ops are counted by the primitive that performs them
// (matmul, conv, elementwise); the surrounding layer sets the category via a
// CatScope so nothing is counted twice.
enum class Cat : int {
    Other = 0,
    Proj,        // Q/K/V/post projections of attention mechanisms
    AttnMatmul,  // N x N attention products (SSA only)
    Mask,        // channel sums, spike masks, Hadamard masking
    Fuse,        // pooling and broadcast fusion inside CMQKA
    Mlp,         // spiking MLP blocks
    Conv,        // SPDS / stem convolutions
    Head,        // GAP + classifier
    Norm,        // batch norm arithmetic
    kCount
};

constexpr int kNumCats = static_cast<int>(Cat::kCount);
const char* cat_name(Cat c);

struct OpCounters {
    std::array<uint64_t, kNumCats> ops{};

    uint64_t total() const {
        uint64_t s = 0;
        for (auto v : ops) s += v;
        return s;
    }
    uint64_t operator[](Cat c) const { return ops[static_cast<int>(c)]; }
    // Everything the attention mechanisms themselves do (excludes MLP refine,
    // stem convs, head).
    uint64_t attention_scope() const {
        return (*this)[Cat::Proj] + (*this)[Cat::AttnMatmul] + (*this)[Cat::Mask] + (*this)[Cat::Fuse];
    }
    void reset() { ops.fill(0); }
};

// Single-buffer maxima keyed by (category, scope label). Live/peak track the
// audited bytes currently allocated.
struct AllocAudit {
    uint64_t live_bytes = 0;
    uint64_t peak_bytes = 0;
    std::array<uint64_t, kNumCats> max_single_by_cat{};
    std::map<std::string, std::array<uint64_t, kNumCats>> max_single_by_label;

    uint64_t max_single() const {
        uint64_t m = 0;
        for (auto v : max_single_by_cat) m = std::max(m, v);
        return m;
    }
    uint64_t max_single(Cat c) const { return max_single_by_cat[static_cast<int>(c)]; }
};

OpCounters* active_counters();
AllocAudit* active_audit();
Cat current_cat();
const std::string& current_label();

// RAII activation/scoping. All state is thread-local.
class CounterScope {
public:
    explicit CounterScope(OpCounters& c);
    ~CounterScope();
private:
    OpCounters* prev_;
};

class AuditScope {
public:
    explicit AuditScope(AllocAudit& a);
    ~AuditScope();
private:
    AllocAudit* prev_;
};

class CatScope {
public:
    explicit CatScope(Cat c);
    ~CatScope();
private:
    Cat prev_;
};

class LabelScope {
public:
    explicit LabelScope(std::string label);
    ~LabelScope();
private:
    std::string prev_;
};

void add_ops(uint64_t n);
void on_alloc(uint64_t bytes);
void on_free(uint64_t bytes);
bool audit_active();

}  // namespace snnergy::prof
