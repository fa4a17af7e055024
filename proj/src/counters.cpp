#include "snnergy/counters.hpp"

namespace snnergy::prof {

namespace {
thread_local OpCounters* g_counters = nullptr;
thread_local AllocAudit* g_audit = nullptr;
thread_local Cat g_cat = Cat::Other;
thread_local std::string g_label;
}  // namespace

const char* cat_name(Cat c) {
    switch (c) {
        case Cat::Other: return "other";
        case Cat::Proj: return "proj";
        case Cat::AttnMatmul: return "attn_matmul";
        case Cat::Mask: return "mask";
        case Cat::Fuse: return "fuse";
        case Cat::Mlp: return "mlp";
        case Cat::Conv: return "conv";
        case Cat::Head: return "head";
        case Cat::Norm: return "norm";
        default: return "?";
    }
}

OpCounters* active_counters() { return g_counters; }
AllocAudit* active_audit() { return g_audit; }
Cat current_cat() { return g_cat; }
const std::string& current_label() { return g_label; }

CounterScope::CounterScope(OpCounters& c) : prev_(g_counters) { g_counters = &c; }
CounterScope::~CounterScope() { g_counters = prev_; }

AuditScope::AuditScope(AllocAudit& a) : prev_(g_audit) { g_audit = &a; }
AuditScope::~AuditScope() { g_audit = prev_; }

CatScope::CatScope(Cat c) : prev_(g_cat) { g_cat = c; }
CatScope::~CatScope() { g_cat = prev_; }

LabelScope::LabelScope(std::string label) : prev_(g_label) { g_label = std::move(label); }
LabelScope::~LabelScope() { g_label = prev_; }

void add_ops(uint64_t n) {
    if (g_counters) g_counters->ops[static_cast<int>(g_cat)] += n;
}

bool audit_active() { return g_audit != nullptr; }

void on_alloc(uint64_t bytes) {
    if (!g_audit) return;
    g_audit->live_bytes += bytes;
    g_audit->peak_bytes = std::max(g_audit->peak_bytes, g_audit->live_bytes);
    auto& cat_max = g_audit->max_single_by_cat[static_cast<int>(g_cat)];
    cat_max = std::max(cat_max, bytes);
    auto& label_max = g_audit->max_single_by_label[g_label][static_cast<int>(g_cat)];
    label_max = std::max(label_max, bytes);
}

void on_free(uint64_t bytes) {
    if (!g_audit) return;
    g_audit->live_bytes -= std::min(g_audit->live_bytes, bytes);
}

}  // namespace snnergy::prof
