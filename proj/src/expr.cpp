#include "dstreamon/expr.hpp"

#include <algorithm>
#include <cmath>

namespace dstreamon::features {

bool expr_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case ExprKind::Number:
            // bitwise equality keeps round-trips exact (incl. -0.0 vs 0.0)
            if (!(a.num == b.num) || std::signbit(a.num) != std::signbit(b.num)) return false;
            break;
        case ExprKind::BoolConst:
            if (a.bval != b.bval) return false;
            break;
        case ExprKind::MetricQuery:
            if (a.index != b.index || a.key_mode != b.key_mode || a.name != b.name) return false;
            break;
        case ExprKind::Register:
        case ExprKind::FeatureRef:
        case ExprKind::TriggerTimeout:
        case ExprKind::TriggerEvent:
            if (a.index != b.index) return false;
            break;
        case ExprKind::PacketField:
            if (a.field != b.field) return false;
            break;
        case ExprKind::Input:
        case ExprKind::Ident:
        case ExprKind::Dotted:
            if (a.name != b.name) return false;
            break;
        case ExprKind::Call:
            if (a.name != b.name) return false;
            break;
        case ExprKind::Unary:
        case ExprKind::Binary:
        case ExprKind::Compare:
        case ExprKind::Logic:
            if (a.op != b.op) return false;
            break;
        case ExprKind::TriggerEvicted:
            break;
    }
    if (a.children.size() != b.children.size()) return false;
    for (size_t i = 0; i < a.children.size(); ++i)
        if (!expr_equal(a.children[i], b.children[i])) return false;
    return true;
}

int expr_depth(const Expr& e) {
    int d = 0;
    for (const auto& c : e.children) d = std::max(d, expr_depth(c));
    return d + 1;
}

}  // namespace dstreamon::features
