#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dstreamon/fields.hpp"

namespace dstreamon::features {

struct SourceLoc {
    uint32_t line = 0;
    uint32_t col = 0;
};

enum class ExprKind : uint8_t {
    Number,
    BoolConst,
    MetricQuery,     // index = metric, key_mode/name select the lookup key
    Register,        // index = register slot
    PacketField,     // field
    FeatureRef,      // index = feature
    Input,           // name = remote-event input
    Unary,
    Binary,
    Compare,
    Logic,
    TriggerTimeout,  // index = tag
    TriggerEvent,    // index = event (packet events first, then remote events)
    TriggerEvicted,
    // Parse-level nodes; compile resolves them away.
    Ident,           // name
    Dotted,          // name = "a.b"
    Call,            // name + children as args
};

enum class UnOp : uint8_t { Neg, Abs, Log, Sqrt, Not };
enum class BinOp : uint8_t { Add, Sub, Mul, Div, Min, Max, BitAnd, BitOr };
enum class CmpOp : uint8_t { Lt, Le, Eq, Ne, Ge, Gt };
enum class LogOp : uint8_t { And, Or };

// How a MetricQuery picks its key: the current entity's key bytes, or a
// named secondary key derived from the packet via the triggering event.
enum class KeyMode : uint8_t { Current, Named };

struct Expr {
    ExprKind kind = ExprKind::Number;
    double num = 0.0;
    bool bval = false;
    uint32_t index = 0;
    FieldId field = FieldId::WireLen;
    uint8_t op = 0;
    KeyMode key_mode = KeyMode::Current;
    std::string name;
    std::vector<Expr> children;
    SourceLoc loc;  // diagnostics only; not part of structural identity

    UnOp un_op() const { return static_cast<UnOp>(op); }
    BinOp bin_op() const { return static_cast<BinOp>(op); }
    CmpOp cmp_op() const { return static_cast<CmpOp>(op); }
    LogOp log_op() const { return static_cast<LogOp>(op); }
};

// Structural equality, ignoring source locations.
bool expr_equal(const Expr& a, const Expr& b);

inline bool operator==(const Expr& a, const Expr& b) { return expr_equal(a, b); }

int expr_depth(const Expr& e);

constexpr int kMaxExprDepth = 64;

}  // namespace dstreamon::features
