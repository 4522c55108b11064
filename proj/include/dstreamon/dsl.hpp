#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dstreamon/expr.hpp"
#include "dstreamon/program.hpp"

namespace dstreamon::dsl {

using features::Expr;
using features::SourceLoc;

// ---------------------------------------------------------------------------
// Parse-level application description. Names are still symbolic; resolution
// happens in validate/compile.

struct KeyDecl {
    std::string name;                 // empty = primary key
    std::vector<std::string> fields;  // dotted selector names
    bool bidirectional = false;
    SourceLoc loc;
};

struct EventDecl {
    std::string name;
    Expr match;
    std::vector<KeyDecl> keys;  // first is the primary key
    SourceLoc loc;
};

struct RemoteEventDecl {
    std::string name;
    std::string topic_pattern;
    std::string key_field;
    std::vector<std::pair<std::string, std::string>> inputs;
    SourceLoc loc;
};

struct MetricDecl {
    std::string name;
    std::string kind;        // count_min | bloom | dleft
    std::string key_source;  // event[.secondary] reference or selector list
    std::string inc;         // empty = 1; integer constant or field selector
    std::optional<WindowSpec> window;
    bool has_epsilon = false, has_delta = false;
    double epsilon = 0, delta = 0;
    bool has_bloom_m = false, has_bloom_k = false;
    uint64_t bloom_m = 0;
    uint32_t bloom_k = 0;
    bool has_dleft_d = false, has_dleft_b = false, has_dleft_c = false;
    uint32_t dleft_d = 0, dleft_b = 0, dleft_c = 0;
    SourceLoc loc;
};

struct FeatureDecl {
    std::string name;
    Expr expr;
    SourceLoc loc;
};

struct ActionDecl {
    std::string kind;
    std::string topic;
    std::string export_ref;
    bool has_features = false;
    std::string features_csv;  // payload template: feature names
    std::string metrics_csv;   // reset_metrics
    bool has_reg_index = false;
    uint32_t reg_index = 0;
    Expr value;
    bool has_value = false;
    uint32_t delay_ms = 0;
    bool has_delay = false;
    uint32_t tag = 0;
    bool has_tag = false;
    SourceLoc loc;
};

struct RuleDecl {
    Expr condition;
    std::vector<ActionDecl> actions;
    std::string next_state;  // empty = stay in the current state
    SourceLoc loc;
};

struct StateDecl {
    std::string name;
    std::vector<RuleDecl> rules;
    SourceLoc loc;
};

struct ExportDecl {
    std::string name;
    std::string topic;
    std::string features_csv;
    SourceLoc loc;
};

struct AppSpec {
    std::string name;
    std::string initial_state;
    uint32_t register_count = 8;
    uint64_t hash_seed = 0x647374726d6f6eULL;
    std::vector<EventDecl> events;
    std::vector<RemoteEventDecl> remote_events;
    std::vector<MetricDecl> metrics;
    std::vector<FeatureDecl> features;
    std::vector<StateDecl> states;
    std::vector<ExportDecl> exports;
    SourceLoc loc;
};

// ---------------------------------------------------------------------------

struct SyntaxError : std::runtime_error {
    SyntaxError(SourceLoc l, std::string msg, std::string expected_set = "")
        : std::runtime_error(std::move(msg)), loc(l), expected(std::move(expected_set)) {}
    SourceLoc loc;
    std::string expected;
};

enum class Severity : uint8_t { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    SourceLoc loc;
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<Diagnostic> diagnostics;

    size_t error_count() const {
        size_t n = 0;
        for (const auto& d : diagnostics)
            if (d.severity == Severity::Error) ++n;
        return n;
    }
    size_t warning_count() const { return diagnostics.size() - error_count(); }
    bool ok() const { return error_count() == 0; }
};

// Parses a complete DSL document (docs/dsl.md). Throws SyntaxError with
// line/column on malformed input; never aborts.
AppSpec parse(std::string_view text);

ValidationReport validate(const AppSpec& spec);

// Requires validate(spec).ok(); throws CompileError on internal inconsistency.
ProbeProgram compile(const AppSpec& spec);

// Expression entry point shared by the document parser and tests.
// `start_loc` anchors positions so diagnostics point into the document.
Expr parse_expression(std::string_view text, SourceLoc start_loc = {1, 1});

}  // namespace dstreamon::dsl
