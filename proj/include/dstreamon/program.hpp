#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dstreamon/expr.hpp"
#include "dstreamon/fields.hpp"

namespace dstreamon::dsl {

enum class MetricKind : uint8_t { CountMin, Bloom, DLeft };

enum class WindowMode : uint8_t { PeriodicReset, Sliding };

struct WindowSpec {
    uint32_t length_ms = 0;
    WindowMode mode = WindowMode::PeriodicReset;
    uint32_t panes = 8;  // sliding only

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct KeySelector {
    std::vector<FieldId> fields;
    bool bidirectional = false;

    friend bool operator==(const KeySelector&, const KeySelector&) = default;
};

struct CompiledKey {
    std::string name;  // empty for the primary key
    KeySelector selector;

    friend bool operator==(const CompiledKey&, const CompiledKey&) = default;
};

struct CompiledEvent {
    std::string name;
    features::Expr match;
    KeySelector primary_key;
    std::vector<CompiledKey> secondary_keys;

    friend bool operator==(const CompiledEvent&, const CompiledEvent&) = default;
};

struct CompiledRemoteEvent {
    std::string name;
    std::string topic_pattern;
    std::string key_field;  // payload field holding the hex-encoded entity key
    std::vector<std::pair<std::string, std::string>> inputs;  // input name -> payload field

    friend bool operator==(const CompiledRemoteEvent&, const CompiledRemoteEvent&) = default;
};

// What a metric is keyed by, and therefore when it updates.
struct KeySource {
    enum class Kind : uint8_t { EventPrimary, EventSecondary, Selectors };
    Kind kind = Kind::EventPrimary;
    uint32_t event_index = 0;  // EventPrimary/EventSecondary (remote events use offset space)
    uint32_t key_index = 0;    // EventSecondary: index into the event's secondary_keys
    KeySelector selectors;     // Selectors

    friend bool operator==(const KeySource&, const KeySource&) = default;
};

struct IncSource {
    enum class Kind : uint8_t { Const, Field };
    Kind kind = Kind::Const;
    uint64_t value = 1;
    FieldId field = FieldId::WireLen;

    friend bool operator==(const IncSource&, const IncSource&) = default;
};

struct CompiledMetric {
    std::string name;
    MetricKind kind = MetricKind::CountMin;
    KeySource key_source;
    IncSource inc;
    std::optional<WindowSpec> window;
    // count_min
    double epsilon = 0.01;
    double delta = 0.01;
    // bloom
    uint64_t bloom_bits = 0;
    uint32_t bloom_hashes = 0;
    // dleft
    uint32_t dleft_subtables = 0;
    uint32_t dleft_buckets = 0;
    uint32_t dleft_cells = 0;

    friend bool operator==(const CompiledMetric&, const CompiledMetric&) = default;
};

struct CompiledFeature {
    std::string name;
    features::Expr expr;

    friend bool operator==(const CompiledFeature&, const CompiledFeature&) = default;
};

enum class ActionKind : uint8_t {
    PublishAlert,
    ExportFeatures,
    SetRegister,
    ScheduleTimeout,
    CancelTimeouts,
    ResetMetrics,
    DropEntity,
};

struct CompiledAction {
    ActionKind kind = ActionKind::DropEntity;
    std::string topic;                   // publish_alert / export_features
    std::vector<uint32_t> feature_set;   // payload template (feature indices)
    uint32_t reg_index = 0;              // set_register
    features::Expr value;                // set_register
    uint32_t delay_ms = 0;               // schedule_timeout
    uint32_t tag = 0;                    // schedule_timeout / cancel_timeouts
    std::vector<uint32_t> metrics;       // reset_metrics

    friend bool operator==(const CompiledAction&, const CompiledAction&) = default;
};

struct CompiledRule {
    features::Expr condition;
    std::vector<CompiledAction> actions;
    uint32_t next_state = 0;

    friend bool operator==(const CompiledRule&, const CompiledRule&) = default;
};

struct CompiledState {
    std::string name;
    std::vector<CompiledRule> rules;

    friend bool operator==(const CompiledState&, const CompiledState&) = default;
};

struct CompiledExport {
    std::string name;
    std::string topic;
    std::vector<uint32_t> feature_set;

    friend bool operator==(const CompiledExport&, const CompiledExport&) = default;
};

// Name-resolved, index-based image of an application, directly executable.
struct ProbeProgram {
    std::string name;
    uint64_t version = 0;  // assigned by the controller at push time
    uint64_t hash_seed = 0x647374726d6f6eULL;
    uint32_t register_count = 8;
    std::vector<CompiledEvent> events;
    std::vector<CompiledRemoteEvent> remote_events;
    std::vector<CompiledMetric> metrics;
    std::vector<CompiledFeature> features;
    std::vector<uint32_t> feature_eval_order;
    std::vector<CompiledState> states;
    uint32_t initial_state = 0;
    std::vector<CompiledExport> exports;

    // Event-index space: packet events first, then remote events.
    uint32_t total_event_count() const {
        return static_cast<uint32_t>(events.size() + remote_events.size());
    }
    bool is_remote_event(uint32_t index) const { return index >= events.size(); }

    friend bool operator==(const ProbeProgram&, const ProbeProgram&) = default;
};

struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Length-prefixed binary container around a canonical self-describing
// record encoding (docs/program-format.md).
std::string serialize_program(const ProbeProgram& p);
ProbeProgram deserialize_program(std::string_view bytes);

// Round-trips a compiled program back to DSL text; compiling that text
// reproduces the program exactly.
std::string program_to_dsl(const ProbeProgram& p);

}  // namespace dstreamon::dsl
