#include <algorithm>
#include <charconv>
#include <deque>
#include <map>
#include <set>

#include "dstreamon/dsl.hpp"

// Validation and compilation share one analysis pass, so a spec that
// validates clean always compiles.

namespace dstreamon::dsl {

namespace {

using features::Expr;
using features::ExprKind;

struct Builtin {
    const char* name;
    double value;
};

// Named constants usable anywhere a number is: TCP flag bits and the
// common ip.proto values.
const Builtin kBuiltins[] = {
    {"FIN", 0x01}, {"SYN", 0x02}, {"RST", 0x04}, {"PSH", 0x08}, {"ACK", 0x10},
    {"URG", 0x20}, {"ECE", 0x40}, {"CWR", 0x80}, {"tcp", 6},    {"udp", 17},
    {"icmp", 1},
};

const Builtin* find_builtin(std::string_view name) {
    for (const auto& b : kBuiltins)
        if (name == b.name) return &b;
    return nullptr;
}

bool valid_topic(std::string_view topic) {
    if (topic.empty()) return false;
    size_t seg_len = 0;
    for (char c : topic) {
        if (c == '.') {
            if (seg_len == 0) return false;
            seg_len = 0;
        } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
            ++seg_len;
        } else {
            return false;
        }
    }
    return seg_len > 0;
}

enum class ExprCtx { EventMatch, Feature, Condition, ActionValue };

enum class ValType { Num, Bool, Unknown };

std::vector<std::string> split_csv_names(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == ',' || s[i] == '\t')) ++i;
        size_t start = i;
        while (i < s.size() && s[i] != ',') ++i;
        size_t end = i;
        while (end > start && (s[end - 1] == ' ' || s[end - 1] == '\t')) --end;
        if (end > start) out.emplace_back(s.substr(start, end - start));
    }
    return out;
}

struct Analyzer {
    const AppSpec& spec;
    ValidationReport report;
    ProbeProgram prog;

    std::map<std::string, uint32_t> event_index;   // packet + remote, shared namespace
    std::map<std::string, uint32_t> metric_index;
    std::map<std::string, uint32_t> feature_index;
    std::map<std::string, uint32_t> state_index;
    std::map<std::string, uint32_t> export_index;
    std::set<std::string> secondary_key_names;     // declared by any event
    std::set<std::string> input_names;             // declared by any remote event

    explicit Analyzer(const AppSpec& s) : spec(s) {}

    void error(SourceLoc loc, std::string code, std::string msg) {
        report.diagnostics.push_back({Severity::Error, loc, std::move(code), std::move(msg)});
    }
    void warning(SourceLoc loc, std::string code, std::string msg) {
        report.diagnostics.push_back({Severity::Warning, loc, std::move(code), std::move(msg)});
    }

    // ---- name tables ------------------------------------------------------

    void build_indices() {
        uint32_t idx = 0;
        for (const auto& ev : spec.events) {
            if (!event_index.emplace(ev.name, idx).second)
                error(ev.loc, "duplicate-event", "duplicate event name '" + ev.name + "'");
            ++idx;
        }
        for (const auto& re : spec.remote_events) {
            if (!event_index.emplace(re.name, idx).second)
                error(re.loc, "duplicate-event",
                      "remote event '" + re.name + "' collides with another event");
            ++idx;
        }
        for (uint32_t i = 0; i < spec.metrics.size(); ++i)
            if (!metric_index.emplace(spec.metrics[i].name, i).second)
                error(spec.metrics[i].loc, "duplicate-metric",
                      "duplicate metric name '" + spec.metrics[i].name + "'");
        for (uint32_t i = 0; i < spec.features.size(); ++i)
            if (!feature_index.emplace(spec.features[i].name, i).second)
                error(spec.features[i].loc, "duplicate-feature",
                      "duplicate feature name '" + spec.features[i].name + "'");
        for (uint32_t i = 0; i < spec.states.size(); ++i)
            if (!state_index.emplace(spec.states[i].name, i).second)
                error(spec.states[i].loc, "duplicate-state",
                      "duplicate state name '" + spec.states[i].name + "'");
        for (uint32_t i = 0; i < spec.exports.size(); ++i)
            if (!export_index.emplace(spec.exports[i].name, i).second)
                error(spec.exports[i].loc, "duplicate-export",
                      "duplicate export name '" + spec.exports[i].name + "'");
        for (const auto& ev : spec.events)
            for (const auto& k : ev.keys)
                if (!k.name.empty()) secondary_key_names.insert(k.name);
        for (const auto& re : spec.remote_events)
            for (const auto& [iname, _] : re.inputs) input_names.insert(iname);
    }

    // ---- expression lowering ---------------------------------------------

    Expr placeholder(ValType t, SourceLoc loc) {
        Expr e;
        if (t == ValType::Bool) {
            e.kind = ExprKind::BoolConst;
            e.bval = false;
        } else {
            e.kind = ExprKind::Number;
            e.num = 0;
        }
        e.loc = loc;
        return e;
    }

    Expr lower(const Expr& e, ExprCtx ctx) {
        switch (e.kind) {
            case ExprKind::Number:
            case ExprKind::BoolConst:
                return e;
            case ExprKind::Register: {
                if (e.index >= spec.register_count)
                    error(e.loc, "register-range",
                          "register index " + std::to_string(e.index) + " out of range (app has " +
                              std::to_string(spec.register_count) + " registers)");
                if (ctx == ExprCtx::EventMatch) {
                    error(e.loc, "register-in-match", "registers are not available in event match predicates");
                    return placeholder(ValType::Num, e.loc);
                }
                return e;
            }
            case ExprKind::Ident:
                return lower_ident(e, ctx);
            case ExprKind::Dotted:
                return lower_dotted(e, ctx);
            case ExprKind::Call:
                return lower_call(e, ctx);
            case ExprKind::Unary:
            case ExprKind::Binary:
            case ExprKind::Compare:
            case ExprKind::Logic: {
                Expr out = e;
                for (auto& c : out.children) c = lower(c, ctx);
                return out;
            }
            default:
                // Already-lowered nodes pass through (programmatic AppSpecs).
                return e;
        }
    }

    Expr lower_ident(const Expr& e, ExprCtx ctx) {
        if (const Builtin* b = find_builtin(e.name)) {
            Expr out;
            out.kind = ExprKind::Number;
            out.num = b->value;
            out.loc = e.loc;
            return out;
        }
        auto fit = feature_index.find(e.name);
        auto mit = metric_index.find(e.name);
        if (ctx == ExprCtx::EventMatch) {
            error(e.loc, "unresolved-name",
                  "unresolved name '" + e.name + "' in event match (only packet fields and constants apply)");
            return placeholder(ValType::Num, e.loc);
        }
        if (fit != feature_index.end() && mit != metric_index.end()) {
            error(e.loc, "ambiguous-reference",
                  "'" + e.name + "' names both a metric and a feature; rename one");
            return placeholder(ValType::Num, e.loc);
        }
        if (fit != feature_index.end()) {
            Expr out;
            out.kind = ExprKind::FeatureRef;
            out.index = fit->second;
            out.loc = e.loc;
            return out;
        }
        if (mit != metric_index.end()) {
            if (ctx == ExprCtx::Condition) {
                error(e.loc, "metric-in-condition",
                      "metric '" + e.name + "' referenced in a condition; conditions see features, not metrics");
                return placeholder(ValType::Num, e.loc);
            }
            Expr out;
            out.kind = ExprKind::MetricQuery;
            out.index = mit->second;
            out.key_mode = features::KeyMode::Current;
            out.loc = e.loc;
            return out;
        }
        const char* what = ctx == ExprCtx::Condition ? "feature" : "metric or feature";
        error(e.loc, "unresolved-reference",
              std::string("unresolved ") + what + " reference '" + e.name + "'");
        return placeholder(ValType::Num, e.loc);
    }

    Expr lower_dotted(const Expr& e, ExprCtx ctx) {
        if (e.name.rfind("input.", 0) == 0) {
            std::string iname = e.name.substr(6);
            if (ctx == ExprCtx::EventMatch || ctx == ExprCtx::Condition) {
                error(e.loc, "input-context",
                      "remote-event input '" + iname + "' is not available here");
                return placeholder(ValType::Num, e.loc);
            }
            if (!input_names.count(iname))
                error(e.loc, "unresolved-input",
                      "no remote event declares input '" + iname + "'");
            Expr out;
            out.kind = ExprKind::Input;
            out.name = iname;
            out.loc = e.loc;
            return out;
        }
        if (auto f = field_by_name(e.name)) {
            if (ctx == ExprCtx::Condition) {
                error(e.loc, "field-in-condition",
                      "packet field '" + e.name + "' referenced in a condition; route it through a feature");
                return placeholder(ValType::Num, e.loc);
            }
            Expr out;
            out.kind = ExprKind::PacketField;
            out.field = *f;
            out.loc = e.loc;
            return out;
        }
        error(e.loc, "unknown-field", "unknown field selector '" + e.name + "'");
        return placeholder(ValType::Num, e.loc);
    }

    Expr lower_call(const Expr& e, ExprCtx ctx) {
        auto arity_error = [&](size_t want) {
            error(e.loc, "arity",
                  "'" + e.name + "' expects " + std::to_string(want) + " argument(s), got " +
                      std::to_string(e.children.size()));
        };
        if (e.name == "min" || e.name == "max") {
            if (e.children.size() != 2) {
                arity_error(2);
                return placeholder(ValType::Num, e.loc);
            }
            Expr out = e;
            out.kind = ExprKind::Binary;
            out.op = static_cast<uint8_t>(e.name == "min" ? features::BinOp::Min
                                                          : features::BinOp::Max);
            out.name.clear();
            for (auto& c : out.children) c = lower(c, ctx);
            return out;
        }
        if (e.name == "abs" || e.name == "log" || e.name == "sqrt") {
            if (e.children.size() != 1) {
                arity_error(1);
                return placeholder(ValType::Num, e.loc);
            }
            Expr out = e;
            out.kind = ExprKind::Unary;
            out.op = static_cast<uint8_t>(e.name == "abs"   ? features::UnOp::Abs
                                          : e.name == "log" ? features::UnOp::Log
                                                            : features::UnOp::Sqrt);
            out.name.clear();
            out.children[0] = lower(e.children[0], ctx);
            return out;
        }
        if (e.name == "timeout" || e.name == "event" || e.name == "evicted") {
            if (ctx != ExprCtx::Condition) {
                error(e.loc, "trigger-context",
                      "'" + e.name + "' is a trigger term, allowed only in rule conditions");
                return placeholder(ValType::Bool, e.loc);
            }
            Expr out;
            out.loc = e.loc;
            if (e.name == "evicted") {
                if (!e.children.empty()) {
                    arity_error(0);
                    return placeholder(ValType::Bool, e.loc);
                }
                out.kind = ExprKind::TriggerEvicted;
                return out;
            }
            if (e.children.size() != 1) {
                arity_error(1);
                return placeholder(ValType::Bool, e.loc);
            }
            if (e.name == "timeout") {
                const Expr& arg = e.children[0];
                if (arg.kind != ExprKind::Number || arg.num < 0 ||
                    arg.num != static_cast<double>(static_cast<uint32_t>(arg.num))) {
                    error(arg.loc, "timeout-tag", "timeout() takes a non-negative integer tag");
                    return placeholder(ValType::Bool, e.loc);
                }
                out.kind = ExprKind::TriggerTimeout;
                out.index = static_cast<uint32_t>(arg.num);
                return out;
            }
            // event(name)
            const Expr& arg = e.children[0];
            if (arg.kind != ExprKind::Ident) {
                error(arg.loc, "event-arg", "event() takes an event name");
                return placeholder(ValType::Bool, e.loc);
            }
            auto it = event_index.find(arg.name);
            if (it == event_index.end()) {
                error(arg.loc, "unresolved-event", "unresolved event reference '" + arg.name + "'");
                return placeholder(ValType::Bool, e.loc);
            }
            out.kind = ExprKind::TriggerEvent;
            out.index = it->second;
            return out;
        }
        // metric query with an explicit key: name(key) or name(secondary_key)
        auto mit = metric_index.find(e.name);
        if (mit != metric_index.end()) {
            if (ctx == ExprCtx::Condition) {
                error(e.loc, "metric-in-condition",
                      "metric '" + e.name + "' referenced in a condition; conditions see features, not metrics");
                return placeholder(ValType::Num, e.loc);
            }
            if (ctx == ExprCtx::EventMatch) {
                error(e.loc, "metric-in-match", "metrics are not available in event match predicates");
                return placeholder(ValType::Num, e.loc);
            }
            if (e.children.size() != 1 || e.children[0].kind != ExprKind::Ident) {
                error(e.loc, "metric-key-arg",
                      "metric query '" + e.name + "(...)' takes 'key' or a secondary key name");
                return placeholder(ValType::Num, e.loc);
            }
            Expr out;
            out.kind = ExprKind::MetricQuery;
            out.index = mit->second;
            out.loc = e.loc;
            const std::string& keyref = e.children[0].name;
            if (keyref == "key") {
                out.key_mode = features::KeyMode::Current;
            } else {
                if (!secondary_key_names.count(keyref))
                    error(e.children[0].loc, "unresolved-key",
                          "no event declares a secondary key named '" + keyref + "'");
                out.key_mode = features::KeyMode::Named;
                out.name = keyref;
            }
            return out;
        }
        error(e.loc, "unknown-function", "unknown function or metric '" + e.name + "'");
        return placeholder(ValType::Num, e.loc);
    }

    // ---- type checking ----------------------------------------------------

    ValType type_of(const Expr& e) {
        switch (e.kind) {
            case ExprKind::Number:
            case ExprKind::MetricQuery:
            case ExprKind::Register:
            case ExprKind::PacketField:
            case ExprKind::FeatureRef:
            case ExprKind::Input:
                return ValType::Num;
            case ExprKind::BoolConst:
            case ExprKind::TriggerTimeout:
            case ExprKind::TriggerEvent:
            case ExprKind::TriggerEvicted:
                return ValType::Bool;
            case ExprKind::Unary: {
                ValType c = type_of(e.children[0]);
                if (c == ValType::Unknown) return ValType::Unknown;
                bool is_not = e.un_op() == features::UnOp::Not;
                ValType want = is_not ? ValType::Bool : ValType::Num;
                if (c != want) {
                    error(e.loc, "type",
                          is_not ? "'not' applies to boolean expressions"
                                 : "arithmetic applied to a boolean expression");
                    return ValType::Unknown;
                }
                return want;
            }
            case ExprKind::Binary: {
                ValType a = type_of(e.children[0]), b = type_of(e.children[1]);
                if (a == ValType::Unknown || b == ValType::Unknown) return ValType::Unknown;
                if (a != ValType::Num || b != ValType::Num) {
                    error(e.loc, "type", "arithmetic operands must be numeric");
                    return ValType::Unknown;
                }
                return ValType::Num;
            }
            case ExprKind::Compare: {
                ValType a = type_of(e.children[0]), b = type_of(e.children[1]);
                if (a == ValType::Unknown || b == ValType::Unknown) return ValType::Unknown;
                if (a != ValType::Num || b != ValType::Num) {
                    error(e.loc, "type", "comparison operands must be numeric");
                    return ValType::Unknown;
                }
                return ValType::Bool;
            }
            case ExprKind::Logic: {
                ValType a = type_of(e.children[0]), b = type_of(e.children[1]);
                if (a == ValType::Unknown || b == ValType::Unknown) return ValType::Unknown;
                if (a != ValType::Bool || b != ValType::Bool) {
                    error(e.loc, "type", "'and'/'or' operands must be boolean");
                    return ValType::Unknown;
                }
                return ValType::Bool;
            }
            default:
                return ValType::Unknown;
        }
    }

    Expr lower_checked(const Expr& e, ExprCtx ctx, ValType want, const char* what) {
        size_t errors_before = report.error_count();
        if (features::expr_depth(e) > features::kMaxExprDepth)
            error(e.loc, "expr-depth", std::string(what) + " exceeds the expression depth limit");
        Expr lowered = lower(e, ctx);
        if (report.error_count() != errors_before) return lowered;
        ValType t = type_of(lowered);
        if (t != ValType::Unknown && t != want)
            error(e.loc, "type",
                  std::string(what) + (want == ValType::Bool ? " must be a boolean expression"
                                                             : " must be a numeric expression"));
        return lowered;
    }

    // ---- declarations -----------------------------------------------------

    KeySelector resolve_selectors(const std::vector<std::string>& names, bool bidir, SourceLoc loc) {
        KeySelector sel;
        sel.bidirectional = bidir;
        for (const auto& n : names) {
            if (auto f = field_by_name(n))
                sel.fields.push_back(*f);
            else
                error(loc, "unknown-field", "unknown field selector '" + n + "' in key");
        }
        return sel;
    }

    void check_events() {
        for (const auto& ev : spec.events) {
            CompiledEvent ce;
            ce.name = ev.name;
            ce.match = lower_checked(ev.match, ExprCtx::EventMatch, ValType::Bool,
                                     "event '" + ev.name + "' match");
            size_t primaries = 0;
            std::set<std::string> seen;
            for (const auto& k : ev.keys) {
                if (k.fields.empty())
                    error(k.loc, "empty-key", "key declares no fields");
                if (k.name.empty()) {
                    ++primaries;
                    if (primaries == 1)
                        ce.primary_key = resolve_selectors(k.fields, k.bidirectional, k.loc);
                    else
                        error(k.loc, "multiple-primary",
                              "event '" + ev.name + "' declares more than one unnamed (primary) key");
                } else {
                    if (k.name == "key")
                        error(k.loc, "reserved-key-name", "'key' is reserved for the primary key");
                    if (!seen.insert(k.name).second)
                        error(k.loc, "duplicate-key",
                              "duplicate secondary key '" + k.name + "' on event '" + ev.name + "'");
                    ce.secondary_keys.push_back(
                        {k.name, resolve_selectors(k.fields, k.bidirectional, k.loc)});
                }
            }
            if (primaries == 0)
                error(ev.loc, "missing-primary",
                      "event '" + ev.name + "' has no primary key (one unnamed <key> required)");
            prog.events.push_back(std::move(ce));
        }
        for (const auto& re : spec.remote_events) {
            CompiledRemoteEvent cre;
            cre.name = re.name;
            cre.topic_pattern = re.topic_pattern;
            cre.key_field = re.key_field;
            if (!valid_topic(re.topic_pattern))
                error(re.loc, "bad-topic",
                      "remote event topic pattern '" + re.topic_pattern + "' is not a valid topic prefix");
            if (re.key_field.empty())
                error(re.loc, "bad-mapping", "remote event '" + re.name + "' key field is empty");
            std::set<std::string> seen;
            for (const auto& [iname, ifield] : re.inputs) {
                if (!seen.insert(iname).second)
                    error(re.loc, "duplicate-input",
                          "duplicate input '" + iname + "' on remote event '" + re.name + "'");
                if (ifield.empty())
                    error(re.loc, "bad-mapping",
                          "input '" + iname + "' of remote event '" + re.name + "' maps to an empty field");
                cre.inputs.emplace_back(iname, ifield);
            }
            prog.remote_events.push_back(std::move(cre));
        }
    }

    void check_metrics() {
        for (const auto& m : spec.metrics) {
            CompiledMetric cm;
            cm.name = m.name;

            if (m.kind == "count_min")
                cm.kind = MetricKind::CountMin;
            else if (m.kind == "bloom")
                cm.kind = MetricKind::Bloom;
            else if (m.kind == "dleft")
                cm.kind = MetricKind::DLeft;
            else
                error(m.loc, "unknown-kind",
                      "metric '" + m.name + "' has unknown kind '" + m.kind + "'");

            auto wrong_param = [&](bool present, const char* pname) {
                if (present)
                    error(m.loc, "wrong-param", "parameter '" + std::string(pname) +
                                                    "' does not apply to kind '" + m.kind + "'");
            };
            if (cm.kind == MetricKind::CountMin) {
                cm.epsilon = m.has_epsilon ? m.epsilon : 0.01;
                cm.delta = m.has_delta ? m.delta : 0.01;
                if (cm.epsilon <= 0 || cm.epsilon >= 1)
                    error(m.loc, "sizing", "count_min epsilon must be in (0,1)");
                if (cm.delta <= 0 || cm.delta >= 1)
                    error(m.loc, "sizing", "count_min delta must be in (0,1)");
                wrong_param(m.has_bloom_m, "m");
                wrong_param(m.has_bloom_k, "k");
                wrong_param(m.has_dleft_d, "d");
                wrong_param(m.has_dleft_b, "b");
                wrong_param(m.has_dleft_c, "c");
            } else if (cm.kind == MetricKind::Bloom) {
                cm.bloom_bits = m.has_bloom_m ? m.bloom_m : 65536;
                cm.bloom_hashes = m.has_bloom_k ? m.bloom_k : 7;
                if (cm.bloom_bits < 8)
                    error(m.loc, "sizing", "bloom m must be at least 8 bits");
                if (cm.bloom_hashes < 1 || cm.bloom_hashes > 16)
                    error(m.loc, "sizing", "bloom k must be in [1,16]");
                wrong_param(m.has_epsilon, "epsilon");
                wrong_param(m.has_delta, "delta");
                wrong_param(m.has_dleft_d, "d");
                wrong_param(m.has_dleft_b, "b");
                wrong_param(m.has_dleft_c, "c");
            } else if (cm.kind == MetricKind::DLeft) {
                cm.dleft_subtables = m.has_dleft_d ? m.dleft_d : 4;
                cm.dleft_buckets = m.has_dleft_b ? m.dleft_b : 1024;
                cm.dleft_cells = m.has_dleft_c ? m.dleft_c : 8;
                if (cm.dleft_subtables < 2)
                    error(m.loc, "sizing", "dleft d must be at least 2");
                if (cm.dleft_buckets < 1 || cm.dleft_cells < 1)
                    error(m.loc, "sizing", "dleft b and c must be at least 1");
                wrong_param(m.has_epsilon, "epsilon");
                wrong_param(m.has_delta, "delta");
                wrong_param(m.has_bloom_m, "m");
                wrong_param(m.has_bloom_k, "k");
            }

            // key source: "event", "event.secondary", or a selector list
            cm.key_source = resolve_key_source(m);

            // inc: absent = 1; integer constant; or numeric packet field
            if (m.inc.empty()) {
                cm.inc.kind = IncSource::Kind::Const;
                cm.inc.value = 1;
            } else if (!m.inc.empty() && std::isdigit(static_cast<unsigned char>(m.inc[0]))) {
                uint64_t v = 0;
                auto [p, ec] = std::from_chars(m.inc.data(), m.inc.data() + m.inc.size(), v);
                if (ec != std::errc() || p != m.inc.data() + m.inc.size() || v < 1)
                    error(m.loc, "bad-inc",
                          "metric '" + m.name + "' inc must be a positive integer or a field selector");
                cm.inc.kind = IncSource::Kind::Const;
                cm.inc.value = v;
            } else if (auto f = field_by_name(m.inc)) {
                cm.inc.kind = IncSource::Kind::Field;
                cm.inc.field = *f;
            } else {
                error(m.loc, "bad-inc",
                      "metric '" + m.name + "' inc '" + m.inc + "' is neither an integer nor a field selector");
            }

            if (m.window) {
                if (m.window->length_ms < 1)
                    error(m.loc, "sizing", "window length_ms must be at least 1");
                if (m.window->mode == WindowMode::Sliding &&
                    (m.window->panes < 1 || m.window->panes > 64))
                    error(m.loc, "sizing", "sliding window panes must be in [1,64]");
                cm.window = m.window;
                if (cm.window->mode == WindowMode::PeriodicReset)
                    cm.window->panes = 8;  // canonical: panes only mean anything when sliding
            }
            prog.metrics.push_back(std::move(cm));
        }
    }

    KeySource resolve_key_source(const MetricDecl& m) {
        KeySource ks;
        const std::string& s = m.key_source;
        // whole string naming an event?
        auto eit = event_index.find(s);
        if (eit != event_index.end()) {
            ks.kind = KeySource::Kind::EventPrimary;
            ks.event_index = eit->second;
            return ks;
        }
        // event.secondary?
        size_t dot = s.find('.');
        if (dot != std::string::npos) {
            auto e2 = event_index.find(s.substr(0, dot));
            if (e2 != event_index.end()) {
                uint32_t ei = e2->second;
                if (ei >= prog.events.size()) {
                    error(m.loc, "bad-key-source",
                          "metric '" + m.name + "': remote events have no secondary keys");
                    return ks;
                }
                const std::string sec = s.substr(dot + 1);
                const auto& ev = spec.events[ei];
                uint32_t ki = 0;
                for (const auto& k : ev.keys) {
                    if (k.name.empty()) continue;
                    if (k.name == sec) {
                        ks.kind = KeySource::Kind::EventSecondary;
                        ks.event_index = ei;
                        ks.key_index = ki;
                        return ks;
                    }
                    ++ki;
                }
                error(m.loc, "bad-key-source",
                      "metric '" + m.name + "': event '" + ev.name + "' has no secondary key '" +
                          sec + "'");
                return ks;
            }
        }
        // selector list
        auto names = split_csv_names(s);
        if (names.empty()) {
            error(m.loc, "bad-key-source", "metric '" + m.name + "' has an empty key");
            return ks;
        }
        KeySelector sel;
        bool all_known = true;
        for (const auto& n : names) {
            if (auto f = field_by_name(n))
                sel.fields.push_back(*f);
            else
                all_known = false;
        }
        if (!all_known) {
            error(m.loc, "bad-key-source",
                  "metric '" + m.name + "' key '" + s +
                      "' is neither a declared event key nor a field selector list");
            return ks;
        }
        ks.kind = KeySource::Kind::Selectors;
        ks.selectors = std::move(sel);
        return ks;
    }

    void check_features() {
        for (const auto& f : spec.features) {
            CompiledFeature cf;
            cf.name = f.name;
            cf.expr = lower_checked(f.expr, ExprCtx::Feature, ValType::Num,
                                    "feature '" + f.name + "'");
            prog.features.push_back(std::move(cf));
        }
        // dependency order: stable topological sort over FeatureRef edges
        size_t n = prog.features.size();
        std::vector<std::vector<uint32_t>> deps(n);
        for (size_t i = 0; i < n; ++i) collect_feature_refs(prog.features[i].expr, deps[i]);
        std::vector<uint32_t> indegree(n, 0);
        std::vector<std::vector<uint32_t>> dependents(n);
        for (uint32_t i = 0; i < n; ++i) {
            std::set<uint32_t> uniq(deps[i].begin(), deps[i].end());
            for (uint32_t d : uniq) {
                if (d == i) continue;  // self-loop caught below as a cycle
                dependents[d].push_back(i);
                ++indegree[i];
            }
            if (uniq.count(i)) ++indegree[i];  // force self-referential features into the cycle set
        }
        std::set<uint32_t> ready;
        for (uint32_t i = 0; i < n; ++i)
            if (indegree[i] == 0) ready.insert(i);
        while (!ready.empty()) {
            uint32_t i = *ready.begin();
            ready.erase(ready.begin());
            prog.feature_eval_order.push_back(i);
            for (uint32_t j : dependents[i])
                if (--indegree[j] == 0) ready.insert(j);
        }
        if (prog.feature_eval_order.size() != n) {
            for (uint32_t i = 0; i < n; ++i)
                if (indegree[i] > 0) {
                    error(spec.features[i].loc, "feature-cycle",
                          "feature '" + spec.features[i].name + "' participates in a dependency cycle");
                    break;  // one diagnostic per cycle is enough
                }
        }
    }

    void collect_feature_refs(const Expr& e, std::vector<uint32_t>& out) {
        if (e.kind == ExprKind::FeatureRef) out.push_back(e.index);
        for (const auto& c : e.children) collect_feature_refs(c, out);
    }

    std::vector<uint32_t> resolve_feature_set(const std::string& csv, SourceLoc loc) {
        std::vector<uint32_t> out;
        for (const auto& name : split_csv_names(csv)) {
            auto it = feature_index.find(name);
            if (it == feature_index.end())
                error(loc, "unresolved-feature", "unresolved feature reference '" + name + "'");
            else
                out.push_back(it->second);
        }
        return out;
    }

    void check_exports() {
        for (const auto& ex : spec.exports) {
            CompiledExport ce;
            ce.name = ex.name;
            ce.topic = ex.topic;
            if (!valid_topic(ex.topic))
                error(ex.loc, "bad-topic",
                      "export topic '" + ex.topic + "' must be dot-separated [a-z0-9_] segments");
            ce.feature_set = resolve_feature_set(ex.features_csv, ex.loc);
            prog.exports.push_back(std::move(ce));
        }
    }

    CompiledAction check_action(const ActionDecl& a) {
        CompiledAction ca;
        auto reject = [&](bool present, const char* attr) {
            if (present)
                error(a.loc, "wrong-attr",
                      "attribute '" + std::string(attr) + "' does not apply to action '" + a.kind + "'");
        };
        auto topic_from = [&]() {
            if (!a.topic.empty() && !a.export_ref.empty()) {
                error(a.loc, "action-topic", "action takes either topic= or export=, not both");
                return;
            }
            if (!a.topic.empty()) {
                if (!valid_topic(a.topic))
                    error(a.loc, "bad-topic", "action topic '" + a.topic + "' is invalid");
                ca.topic = a.topic;
                if (a.has_features)
                    ca.feature_set = resolve_feature_set(a.features_csv, a.loc);
                else  // no template: the payload carries every feature
                    for (uint32_t i = 0; i < prog.features.size(); ++i) ca.feature_set.push_back(i);
                return;
            }
            if (!a.export_ref.empty()) {
                auto it = export_index.find(a.export_ref);
                if (it == export_index.end()) {
                    error(a.loc, "unresolved-export",
                          "unresolved export reference '" + a.export_ref + "'");
                    return;
                }
                ca.topic = prog.exports[it->second].topic;
                ca.feature_set = prog.exports[it->second].feature_set;
                if (a.has_features)
                    error(a.loc, "action-topic", "features= conflicts with export=");
                return;
            }
            error(a.loc, "action-topic", "action '" + a.kind + "' requires topic= or export=");
        };

        if (a.kind == "publish_alert" || a.kind == "export_features") {
            ca.kind = a.kind == "publish_alert" ? ActionKind::PublishAlert : ActionKind::ExportFeatures;
            topic_from();
            reject(a.has_reg_index, "index");
            reject(a.has_value, "expr");
            reject(a.has_delay, "delay_ms");
            reject(a.has_tag, "tag");
            reject(!a.metrics_csv.empty(), "metrics");
        } else if (a.kind == "set_register") {
            ca.kind = ActionKind::SetRegister;
            if (!a.has_reg_index)
                error(a.loc, "missing-attr", "set_register requires index=");
            else if (a.reg_index >= spec.register_count)
                error(a.loc, "register-range",
                      "register index " + std::to_string(a.reg_index) + " out of range");
            ca.reg_index = a.reg_index;
            if (!a.has_value)
                error(a.loc, "missing-attr", "set_register requires expr=");
            else
                ca.value = lower_checked(a.value, ExprCtx::ActionValue, ValType::Num,
                                         "set_register expression");
            reject(!a.topic.empty(), "topic");
            reject(!a.export_ref.empty(), "export");
            reject(!a.features_csv.empty(), "features");
            reject(a.has_delay, "delay_ms");
            reject(a.has_tag, "tag");
            reject(!a.metrics_csv.empty(), "metrics");
        } else if (a.kind == "schedule_timeout") {
            ca.kind = ActionKind::ScheduleTimeout;
            if (!a.has_delay)
                error(a.loc, "missing-attr", "schedule_timeout requires delay_ms=");
            else if (a.delay_ms < 1)
                error(a.loc, "bad-delay", "schedule_timeout delay_ms must be at least 1");
            ca.delay_ms = a.delay_ms;
            ca.tag = a.has_tag ? a.tag : 0;
            reject(!a.topic.empty(), "topic");
            reject(!a.export_ref.empty(), "export");
            reject(a.has_reg_index, "index");
            reject(a.has_value, "expr");
            reject(!a.metrics_csv.empty(), "metrics");
        } else if (a.kind == "cancel_timeouts") {
            ca.kind = ActionKind::CancelTimeouts;
            if (!a.has_tag) error(a.loc, "missing-attr", "cancel_timeouts requires tag=");
            ca.tag = a.tag;
            reject(!a.topic.empty(), "topic");
            reject(a.has_delay, "delay_ms");
            reject(a.has_reg_index, "index");
            reject(a.has_value, "expr");
            reject(!a.metrics_csv.empty(), "metrics");
        } else if (a.kind == "reset_metrics") {
            ca.kind = ActionKind::ResetMetrics;
            if (a.metrics_csv.empty())
                error(a.loc, "missing-attr", "reset_metrics requires metrics=");
            for (const auto& name : split_csv_names(a.metrics_csv)) {
                auto it = metric_index.find(name);
                if (it == metric_index.end())
                    error(a.loc, "unresolved-metric", "unresolved metric reference '" + name + "'");
                else
                    ca.metrics.push_back(it->second);
            }
            reject(!a.topic.empty(), "topic");
            reject(a.has_delay, "delay_ms");
            reject(a.has_tag, "tag");
            reject(a.has_reg_index, "index");
            reject(a.has_value, "expr");
        } else if (a.kind == "drop_entity") {
            ca.kind = ActionKind::DropEntity;
            reject(!a.topic.empty(), "topic");
            reject(!a.export_ref.empty(), "export");
            reject(a.has_delay, "delay_ms");
            reject(a.has_tag, "tag");
            reject(a.has_reg_index, "index");
            reject(a.has_value, "expr");
            reject(!a.metrics_csv.empty(), "metrics");
        } else {
            error(a.loc, "unknown-action", "unknown action kind '" + a.kind + "'");
        }
        return ca;
    }

    void check_states() {
        if (spec.states.empty()) {
            error(spec.loc, "no-states", "application declares no states");
            return;
        }
        for (uint32_t si = 0; si < spec.states.size(); ++si) {
            const auto& st = spec.states[si];
            CompiledState cs;
            cs.name = st.name;
            for (const auto& r : st.rules) {
                CompiledRule cr;
                cr.condition = lower_checked(r.condition, ExprCtx::Condition, ValType::Bool,
                                             "rule condition in state '" + st.name + "'");
                if (r.next_state.empty()) {
                    cr.next_state = si;  // stay
                } else {
                    auto it = state_index.find(r.next_state);
                    if (it == state_index.end()) {
                        error(r.loc, "unresolved-state",
                              "unresolved state reference '" + r.next_state + "'");
                        cr.next_state = si;
                    } else {
                        cr.next_state = it->second;
                    }
                }
                for (const auto& a : r.actions) cr.actions.push_back(check_action(a));
                cs.rules.push_back(std::move(cr));
            }
            prog.states.push_back(std::move(cs));
        }

        auto iit = state_index.find(spec.initial_state);
        if (iit == state_index.end()) {
            error(spec.loc, "unresolved-initial",
                  "initial state '" + spec.initial_state + "' is not declared");
        } else {
            prog.initial_state = iit->second;
            // reachability: warnings only
            std::vector<bool> seen(spec.states.size(), false);
            std::deque<uint32_t> work{prog.initial_state};
            seen[prog.initial_state] = true;
            while (!work.empty()) {
                uint32_t s = work.front();
                work.pop_front();
                for (const auto& r : prog.states[s].rules)
                    if (!seen[r.next_state]) {
                        seen[r.next_state] = true;
                        work.push_back(r.next_state);
                    }
            }
            for (uint32_t i = 0; i < seen.size(); ++i)
                if (!seen[i])
                    warning(spec.states[i].loc, "unreachable-state",
                            "state '" + spec.states[i].name + "' is unreachable from '" +
                                spec.initial_state + "'");
        }
    }

    void run() {
        prog.name = spec.name;
        prog.version = 0;
        prog.hash_seed = spec.hash_seed;
        prog.register_count = spec.register_count;
        if (spec.register_count < 1 || spec.register_count > 64)
            error(spec.loc, "register-count", "registers must be in [1,64]");
        build_indices();
        check_events();
        check_metrics();
        check_features();
        check_exports();
        check_states();
    }
};

}  // namespace

ValidationReport validate(const AppSpec& spec) {
    Analyzer a(spec);
    a.run();
    return a.report;
}

ProbeProgram compile(const AppSpec& spec) {
    Analyzer a(spec);
    a.run();
    if (!a.report.ok()) {
        std::string msg = "compile on a spec with validation errors: ";
        for (const auto& d : a.report.diagnostics)
            if (d.severity == Severity::Error) {
                msg += d.message;
                break;
            }
        throw CompileError(msg);
    }
    return std::move(a.prog);
}

}  // namespace dstreamon::dsl
