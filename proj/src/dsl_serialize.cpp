#include <json.hpp>

#include "dstreamon/bytes.hpp"
#include "dstreamon/program.hpp"

// Binary program container (docs/program-format.md): 4-byte magic "SMON",
// 2-byte big-endian format version, 4-byte big-endian payload length, then
// a canonical JSON record (sorted keys, shortest number form).

namespace dstreamon::dsl {

namespace {

using json = nlohmann::json;
using features::Expr;
using features::ExprKind;

constexpr char kMagic[4] = {0x53, 0x4d, 0x4f, 0x4e};
constexpr uint16_t kFormatVersion = 1;

// ---- expr <-> json ---------------------------------------------------------

const char* un_op_name(features::UnOp op) {
    switch (op) {
        case features::UnOp::Neg: return "neg";
        case features::UnOp::Abs: return "abs";
        case features::UnOp::Log: return "log";
        case features::UnOp::Sqrt: return "sqrt";
        case features::UnOp::Not: return "not";
    }
    return "?";
}

const char* bin_op_name(features::BinOp op) {
    switch (op) {
        case features::BinOp::Add: return "add";
        case features::BinOp::Sub: return "sub";
        case features::BinOp::Mul: return "mul";
        case features::BinOp::Div: return "div";
        case features::BinOp::Min: return "min";
        case features::BinOp::Max: return "max";
        case features::BinOp::BitAnd: return "band";
        case features::BinOp::BitOr: return "bor";
    }
    return "?";
}

const char* cmp_op_name(features::CmpOp op) {
    switch (op) {
        case features::CmpOp::Lt: return "lt";
        case features::CmpOp::Le: return "le";
        case features::CmpOp::Eq: return "eq";
        case features::CmpOp::Ne: return "ne";
        case features::CmpOp::Ge: return "ge";
        case features::CmpOp::Gt: return "gt";
    }
    return "?";
}

template <typename E, int N>
E op_from_name(const std::string& s, const char* (*namer)(E)) {
    for (int i = 0; i < N; ++i) {
        E op = static_cast<E>(i);
        if (s == namer(op)) return op;
    }
    throw DecodeError("unknown operator '" + s + "'");
}

json expr_to_json(const Expr& e) {
    json j;
    j["loc"] = json::array({e.loc.line, e.loc.col});
    switch (e.kind) {
        case ExprKind::Number:
            j["k"] = "num";
            j["v"] = e.num;
            break;
        case ExprKind::BoolConst:
            j["k"] = "bool";
            j["v"] = e.bval;
            break;
        case ExprKind::MetricQuery:
            j["k"] = "metric";
            j["i"] = e.index;
            j["mode"] = e.key_mode == features::KeyMode::Current ? "current" : "named";
            if (e.key_mode == features::KeyMode::Named) j["key"] = e.name;
            break;
        case ExprKind::Register:
            j["k"] = "reg";
            j["i"] = e.index;
            break;
        case ExprKind::PacketField:
            j["k"] = "field";
            j["f"] = field_info(e.field).name;
            break;
        case ExprKind::FeatureRef:
            j["k"] = "feature";
            j["i"] = e.index;
            break;
        case ExprKind::Input:
            j["k"] = "input";
            j["n"] = e.name;
            break;
        case ExprKind::Unary:
            j["k"] = "un";
            j["op"] = un_op_name(e.un_op());
            break;
        case ExprKind::Binary:
            j["k"] = "bin";
            j["op"] = bin_op_name(e.bin_op());
            break;
        case ExprKind::Compare:
            j["k"] = "cmp";
            j["op"] = cmp_op_name(e.cmp_op());
            break;
        case ExprKind::Logic:
            j["k"] = "logic";
            j["op"] = e.log_op() == features::LogOp::And ? "and" : "or";
            break;
        case ExprKind::TriggerTimeout:
            j["k"] = "timeout";
            j["i"] = e.index;
            break;
        case ExprKind::TriggerEvent:
            j["k"] = "event";
            j["i"] = e.index;
            break;
        case ExprKind::TriggerEvicted:
            j["k"] = "evicted";
            break;
        default:
            throw CompileError("unresolved symbolic node survived compilation");
    }
    if (!e.children.empty()) {
        json kids = json::array();
        for (const auto& c : e.children) kids.push_back(expr_to_json(c));
        j["c"] = std::move(kids);
    }
    return j;
}

Expr expr_from_json(const json& j, int depth = 0) {
    if (depth > features::kMaxExprDepth) throw DecodeError("expression too deep");
    Expr e;
    if (j.contains("loc") && j["loc"].is_array() && j["loc"].size() == 2) {
        e.loc.line = j["loc"][0].get<uint32_t>();
        e.loc.col = j["loc"][1].get<uint32_t>();
    }
    const std::string k = j.at("k").get<std::string>();
    if (k == "num") {
        e.kind = ExprKind::Number;
        e.num = j.at("v").get<double>();
    } else if (k == "bool") {
        e.kind = ExprKind::BoolConst;
        e.bval = j.at("v").get<bool>();
    } else if (k == "metric") {
        e.kind = ExprKind::MetricQuery;
        e.index = j.at("i").get<uint32_t>();
        e.key_mode = j.at("mode").get<std::string>() == "named" ? features::KeyMode::Named
                                                                : features::KeyMode::Current;
        if (e.key_mode == features::KeyMode::Named) e.name = j.at("key").get<std::string>();
    } else if (k == "reg") {
        e.kind = ExprKind::Register;
        e.index = j.at("i").get<uint32_t>();
    } else if (k == "field") {
        e.kind = ExprKind::PacketField;
        auto f = field_by_name(j.at("f").get<std::string>());
        if (!f) throw DecodeError("unknown field in program: " + j.at("f").get<std::string>());
        e.field = *f;
    } else if (k == "feature") {
        e.kind = ExprKind::FeatureRef;
        e.index = j.at("i").get<uint32_t>();
    } else if (k == "input") {
        e.kind = ExprKind::Input;
        e.name = j.at("n").get<std::string>();
    } else if (k == "un") {
        e.kind = ExprKind::Unary;
        e.op = static_cast<uint8_t>(
            op_from_name<features::UnOp, 5>(j.at("op").get<std::string>(), un_op_name));
    } else if (k == "bin") {
        e.kind = ExprKind::Binary;
        e.op = static_cast<uint8_t>(
            op_from_name<features::BinOp, 8>(j.at("op").get<std::string>(), bin_op_name));
    } else if (k == "cmp") {
        e.kind = ExprKind::Compare;
        e.op = static_cast<uint8_t>(
            op_from_name<features::CmpOp, 6>(j.at("op").get<std::string>(), cmp_op_name));
    } else if (k == "logic") {
        e.kind = ExprKind::Logic;
        e.op = static_cast<uint8_t>(j.at("op").get<std::string>() == "and" ? features::LogOp::And
                                                                           : features::LogOp::Or);
    } else if (k == "timeout") {
        e.kind = ExprKind::TriggerTimeout;
        e.index = j.at("i").get<uint32_t>();
    } else if (k == "event") {
        e.kind = ExprKind::TriggerEvent;
        e.index = j.at("i").get<uint32_t>();
    } else if (k == "evicted") {
        e.kind = ExprKind::TriggerEvicted;
    } else {
        throw DecodeError("unknown expression node kind '" + k + "'");
    }
    if (j.contains("c"))
        for (const auto& cj : j.at("c")) e.children.push_back(expr_from_json(cj, depth + 1));
    // arity sanity
    size_t want = 0;
    switch (e.kind) {
        case ExprKind::Unary: want = 1; break;
        case ExprKind::Binary:
        case ExprKind::Compare:
        case ExprKind::Logic: want = 2; break;
        default: want = 0; break;
    }
    if (e.children.size() != want) throw DecodeError("bad expression arity for node '" + k + "'");
    return e;
}

// ---- declarations <-> json --------------------------------------------------

json selector_to_json(const KeySelector& s) {
    json j;
    json fields = json::array();
    for (FieldId f : s.fields) fields.push_back(field_info(f).name);
    j["fields"] = std::move(fields);
    j["bidir"] = s.bidirectional;
    return j;
}

KeySelector selector_from_json(const json& j) {
    KeySelector s;
    for (const auto& fj : j.at("fields")) {
        auto f = field_by_name(fj.get<std::string>());
        if (!f) throw DecodeError("unknown field in key selector");
        s.fields.push_back(*f);
    }
    s.bidirectional = j.at("bidir").get<bool>();
    return s;
}

json program_to_json(const ProbeProgram& p) {
    json j;
    j["name"] = p.name;
    j["version"] = p.version;
    j["seed"] = p.hash_seed;
    j["registers"] = p.register_count;

    json events = json::array();
    for (const auto& ev : p.events) {
        json ej;
        ej["name"] = ev.name;
        ej["match"] = expr_to_json(ev.match);
        ej["key"] = selector_to_json(ev.primary_key);
        json sec = json::array();
        for (const auto& sk : ev.secondary_keys) {
            json kj = selector_to_json(sk.selector);
            kj["name"] = sk.name;
            sec.push_back(std::move(kj));
        }
        ej["secondary"] = std::move(sec);
        events.push_back(std::move(ej));
    }
    j["events"] = std::move(events);

    json remotes = json::array();
    for (const auto& re : p.remote_events) {
        json rj;
        rj["name"] = re.name;
        rj["topic"] = re.topic_pattern;
        rj["key_field"] = re.key_field;
        json ins = json::array();
        for (const auto& [n, f] : re.inputs) ins.push_back(json::array({n, f}));
        rj["inputs"] = std::move(ins);
        remotes.push_back(std::move(rj));
    }
    j["remote_events"] = std::move(remotes);

    json metrics = json::array();
    for (const auto& m : p.metrics) {
        json mj;
        mj["name"] = m.name;
        switch (m.kind) {
            case MetricKind::CountMin:
                mj["kind"] = "count_min";
                mj["epsilon"] = m.epsilon;
                mj["delta"] = m.delta;
                break;
            case MetricKind::Bloom:
                mj["kind"] = "bloom";
                mj["m"] = m.bloom_bits;
                mj["khash"] = m.bloom_hashes;
                break;
            case MetricKind::DLeft:
                mj["kind"] = "dleft";
                mj["d"] = m.dleft_subtables;
                mj["b"] = m.dleft_buckets;
                mj["c"] = m.dleft_cells;
                break;
        }
        json ks;
        switch (m.key_source.kind) {
            case KeySource::Kind::EventPrimary:
                ks["kind"] = "event";
                ks["event"] = m.key_source.event_index;
                break;
            case KeySource::Kind::EventSecondary:
                ks["kind"] = "secondary";
                ks["event"] = m.key_source.event_index;
                ks["key"] = m.key_source.key_index;
                break;
            case KeySource::Kind::Selectors:
                ks["kind"] = "selectors";
                ks["sel"] = selector_to_json(m.key_source.selectors);
                break;
        }
        mj["key_source"] = std::move(ks);
        if (m.inc.kind == IncSource::Kind::Const)
            mj["inc"] = m.inc.value;
        else
            mj["inc_field"] = field_info(m.inc.field).name;
        if (m.window) {
            json wj;
            wj["length_ms"] = m.window->length_ms;
            wj["mode"] = m.window->mode == WindowMode::PeriodicReset ? "periodic_reset" : "sliding";
            wj["panes"] = m.window->panes;
            mj["window"] = std::move(wj);
        }
        metrics.push_back(std::move(mj));
    }
    j["metrics"] = std::move(metrics);

    json feats = json::array();
    for (const auto& f : p.features)
        feats.push_back(json{{"name", f.name}, {"expr", expr_to_json(f.expr)}});
    j["features"] = std::move(feats);
    j["eval_order"] = p.feature_eval_order;

    json states = json::array();
    for (const auto& st : p.states) {
        json sj;
        sj["name"] = st.name;
        json rules = json::array();
        for (const auto& r : st.rules) {
            json rj;
            rj["cond"] = expr_to_json(r.condition);
            rj["next"] = r.next_state;
            json acts = json::array();
            for (const auto& a : r.actions) {
                json aj;
                switch (a.kind) {
                    case ActionKind::PublishAlert:
                        aj["do"] = "publish_alert";
                        aj["topic"] = a.topic;
                        aj["features"] = a.feature_set;
                        break;
                    case ActionKind::ExportFeatures:
                        aj["do"] = "export_features";
                        aj["topic"] = a.topic;
                        aj["features"] = a.feature_set;
                        break;
                    case ActionKind::SetRegister:
                        aj["do"] = "set_register";
                        aj["index"] = a.reg_index;
                        aj["expr"] = expr_to_json(a.value);
                        break;
                    case ActionKind::ScheduleTimeout:
                        aj["do"] = "schedule_timeout";
                        aj["delay_ms"] = a.delay_ms;
                        aj["tag"] = a.tag;
                        break;
                    case ActionKind::CancelTimeouts:
                        aj["do"] = "cancel_timeouts";
                        aj["tag"] = a.tag;
                        break;
                    case ActionKind::ResetMetrics:
                        aj["do"] = "reset_metrics";
                        aj["metrics"] = a.metrics;
                        break;
                    case ActionKind::DropEntity:
                        aj["do"] = "drop_entity";
                        break;
                }
                acts.push_back(std::move(aj));
            }
            rj["actions"] = std::move(acts);
            rules.push_back(std::move(rj));
        }
        sj["rules"] = std::move(rules);
        states.push_back(std::move(sj));
    }
    j["states"] = std::move(states);
    j["initial"] = p.initial_state;

    json exports = json::array();
    for (const auto& ex : p.exports)
        exports.push_back(json{{"name", ex.name}, {"topic", ex.topic}, {"features", ex.feature_set}});
    j["exports"] = std::move(exports);
    return j;
}

ProbeProgram program_from_json(const json& j) {
    ProbeProgram p;
    p.name = j.at("name").get<std::string>();
    p.version = j.at("version").get<uint64_t>();
    p.hash_seed = j.at("seed").get<uint64_t>();
    p.register_count = j.at("registers").get<uint32_t>();

    for (const auto& ej : j.at("events")) {
        CompiledEvent ev;
        ev.name = ej.at("name").get<std::string>();
        ev.match = expr_from_json(ej.at("match"));
        ev.primary_key = selector_from_json(ej.at("key"));
        for (const auto& kj : ej.at("secondary"))
            ev.secondary_keys.push_back({kj.at("name").get<std::string>(), selector_from_json(kj)});
        p.events.push_back(std::move(ev));
    }
    for (const auto& rj : j.at("remote_events")) {
        CompiledRemoteEvent re;
        re.name = rj.at("name").get<std::string>();
        re.topic_pattern = rj.at("topic").get<std::string>();
        re.key_field = rj.at("key_field").get<std::string>();
        for (const auto& ij : rj.at("inputs"))
            re.inputs.emplace_back(ij.at(0).get<std::string>(), ij.at(1).get<std::string>());
        p.remote_events.push_back(std::move(re));
    }
    for (const auto& mj : j.at("metrics")) {
        CompiledMetric m;
        m.name = mj.at("name").get<std::string>();
        const std::string kind = mj.at("kind").get<std::string>();
        if (kind == "count_min") {
            m.kind = MetricKind::CountMin;
            m.epsilon = mj.at("epsilon").get<double>();
            m.delta = mj.at("delta").get<double>();
        } else if (kind == "bloom") {
            m.kind = MetricKind::Bloom;
            m.bloom_bits = mj.at("m").get<uint64_t>();
            m.bloom_hashes = mj.at("khash").get<uint32_t>();
        } else if (kind == "dleft") {
            m.kind = MetricKind::DLeft;
            m.dleft_subtables = mj.at("d").get<uint32_t>();
            m.dleft_buckets = mj.at("b").get<uint32_t>();
            m.dleft_cells = mj.at("c").get<uint32_t>();
        } else {
            throw DecodeError("unknown metric kind '" + kind + "'");
        }
        const json& ks = mj.at("key_source");
        const std::string kk = ks.at("kind").get<std::string>();
        if (kk == "event") {
            m.key_source.kind = KeySource::Kind::EventPrimary;
            m.key_source.event_index = ks.at("event").get<uint32_t>();
        } else if (kk == "secondary") {
            m.key_source.kind = KeySource::Kind::EventSecondary;
            m.key_source.event_index = ks.at("event").get<uint32_t>();
            m.key_source.key_index = ks.at("key").get<uint32_t>();
        } else if (kk == "selectors") {
            m.key_source.kind = KeySource::Kind::Selectors;
            m.key_source.selectors = selector_from_json(ks.at("sel"));
        } else {
            throw DecodeError("unknown key source kind '" + kk + "'");
        }
        if (mj.contains("inc_field")) {
            m.inc.kind = IncSource::Kind::Field;
            auto f = field_by_name(mj.at("inc_field").get<std::string>());
            if (!f) throw DecodeError("unknown inc field");
            m.inc.field = *f;
        } else {
            m.inc.kind = IncSource::Kind::Const;
            m.inc.value = mj.at("inc").get<uint64_t>();
        }
        if (mj.contains("window")) {
            WindowSpec w;
            const json& wj = mj.at("window");
            w.length_ms = wj.at("length_ms").get<uint32_t>();
            w.mode = wj.at("mode").get<std::string>() == "sliding" ? WindowMode::Sliding
                                                                   : WindowMode::PeriodicReset;
            w.panes = wj.at("panes").get<uint32_t>();
            m.window = w;
        }
        p.metrics.push_back(std::move(m));
    }
    for (const auto& fj : j.at("features")) {
        CompiledFeature f;
        f.name = fj.at("name").get<std::string>();
        f.expr = expr_from_json(fj.at("expr"));
        p.features.push_back(std::move(f));
    }
    p.feature_eval_order = j.at("eval_order").get<std::vector<uint32_t>>();
    for (const auto& sj : j.at("states")) {
        CompiledState st;
        st.name = sj.at("name").get<std::string>();
        for (const auto& rj : sj.at("rules")) {
            CompiledRule r;
            r.condition = expr_from_json(rj.at("cond"));
            r.next_state = rj.at("next").get<uint32_t>();
            for (const auto& aj : rj.at("actions")) {
                CompiledAction a;
                const std::string d = aj.at("do").get<std::string>();
                if (d == "publish_alert" || d == "export_features") {
                    a.kind = d == "publish_alert" ? ActionKind::PublishAlert
                                                  : ActionKind::ExportFeatures;
                    a.topic = aj.at("topic").get<std::string>();
                    a.feature_set = aj.at("features").get<std::vector<uint32_t>>();
                } else if (d == "set_register") {
                    a.kind = ActionKind::SetRegister;
                    a.reg_index = aj.at("index").get<uint32_t>();
                    a.value = expr_from_json(aj.at("expr"));
                } else if (d == "schedule_timeout") {
                    a.kind = ActionKind::ScheduleTimeout;
                    a.delay_ms = aj.at("delay_ms").get<uint32_t>();
                    a.tag = aj.at("tag").get<uint32_t>();
                } else if (d == "cancel_timeouts") {
                    a.kind = ActionKind::CancelTimeouts;
                    a.tag = aj.at("tag").get<uint32_t>();
                } else if (d == "reset_metrics") {
                    a.kind = ActionKind::ResetMetrics;
                    a.metrics = aj.at("metrics").get<std::vector<uint32_t>>();
                } else if (d == "drop_entity") {
                    a.kind = ActionKind::DropEntity;
                } else {
                    throw DecodeError("unknown action kind '" + d + "'");
                }
                r.actions.push_back(std::move(a));
            }
            st.rules.push_back(std::move(r));
        }
        p.states.push_back(std::move(st));
    }
    p.initial_state = j.at("initial").get<uint32_t>();
    for (const auto& ej : j.at("exports")) {
        CompiledExport ex;
        ex.name = ej.at("name").get<std::string>();
        ex.topic = ej.at("topic").get<std::string>();
        ex.feature_set = ej.at("features").get<std::vector<uint32_t>>();
        p.exports.push_back(std::move(ex));
    }

    // structural sanity beyond shape
    const uint32_t total_events = p.total_event_count();
    for (const auto& m : p.metrics)
        if (m.key_source.kind != KeySource::Kind::Selectors &&
            m.key_source.event_index >= total_events)
            throw DecodeError("metric key source references an out-of-range event");
    if (!p.states.empty() && p.initial_state >= p.states.size())
        throw DecodeError("initial state index out of range");
    for (const auto& st : p.states)
        for (const auto& r : st.rules)
            if (r.next_state >= p.states.size())
                throw DecodeError("rule transition targets an out-of-range state");
    if (p.feature_eval_order.size() != p.features.size())
        throw DecodeError("feature evaluation order does not cover the feature table");
    return p;
}

}  // namespace

std::string serialize_program(const ProbeProgram& p) {
    const std::string payload = program_to_json(p).dump();
    std::string out;
    out.reserve(payload.size() + 10);
    out.append(kMagic, 4);
    put_be16(out, kFormatVersion);
    put_be32(out, static_cast<uint32_t>(payload.size()));
    out += payload;
    return out;
}

ProbeProgram deserialize_program(std::string_view bytes) {
    if (bytes.size() < 10) throw DecodeError("program container truncated");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DecodeError("bad program magic");
    const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
    const uint16_t ver = get_be16(p + 4);
    if (ver != kFormatVersion)
        throw DecodeError("unsupported program format version " + std::to_string(ver));
    const uint32_t len = get_be32(p + 6);
    if (bytes.size() < 10u + len) throw DecodeError("program payload truncated");
    try {
        json j = json::parse(bytes.substr(10, len));
        return program_from_json(j);
    } catch (const json::exception& e) {
        throw DecodeError(std::string("malformed program record: ") + e.what());
    }
}

}  // namespace dstreamon::dsl
