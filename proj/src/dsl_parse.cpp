#include <cctype>
#include <charconv>
#include <cstdlib>
#include <map>

#include "dstreamon/dsl.hpp"

// Document parser for the monitoring-application language: a small XML-like
// element syntax with expressions in conventional infix notation inside
// attribute strings (grammar in docs/dsl.md). Expressions keep symbolic
// names; resolution happens in validate/compile.

namespace dstreamon::dsl {

namespace {

// ---------------------------------------------------------------------------
// Cursor over the raw text with line/column tracking.

struct Cursor {
    std::string_view text;
    size_t pos = 0;
    uint32_t line = 1;
    uint32_t col = 1;

    bool eof() const { return pos >= text.size(); }
    char peek(size_t ahead = 0) const {
        return pos + ahead < text.size() ? text[pos + ahead] : '\0';
    }
    bool starts_with(std::string_view s) const { return text.substr(pos, s.size()) == s; }

    char advance() {
        char c = text[pos++];
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        return c;
    }
    void advance_n(size_t n) {
        for (size_t i = 0; i < n && !eof(); ++i) advance();
    }
    SourceLoc loc() const { return {line, col}; }
};

[[noreturn]] void fail(SourceLoc loc, std::string msg, std::string expected = "") {
    throw SyntaxError(loc, std::move(msg), std::move(expected));
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// ---------------------------------------------------------------------------
// Expression parser. Runs over the raw attribute substring so that source
// locations stay exact; XML entities (&lt; etc.) are handled by the lexer.

struct ExprParser {
    Cursor cur;
    int depth = 0;

    explicit ExprParser(std::string_view text, SourceLoc origin) {
        cur.text = text;
        cur.line = origin.line;
        cur.col = origin.col;
    }

    void skip_ws() {
        while (!cur.eof() && std::isspace(static_cast<unsigned char>(cur.peek()))) cur.advance();
    }

    // Decodes a leading entity to its character, if present.
    // Returns '\0' if the next input is not an entity.
    char peek_entity(size_t* len) const {
        if (cur.peek() != '&') return '\0';
        struct Ent {
            const char* name;
            char c;
        };
        static const Ent ents[] = {
            {"&lt;", '<'}, {"&gt;", '>'}, {"&amp;", '&'}, {"&quot;", '"'}, {"&apos;", '\''}};
        for (const auto& e : ents) {
            if (cur.starts_with(e.name)) {
                *len = std::char_traits<char>::length(e.name);
                return e.c;
            }
        }
        return '\0';
    }

    // Looks at the next logical character (entity-decoded).
    char peek_logical(size_t* raw_len) const {
        size_t elen = 0;
        char e = peek_entity(&elen);
        if (e != '\0') {
            *raw_len = elen;
            return e;
        }
        *raw_len = cur.eof() ? 0 : 1;
        return cur.peek();
    }

    bool eat_logical(char want) {
        size_t len = 0;
        if (peek_logical(&len) != want || len == 0) return false;
        cur.advance_n(len);
        return true;
    }

    struct DepthGuard {
        ExprParser* p;
        explicit DepthGuard(ExprParser* pp) : p(pp) {
            if (++p->depth > features::kMaxExprDepth)
                fail(p->cur.loc(), "expression nesting exceeds depth limit");
        }
        ~DepthGuard() { --p->depth; }
    };

    Expr parse_or() {
        DepthGuard g(this);
        Expr lhs = parse_and();
        for (;;) {
            skip_ws();
            if (!match_keyword("or")) return lhs;
            Expr node;
            node.kind = features::ExprKind::Logic;
            node.op = static_cast<uint8_t>(features::LogOp::Or);
            node.loc = lhs.loc;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_and());
            lhs = std::move(node);
        }
    }

    Expr parse_and() {
        DepthGuard g(this);
        Expr lhs = parse_not();
        for (;;) {
            skip_ws();
            if (!match_keyword("and")) return lhs;
            Expr node;
            node.kind = features::ExprKind::Logic;
            node.op = static_cast<uint8_t>(features::LogOp::And);
            node.loc = lhs.loc;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_not());
            lhs = std::move(node);
        }
    }

    Expr parse_not() {
        DepthGuard g(this);
        skip_ws();
        SourceLoc loc = cur.loc();
        if (match_keyword("not")) {
            Expr node;
            node.kind = features::ExprKind::Unary;
            node.op = static_cast<uint8_t>(features::UnOp::Not);
            node.loc = loc;
            node.children.push_back(parse_not());
            return node;
        }
        return parse_compare();
    }

    Expr parse_compare() {
        DepthGuard g(this);
        Expr lhs = parse_bits();
        skip_ws();
        size_t len = 0;
        char c = peek_logical(&len);
        features::CmpOp op;
        bool found = true;
        SourceLoc loc = cur.loc();
        if (c == '<') {
            cur.advance_n(len);
            op = eat_logical('=') ? features::CmpOp::Le : features::CmpOp::Lt;
        } else if (c == '>') {
            cur.advance_n(len);
            op = eat_logical('=') ? features::CmpOp::Ge : features::CmpOp::Gt;
        } else if (c == '=' && cur.peek(1) == '=') {
            cur.advance_n(2);
            op = features::CmpOp::Eq;
        } else if (c == '!' && cur.peek(1) == '=') {
            cur.advance_n(2);
            op = features::CmpOp::Ne;
        } else {
            found = false;
            op = features::CmpOp::Eq;
        }
        if (!found) return lhs;
        Expr node;
        node.kind = features::ExprKind::Compare;
        node.op = static_cast<uint8_t>(op);
        node.loc = loc;
        node.children.push_back(std::move(lhs));
        node.children.push_back(parse_bits());
        return node;
    }

    Expr parse_bits() {
        DepthGuard g(this);
        Expr lhs = parse_add();
        for (;;) {
            skip_ws();
            size_t len = 0;
            char c = peek_logical(&len);
            features::BinOp op;
            if (c == '&')
                op = features::BinOp::BitAnd;
            else if (c == '|')
                op = features::BinOp::BitOr;
            else
                return lhs;
            SourceLoc loc = cur.loc();
            cur.advance_n(len);
            Expr node;
            node.kind = features::ExprKind::Binary;
            node.op = static_cast<uint8_t>(op);
            node.loc = loc;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_add());
            lhs = std::move(node);
        }
    }

    Expr parse_add() {
        DepthGuard g(this);
        Expr lhs = parse_mul();
        for (;;) {
            skip_ws();
            char c = cur.peek();
            if (c != '+' && c != '-') return lhs;
            SourceLoc loc = cur.loc();
            cur.advance();
            Expr node;
            node.kind = features::ExprKind::Binary;
            node.op = static_cast<uint8_t>(c == '+' ? features::BinOp::Add : features::BinOp::Sub);
            node.loc = loc;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_mul());
            lhs = std::move(node);
        }
    }

    Expr parse_mul() {
        DepthGuard g(this);
        Expr lhs = parse_unary();
        for (;;) {
            skip_ws();
            char c = cur.peek();
            if (c != '*' && c != '/') return lhs;
            SourceLoc loc = cur.loc();
            cur.advance();
            Expr node;
            node.kind = features::ExprKind::Binary;
            node.op = static_cast<uint8_t>(c == '*' ? features::BinOp::Mul : features::BinOp::Div);
            node.loc = loc;
            node.children.push_back(std::move(lhs));
            node.children.push_back(parse_unary());
            lhs = std::move(node);
        }
    }

    Expr parse_unary() {
        DepthGuard g(this);
        skip_ws();
        if (cur.peek() == '-') {
            SourceLoc loc = cur.loc();
            cur.advance();
            Expr node;
            node.kind = features::ExprKind::Unary;
            node.op = static_cast<uint8_t>(features::UnOp::Neg);
            node.loc = loc;
            node.children.push_back(parse_unary());
            return node;
        }
        return parse_primary();
    }

    Expr parse_primary() {
        DepthGuard g(this);
        skip_ws();
        SourceLoc loc = cur.loc();
        if (cur.eof()) fail(loc, "unexpected end of expression", "value");
        char c = cur.peek();

        if (c == '(') {
            cur.advance();
            Expr inner = parse_or();
            skip_ws();
            if (cur.peek() != ')') fail(cur.loc(), "expected ')'", ")");
            cur.advance();
            return inner;
        }

        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && std::isdigit(static_cast<unsigned char>(cur.peek(1)))))
            return parse_number(loc);

        if (is_ident_start(c)) return parse_ident_like(loc);

        fail(loc, std::string("unexpected character '") + c + "' in expression", "value");
    }

    Expr parse_number(SourceLoc loc) {
        size_t start = cur.pos;
        if (cur.peek() == '0' && (cur.peek(1) == 'x' || cur.peek(1) == 'X')) {
            cur.advance_n(2);
            size_t digits = 0;
            while (std::isxdigit(static_cast<unsigned char>(cur.peek()))) {
                cur.advance();
                ++digits;
            }
            if (digits == 0) fail(cur.loc(), "expected hex digits after 0x");
            uint64_t v = std::strtoull(std::string(cur.text.substr(start + 2, digits)).c_str(), nullptr, 16);
            Expr node;
            node.kind = features::ExprKind::Number;
            node.num = static_cast<double>(v);
            node.loc = loc;
            return node;
        }
        while (std::isdigit(static_cast<unsigned char>(cur.peek()))) cur.advance();
        if (cur.peek() == '.' && std::isdigit(static_cast<unsigned char>(cur.peek(1)))) {
            cur.advance();
            while (std::isdigit(static_cast<unsigned char>(cur.peek()))) cur.advance();
        }
        if (cur.peek() == 'e' || cur.peek() == 'E') {
            size_t mark = cur.pos;
            cur.advance();
            if (cur.peek() == '+' || cur.peek() == '-') cur.advance();
            if (!std::isdigit(static_cast<unsigned char>(cur.peek()))) {
                // not an exponent; rewind is safe because no newlines passed
                cur.col -= static_cast<uint32_t>(cur.pos - mark);
                cur.pos = mark;
            } else {
                while (std::isdigit(static_cast<unsigned char>(cur.peek()))) cur.advance();
            }
        }
        std::string token(cur.text.substr(start, cur.pos - start));
        Expr node;
        node.kind = features::ExprKind::Number;
        node.num = std::strtod(token.c_str(), nullptr);
        node.loc = loc;
        return node;
    }

    Expr parse_ident_like(SourceLoc loc) {
        std::string name = read_ident();

        if (name == "true" || name == "false") {
            Expr node;
            node.kind = features::ExprKind::BoolConst;
            node.bval = (name == "true");
            node.loc = loc;
            return node;
        }

        // reg[i]
        if (name == "reg" && cur.peek() == '[') {
            cur.advance();
            skip_ws();
            if (!std::isdigit(static_cast<unsigned char>(cur.peek())))
                fail(cur.loc(), "expected register index", "integer");
            uint32_t idx = 0;
            while (std::isdigit(static_cast<unsigned char>(cur.peek())))
                idx = idx * 10 + static_cast<uint32_t>(cur.advance() - '0');
            skip_ws();
            if (cur.peek() != ']') fail(cur.loc(), "expected ']'", "]");
            cur.advance();
            Expr node;
            node.kind = features::ExprKind::Register;
            node.index = idx;
            node.loc = loc;
            return node;
        }

        // dotted selector / input reference
        if (cur.peek() == '.') {
            while (cur.peek() == '.') {
                cur.advance();
                if (!is_ident_start(cur.peek())) fail(cur.loc(), "expected identifier after '.'");
                name += '.';
                name += read_ident();
            }
            Expr node;
            node.kind = features::ExprKind::Dotted;
            node.name = std::move(name);
            node.loc = loc;
            return node;
        }

        // call
        if (cur.peek() == '(') {
            cur.advance();
            Expr node;
            node.kind = features::ExprKind::Call;
            node.name = std::move(name);
            node.loc = loc;
            skip_ws();
            if (cur.peek() == ')') {
                cur.advance();
                return node;
            }
            for (;;) {
                node.children.push_back(parse_or());
                skip_ws();
                if (cur.peek() == ',') {
                    cur.advance();
                    continue;
                }
                if (cur.peek() == ')') {
                    cur.advance();
                    return node;
                }
                fail(cur.loc(), "expected ',' or ')' in argument list", ", )");
            }
        }

        Expr node;
        node.kind = features::ExprKind::Ident;
        node.name = std::move(name);
        node.loc = loc;
        return node;
    }

    std::string read_ident() {
        std::string s;
        while (is_ident_char(cur.peek())) s += cur.advance();
        return s;
    }

    // Consumes the keyword only when it is a whole identifier.
    bool match_keyword(std::string_view kw) {
        if (!cur.starts_with(kw)) return false;
        if (cur.pos > 0 && is_ident_char(cur.text[cur.pos - 1])) return false;
        char after = cur.peek(kw.size());
        if (is_ident_char(after)) return false;
        cur.advance_n(kw.size());
        return true;
    }

    Expr run() {
        Expr e = parse_or();
        skip_ws();
        if (!cur.eof())
            fail(cur.loc(), std::string("unexpected trailing input in expression: '") +
                                cur.peek() + "'");
        return e;
    }
};

// ---------------------------------------------------------------------------
// Generic element tree.

struct Attr {
    std::string name;
    std::string value;      // entity-decoded
    std::string raw_value;  // exactly as written (for expressions)
    SourceLoc value_loc;
    SourceLoc loc;
};

struct Element {
    std::string name;
    std::vector<Attr> attrs;
    std::vector<Element> children;
    SourceLoc loc;

    const Attr* find(std::string_view attr_name) const {
        for (const auto& a : attrs)
            if (a.name == attr_name) return &a;
        return nullptr;
    }
};

struct DocParser {
    Cursor cur;

    explicit DocParser(std::string_view text) { cur.text = text; }

    void skip_ws_comments() {
        for (;;) {
            while (!cur.eof() && std::isspace(static_cast<unsigned char>(cur.peek()))) cur.advance();
            if (cur.starts_with("<!--")) {
                SourceLoc start = cur.loc();
                cur.advance_n(4);
                while (!cur.eof() && !cur.starts_with("-->")) cur.advance();
                if (cur.eof()) fail(start, "unterminated comment opened at line " + std::to_string(start.line));
                cur.advance_n(3);
                continue;
            }
            return;
        }
    }

    std::string read_name() {
        if (!is_ident_start(cur.peek())) fail(cur.loc(), "expected name", "identifier");
        std::string s;
        while (is_ident_char(cur.peek())) s += cur.advance();
        return s;
    }

    std::string decode_entities(std::string_view raw, SourceLoc loc) {
        std::string out;
        for (size_t i = 0; i < raw.size();) {
            if (raw[i] == '&') {
                struct Ent {
                    const char* name;
                    char c;
                };
                static const Ent ents[] = {{"&lt;", '<'},
                                           {"&gt;", '>'},
                                           {"&amp;", '&'},
                                           {"&quot;", '"'},
                                           {"&apos;", '\''}};
                bool matched = false;
                for (const auto& e : ents) {
                    size_t n = std::char_traits<char>::length(e.name);
                    if (raw.substr(i, n) == e.name) {
                        out.push_back(e.c);
                        i += n;
                        matched = true;
                        break;
                    }
                }
                if (matched) continue;
                // tolerate a bare ampersand (expressions use it for bit-and)
            }
            out.push_back(raw[i++]);
        }
        (void)loc;
        return out;
    }

    Element parse_element() {
        SourceLoc start = cur.loc();
        if (cur.peek() != '<') fail(start, "expected '<'", "<");
        cur.advance();
        Element el;
        el.loc = start;
        el.name = read_name();

        for (;;) {
            skip_inline_ws();
            if (cur.eof())
                fail(start, "unclosed element '" + el.name + "' opened at line " +
                                std::to_string(start.line));
            if (cur.starts_with("/>")) {
                cur.advance_n(2);
                return el;
            }
            if (cur.peek() == '>') {
                cur.advance();
                parse_content(el, start);
                return el;
            }
            // attribute
            Attr a;
            a.loc = cur.loc();
            a.name = read_name();
            skip_inline_ws();
            if (cur.peek() != '=') fail(cur.loc(), "expected '=' after attribute name", "=");
            cur.advance();
            skip_inline_ws();
            char quote = cur.peek();
            if (quote != '"' && quote != '\'')
                fail(cur.loc(), "expected quoted attribute value", "\" or '");
            cur.advance();
            a.value_loc = cur.loc();
            size_t vstart = cur.pos;
            while (!cur.eof() && cur.peek() != quote) {
                if (cur.peek() == '\n')
                    fail(a.value_loc, "unterminated attribute value for '" + a.name + "'");
                cur.advance();
            }
            if (cur.eof()) fail(a.value_loc, "unterminated attribute value for '" + a.name + "'");
            a.raw_value = std::string(cur.text.substr(vstart, cur.pos - vstart));
            a.value = decode_entities(a.raw_value, a.value_loc);
            cur.advance();  // closing quote
            if (el.find(a.name))
                fail(a.loc, "duplicate attribute '" + a.name + "' on element '" + el.name + "'");
            el.attrs.push_back(std::move(a));
        }
    }

    void parse_content(Element& el, SourceLoc start) {
        for (;;) {
            skip_ws_comments();
            if (cur.eof())
                fail(start, "unclosed element '" + el.name + "' opened at line " +
                                std::to_string(start.line));
            if (cur.starts_with("</")) {
                SourceLoc close_loc = cur.loc();
                cur.advance_n(2);
                std::string close_name = read_name();
                skip_inline_ws();
                if (cur.peek() != '>') fail(cur.loc(), "expected '>'", ">");
                cur.advance();
                if (close_name != el.name)
                    fail(close_loc, "mismatched closing tag '" + close_name + "', element '" +
                                        el.name + "' opened at line " + std::to_string(start.line));
                return;
            }
            if (cur.peek() == '<') {
                el.children.push_back(parse_element());
                continue;
            }
            fail(cur.loc(), "unexpected text content inside element '" + el.name + "'");
        }
    }

    void skip_inline_ws() {
        while (!cur.eof() && std::isspace(static_cast<unsigned char>(cur.peek()))) cur.advance();
    }

    Element run() {
        skip_ws_comments();
        if (cur.eof()) fail(cur.loc(), "empty document", "<app>");
        Element root = parse_element();
        skip_ws_comments();
        if (!cur.eof()) fail(cur.loc(), "unexpected content after root element");
        return root;
    }
};

// ---------------------------------------------------------------------------
// Element tree -> AppSpec, with schema checks.

const Attr& require_attr(const Element& el, std::string_view name) {
    const Attr* a = el.find(name);
    if (!a)
        fail(el.loc, "element '" + el.name + "' requires attribute '" + std::string(name) + "'");
    return *a;
}

void reject_unknown_attrs(const Element& el, std::initializer_list<std::string_view> allowed) {
    for (const auto& a : el.attrs) {
        bool ok = false;
        for (auto n : allowed)
            if (a.name == n) ok = true;
        if (!ok) fail(a.loc, "unknown attribute '" + a.name + "' on element '" + el.name + "'");
    }
}

void reject_children(const Element& el) {
    if (!el.children.empty())
        fail(el.children.front().loc, "element '" + el.name + "' takes no child elements");
}

uint64_t parse_uint_attr(const Attr& a, const Element& el) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(a.value.data(), a.value.data() + a.value.size(), v);
    if (ec != std::errc() || p != a.value.data() + a.value.size())
        fail(a.value_loc, "attribute '" + a.name + "' of '" + el.name +
                              "' must be a non-negative integer, got '" + a.value + "'");
    return v;
}

double parse_real_attr(const Attr& a, const Element& el) {
    char* end = nullptr;
    std::string s(a.value);
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        fail(a.value_loc, "attribute '" + a.name + "' of '" + el.name +
                              "' must be a number, got '" + a.value + "'");
    return v;
}

Expr parse_expr_attr(const Attr& a) {
    ExprParser p(a.raw_value, a.value_loc);
    return p.run();
}

std::vector<std::string> split_csv(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == ',' || s[i] == '\t')) ++i;
        size_t start = i;
        while (i < s.size() && s[i] != ',' ) ++i;
        size_t end = i;
        while (end > start && (s[end - 1] == ' ' || s[end - 1] == '\t')) --end;
        if (end > start) out.emplace_back(s.substr(start, end - start));
    }
    return out;
}

KeyDecl parse_key(const Element& el) {
    reject_unknown_attrs(el, {"name", "fields", "normalize"});
    reject_children(el);
    KeyDecl k;
    k.loc = el.loc;
    if (const Attr* a = el.find("name")) k.name = a->value;
    k.fields = split_csv(require_attr(el, "fields").value);
    if (const Attr* a = el.find("normalize")) {
        if (a->value == "bidirectional")
            k.bidirectional = true;
        else if (a->value != "none")
            fail(a->value_loc, "normalize must be 'bidirectional' or 'none'");
    }
    return k;
}

EventDecl parse_event(const Element& el) {
    reject_unknown_attrs(el, {"name", "match"});
    EventDecl ev;
    ev.loc = el.loc;
    ev.name = require_attr(el, "name").value;
    ev.match = parse_expr_attr(require_attr(el, "match"));
    for (const auto& child : el.children) {
        if (child.name != "key")
            fail(child.loc, "unexpected element '" + child.name + "' inside 'event'");
        ev.keys.push_back(parse_key(child));
    }
    return ev;
}

MetricDecl parse_metric(const Element& el) {
    reject_unknown_attrs(el, {"name", "kind", "key", "inc", "epsilon", "delta", "m", "k", "d",
                              "b", "c"});
    MetricDecl m;
    m.loc = el.loc;
    m.name = require_attr(el, "name").value;
    m.kind = require_attr(el, "kind").value;
    m.key_source = require_attr(el, "key").value;
    if (const Attr* a = el.find("inc")) m.inc = a->value;
    if (const Attr* a = el.find("epsilon")) {
        m.has_epsilon = true;
        m.epsilon = parse_real_attr(*a, el);
    }
    if (const Attr* a = el.find("delta")) {
        m.has_delta = true;
        m.delta = parse_real_attr(*a, el);
    }
    if (const Attr* a = el.find("m")) {
        m.has_bloom_m = true;
        m.bloom_m = parse_uint_attr(*a, el);
    }
    if (const Attr* a = el.find("k")) {
        m.has_bloom_k = true;
        m.bloom_k = static_cast<uint32_t>(parse_uint_attr(*a, el));
    }
    if (const Attr* a = el.find("d")) {
        m.has_dleft_d = true;
        m.dleft_d = static_cast<uint32_t>(parse_uint_attr(*a, el));
    }
    if (const Attr* a = el.find("b")) {
        m.has_dleft_b = true;
        m.dleft_b = static_cast<uint32_t>(parse_uint_attr(*a, el));
    }
    if (const Attr* a = el.find("c")) {
        m.has_dleft_c = true;
        m.dleft_c = static_cast<uint32_t>(parse_uint_attr(*a, el));
    }
    for (const auto& child : el.children) {
        if (child.name != "window")
            fail(child.loc, "unexpected element '" + child.name + "' inside 'metric'");
        if (m.window) fail(child.loc, "metric '" + m.name + "' declares multiple windows");
        reject_unknown_attrs(child, {"length_ms", "mode", "panes"});
        reject_children(child);
        WindowSpec w;
        w.length_ms = static_cast<uint32_t>(parse_uint_attr(require_attr(child, "length_ms"), child));
        const Attr& mode = require_attr(child, "mode");
        if (mode.value == "periodic_reset")
            w.mode = WindowMode::PeriodicReset;
        else if (mode.value == "sliding")
            w.mode = WindowMode::Sliding;
        else
            fail(mode.value_loc, "window mode must be 'periodic_reset' or 'sliding'");
        if (const Attr* a = child.find("panes"))
            w.panes = static_cast<uint32_t>(parse_uint_attr(*a, child));
        m.window = w;
    }
    return m;
}

ActionDecl parse_action(const Element& el) {
    reject_unknown_attrs(el, {"do", "topic", "export", "features", "index", "expr", "delay_ms",
                              "tag", "metrics"});
    reject_children(el);
    ActionDecl a;
    a.loc = el.loc;
    a.kind = require_attr(el, "do").value;
    if (const Attr* at = el.find("topic")) a.topic = at->value;
    if (const Attr* at = el.find("export")) a.export_ref = at->value;
    if (const Attr* at = el.find("features")) {
        a.has_features = true;
        a.features_csv = at->value;
    }
    if (const Attr* at = el.find("metrics")) a.metrics_csv = at->value;
    if (const Attr* at = el.find("index")) {
        a.has_reg_index = true;
        a.reg_index = static_cast<uint32_t>(parse_uint_attr(*at, el));
    }
    if (const Attr* at = el.find("expr")) {
        a.has_value = true;
        a.value = parse_expr_attr(*at);
    }
    if (const Attr* at = el.find("delay_ms")) {
        a.has_delay = true;
        a.delay_ms = static_cast<uint32_t>(parse_uint_attr(*at, el));
    }
    if (const Attr* at = el.find("tag")) {
        a.has_tag = true;
        a.tag = static_cast<uint32_t>(parse_uint_attr(*at, el));
    }
    return a;
}

StateDecl parse_state(const Element& el) {
    reject_unknown_attrs(el, {"name"});
    StateDecl st;
    st.loc = el.loc;
    st.name = require_attr(el, "name").value;
    for (const auto& child : el.children) {
        if (child.name != "rule")
            fail(child.loc, "unexpected element '" + child.name + "' inside 'state'");
        reject_unknown_attrs(child, {"when", "next"});
        RuleDecl r;
        r.loc = child.loc;
        r.condition = parse_expr_attr(require_attr(child, "when"));
        if (const Attr* a = child.find("next")) r.next_state = a->value;
        for (const auto& act : child.children) {
            if (act.name != "action")
                fail(act.loc, "unexpected element '" + act.name + "' inside 'rule'");
            r.actions.push_back(parse_action(act));
        }
        st.rules.push_back(std::move(r));
    }
    return st;
}

RemoteEventDecl parse_remote_event(const Element& el) {
    reject_unknown_attrs(el, {"name", "topic", "key"});
    RemoteEventDecl re;
    re.loc = el.loc;
    re.name = require_attr(el, "name").value;
    re.topic_pattern = require_attr(el, "topic").value;
    re.key_field = require_attr(el, "key").value;
    for (const auto& child : el.children) {
        if (child.name != "input")
            fail(child.loc, "unexpected element '" + child.name + "' inside 'remote_event'");
        reject_unknown_attrs(child, {"name", "field"});
        reject_children(child);
        re.inputs.emplace_back(require_attr(child, "name").value,
                               require_attr(child, "field").value);
    }
    return re;
}

ExportDecl parse_export(const Element& el) {
    reject_unknown_attrs(el, {"name", "topic", "features"});
    reject_children(el);
    ExportDecl ex;
    ex.loc = el.loc;
    ex.name = require_attr(el, "name").value;
    ex.topic = require_attr(el, "topic").value;
    if (const Attr* a = el.find("features")) ex.features_csv = a->value;
    return ex;
}

}  // namespace

Expr parse_expression(std::string_view text, SourceLoc start_loc) {
    ExprParser p(text, start_loc);
    return p.run();
}

AppSpec parse(std::string_view text) {
    DocParser doc(text);
    Element root = doc.run();
    if (root.name != "app") fail(root.loc, "root element must be 'app', got '" + root.name + "'");
    reject_unknown_attrs(root, {"name", "initial", "registers", "seed"});

    AppSpec spec;
    spec.loc = root.loc;
    spec.name = require_attr(root, "name").value;
    spec.initial_state = require_attr(root, "initial").value;
    if (const Attr* a = root.find("registers"))
        spec.register_count = static_cast<uint32_t>(parse_uint_attr(*a, root));
    if (const Attr* a = root.find("seed")) spec.hash_seed = parse_uint_attr(*a, root);

    for (const auto& child : root.children) {
        if (child.name == "event")
            spec.events.push_back(parse_event(child));
        else if (child.name == "metric")
            spec.metrics.push_back(parse_metric(child));
        else if (child.name == "feature") {
            reject_unknown_attrs(child, {"name", "expr"});
            reject_children(child);
            FeatureDecl f;
            f.loc = child.loc;
            f.name = require_attr(child, "name").value;
            f.expr = parse_expr_attr(require_attr(child, "expr"));
            spec.features.push_back(std::move(f));
        } else if (child.name == "state")
            spec.states.push_back(parse_state(child));
        else if (child.name == "export")
            spec.exports.push_back(parse_export(child));
        else if (child.name == "remote_event")
            spec.remote_events.push_back(parse_remote_event(child));
        else
            fail(child.loc, "unexpected element '" + child.name + "' inside 'app'");
    }
    return spec;
}

}  // namespace dstreamon::dsl
