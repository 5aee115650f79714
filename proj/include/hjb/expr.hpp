#pragma once

// Coefficient expressions: a small recursive-descent parser and a tree
// evaluator over the fixed variable set {x1, x2, d}.
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | power
//   power  := atom ('^' factor)?
//   atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hjb/error.hpp"

namespace hjb {

enum class Var : int { x1 = 0, x2 = 1, d = 2 };

inline constexpr std::array<std::string_view, 3> kVarNames{"x1", "x2", "d"};

/// Values for the free variables of an expression. Unset entries are unbound.
class Bindings {
public:
    Bindings() = default;
    Bindings(std::initializer_list<std::pair<Var, double>> init) {
        for (auto [v, x] : init) set(v, x);
    }

    Bindings& set(Var v, double value) {
        values_[static_cast<int>(v)] = value;
        bound_ |= 1u << static_cast<int>(v);
        return *this;
    }
    bool bound(Var v) const { return (bound_ >> static_cast<int>(v)) & 1u; }
    double get(Var v) const { return values_[static_cast<int>(v)]; }

    static Bindings from_map(const std::map<std::string, double>& m);

private:
    std::array<double, 3> values_{};
    unsigned bound_ = 0;
};

enum class Func { exp, log, sin, cos, abs, min, max, pow };

struct FuncInfo {
    std::string_view name;
    Func func;
    int arity;
};

inline constexpr std::array<FuncInfo, 8> kFunctions{{
    {"exp", Func::exp, 1},
    {"log", Func::log, 1},
    {"sin", Func::sin, 1},
    {"cos", Func::cos, 1},
    {"abs", Func::abs, 1},
    {"min", Func::min, 2},
    {"max", Func::max, 2},
    {"pow", Func::pow, 2},
}};

/// Immutable expression tree. Copies share structure; safe to evaluate from
/// many threads at once.
class Expr {
public:
    enum class Kind { constant, variable, neg, add, sub, mul, div, pow, call };

    struct Node {
        Kind kind{};
        double value = 0.0;             // constant
        Var var{};                      // variable
        Func func{};                    // call
        std::vector<std::shared_ptr<const Node>> args;
    };
    using NodePtr = std::shared_ptr<const Node>;

    Expr() : root_(make_constant(0.0)) {}
    explicit Expr(NodePtr root) : root_(std::move(root)) {}

    static Expr constant(double v) { return Expr(make_constant(v)); }

    const Node& root() const { return *root_; }

    double eval(const Bindings& b) const { return eval_node(*root_, b); }
    double eval(const std::map<std::string, double>& m) const { return eval(Bindings::from_map(m)); }

    std::set<std::string> free_vars() const {
        std::set<std::string> out;
        collect_vars(*root_, out);
        return out;
    }

    /// Fully parenthesised rendering; reparses to a structurally identical tree.
    std::string to_string() const { return print(*root_); }

    bool is_constant() const { return root_->kind == Kind::constant; }
    bool structurally_equal(const Expr& other) const { return equal(*root_, *other.root_); }

private:
    static NodePtr make_constant(double v) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::constant;
        n->value = v;
        return n;
    }

    static std::string format_number(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    static std::string print(const Node& n) {
        switch (n.kind) {
        case Kind::constant: return format_number(n.value);
        case Kind::variable: return std::string(kVarNames[static_cast<int>(n.var)]);
        case Kind::neg: return "(-" + print(*n.args[0]) + ")";
        case Kind::add: return "(" + print(*n.args[0]) + " + " + print(*n.args[1]) + ")";
        case Kind::sub: return "(" + print(*n.args[0]) + " - " + print(*n.args[1]) + ")";
        case Kind::mul: return "(" + print(*n.args[0]) + " * " + print(*n.args[1]) + ")";
        case Kind::div: return "(" + print(*n.args[0]) + " / " + print(*n.args[1]) + ")";
        case Kind::pow: return "(" + print(*n.args[0]) + " ^ " + print(*n.args[1]) + ")";
        case Kind::call: {
            std::string s;
            for (const auto& f : kFunctions)
                if (f.func == n.func) s = std::string(f.name);
            s += "(";
            for (std::size_t i = 0; i < n.args.size(); ++i) {
                if (i) s += ", ";
                s += print(*n.args[i]);
            }
            return s + ")";
        }
        }
        return {};
    }

    static bool equal(const Node& a, const Node& b) {
        if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
        switch (a.kind) {
        case Kind::constant:
            if (std::memcmp(&a.value, &b.value, sizeof(double)) != 0) return false;
            break;
        case Kind::variable:
            if (a.var != b.var) return false;
            break;
        case Kind::call:
            if (a.func != b.func) return false;
            break;
        default: break;
        }
        for (std::size_t i = 0; i < a.args.size(); ++i)
            if (!equal(*a.args[i], *b.args[i])) return false;
        return true;
    }

    static void collect_vars(const Node& n, std::set<std::string>& out) {
        if (n.kind == Kind::variable) out.insert(std::string(kVarNames[static_cast<int>(n.var)]));
        for (const auto& a : n.args) collect_vars(*a, out);
    }

    static double checked(double r, const Node& n) {
        if (!std::isfinite(r)) throw EvalError("non-finite result", print(n));
        return r;
    }

    static double power(double base, double expo, const Node& n) {
        if (base == 0.0 && expo < 0.0) throw EvalError("zero raised to a negative power", print(n));
        if (base < 0.0 && expo != std::floor(expo))
            throw EvalError("negative base with non-integer exponent", print(n));
        return checked(std::pow(base, expo), n);
    }

    static double eval_node(const Node& n, const Bindings& b) {
        switch (n.kind) {
        case Kind::constant: return n.value;
        case Kind::variable:
            if (!b.bound(n.var)) throw EvalError("unbound variable", print(n));
            return b.get(n.var);
        case Kind::neg: return -eval_node(*n.args[0], b);
        case Kind::add: return checked(eval_node(*n.args[0], b) + eval_node(*n.args[1], b), n);
        case Kind::sub: return checked(eval_node(*n.args[0], b) - eval_node(*n.args[1], b), n);
        case Kind::mul: return checked(eval_node(*n.args[0], b) * eval_node(*n.args[1], b), n);
        case Kind::div: {
            const double num = eval_node(*n.args[0], b);
            const double den = eval_node(*n.args[1], b);
            if (den == 0.0) throw EvalError("division by zero", print(n));
            return checked(num / den, n);
        }
        case Kind::pow: return power(eval_node(*n.args[0], b), eval_node(*n.args[1], b), n);
        case Kind::call: {
            const double x = eval_node(*n.args[0], b);
            switch (n.func) {
            case Func::exp: return checked(std::exp(x), n);
            case Func::log:
                if (x <= 0.0) throw EvalError("log of non-positive value", print(n));
                return std::log(x);
            case Func::sin: return std::sin(x);
            case Func::cos: return std::cos(x);
            case Func::abs: return std::fabs(x);
            case Func::min: return std::fmin(x, eval_node(*n.args[1], b));
            case Func::max: return std::fmax(x, eval_node(*n.args[1], b));
            case Func::pow: return power(x, eval_node(*n.args[1], b), n);
            }
        }
        }
        return 0.0;
    }

    NodePtr root_;
};

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr::NodePtr parse_all() {
        auto e = expr();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError("unexpected character '" + std::string(1, src_[pos_]) + "'", pos_);
        return e;
    }

private:
    using Kind = Expr::Kind;
    using NodePtr = Expr::NodePtr;

    static NodePtr node(Kind k, std::vector<NodePtr> args) {
        auto n = std::make_shared<Expr::Node>();
        n->kind = k;
        n->args = std::move(args);
        return n;
    }

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) lhs = node(Kind::add, {lhs, term()});
            else if (accept('-')) lhs = node(Kind::sub, {lhs, term()});
            else return lhs;
        }
    }

    NodePtr term() {
        auto lhs = factor();
        for (;;) {
            if (accept('*')) lhs = node(Kind::mul, {lhs, factor()});
            else if (accept('/')) lhs = node(Kind::div, {lhs, factor()});
            else return lhs;
        }
    }

    NodePtr factor() {
        if (accept('-')) return node(Kind::neg, {factor()});
        return power();
    }

    NodePtr power() {
        auto base = atom();
        if (accept('^')) return node(Kind::pow, {base, factor()});
        return base;
    }

    static bool is_digit(char c) { return c >= '0' && c <= '9'; }
    static bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

    NodePtr atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            auto e = expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        if (is_digit(c) || c == '.') return number();
        if (is_ident_start(c)) return identifier();
        throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
    }

    NodePtr number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        }
        if (pos_ - start == 1 && src_[start] == '.') throw ParseError("malformed number", start);
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (p >= src_.size() || !is_digit(src_[p])) throw ParseError("malformed exponent", pos_);
            while (p < src_.size() && is_digit(src_[p])) ++p;
            pos_ = p;
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc() || ptr != src_.data() + pos_) throw ParseError("malformed number", start);
        auto n = std::make_shared<Expr::Node>();
        n->kind = Kind::constant;
        n->value = v;
        return n;
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);

        skip_ws();
        const bool call = pos_ < src_.size() && src_[pos_] == '(';
        if (!call) {
            for (std::size_t i = 0; i < kVarNames.size(); ++i) {
                if (kVarNames[i] == name) {
                    auto n = std::make_shared<Expr::Node>();
                    n->kind = Kind::variable;
                    n->var = static_cast<Var>(i);
                    return n;
                }
            }
            throw ParseError("unknown identifier '" + std::string(name) + "'", start);
        }
        const FuncInfo* info = nullptr;
        for (const auto& f : kFunctions)
            if (f.name == name) info = &f;
        if (!info) throw ParseError("unknown function '" + std::string(name) + "'", start);
        ++pos_;  // '('
        std::vector<NodePtr> args;
        args.push_back(expr());
        while (accept(',')) args.push_back(expr());
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        if (static_cast<int>(args.size()) != info->arity)
            throw ParseError("function '" + std::string(name) + "' expects " + std::to_string(info->arity) +
                                 " argument(s), got " + std::to_string(args.size()),
                             start);
        auto n = std::make_shared<Expr::Node>();
        n->kind = Kind::call;
        n->func = info->func;
        n->args = std::move(args);
        return n;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse(std::string_view source) { return Expr(detail::Parser(source).parse_all()); }

inline Bindings Bindings::from_map(const std::map<std::string, double>& m) {
    Bindings b;
    for (const auto& [name, value] : m) {
        bool known = false;
        for (std::size_t i = 0; i < kVarNames.size(); ++i) {
            if (kVarNames[i] == name) {
                b.set(static_cast<Var>(i), value);
                known = true;
            }
        }
        if (!known) throw PreconditionError("unknown variable '" + name + "'");
    }
    return b;
}

}  // namespace hjb
