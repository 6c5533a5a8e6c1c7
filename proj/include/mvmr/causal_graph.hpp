#pragma once

#include "mvmr/error.hpp"
#include "mvmr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mvmr {

enum class EdgeKind { Directed, Bidirected };

/// An edge by node index. Directed edges run `from -> to`; bidirected edges
/// are stored with `from < to`.
struct Edge {
    int from = 0;
    int to = 0;
    EdgeKind kind = EdgeKind::Directed;

    friend bool operator==(const Edge&, const Edge&) = default;
};

class CausalDiagram {
public:
    int add_node(const std::string& name) {
        if (name.empty()) fail(ErrorKind::Argument, "empty node name");
        if (index_.count(name)) fail(ErrorKind::Argument, "duplicate node '" + name + "'");
        const int id = static_cast<int>(names_.size());
        names_.push_back(name);
        index_.emplace(name, id);
        out_.emplace_back();
        in_.emplace_back();
        bi_.emplace_back();
        return id;
    }

    /// Returns the index of `name`, creating the node if needed.
    int ensure_node(const std::string& name) {
        auto it = index_.find(name);
        return it != index_.end() ? it->second : add_node(name);
    }

    int index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorKind::Lookup, "unknown node '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& nodes() const { return names_; }
    int size() const { return static_cast<int>(names_.size()); }

    /// Adds `from -> to`. Rejects self-loops, duplicates and edges closing a cycle.
    void add_directed(int from, int to) {
        check_id(from);
        check_id(to);
        if (from == to) fail(ErrorKind::Argument, "self-loop on '" + name(from) + "'");
        if (has_directed(from, to))
            fail(ErrorKind::Argument, "duplicate edge " + name(from) + " -> " + name(to));
        if (reaches(to, from))
            fail(ErrorKind::StructuralCycle, "edge " + name(from) + " -> " + name(to) + " closes a cycle");
        out_[from].push_back(to);
        in_[to].push_back(from);
        directed_.push_back({from, to, EdgeKind::Directed});
    }

    void add_bidirected(int a, int b) {
        check_id(a);
        check_id(b);
        if (a == b) fail(ErrorKind::Argument, "bidirected self-loop on '" + name(a) + "'");
        if (has_bidirected(a, b))
            fail(ErrorKind::Argument, "duplicate bidirected edge " + name(a) + " <-> " + name(b));
        bi_[a].push_back(b);
        bi_[b].push_back(a);
        bidirected_.push_back({std::min(a, b), std::max(a, b), EdgeKind::Bidirected});
    }

    void add_directed(const std::string& from, const std::string& to) {
        add_directed(index_of(from), index_of(to));
    }
    void add_bidirected(const std::string& a, const std::string& b) {
        add_bidirected(index_of(a), index_of(b));
    }

    bool has_directed(int from, int to) const {
        const auto& o = out_.at(static_cast<std::size_t>(from));
        return std::find(o.begin(), o.end(), to) != o.end();
    }
    bool has_bidirected(int a, int b) const {
        const auto& o = bi_.at(static_cast<std::size_t>(a));
        return std::find(o.begin(), o.end(), b) != o.end();
    }

    const std::vector<int>& children(int id) const { return out_.at(static_cast<std::size_t>(id)); }
    const std::vector<int>& parents(int id) const { return in_.at(static_cast<std::size_t>(id)); }
    const std::vector<int>& siblings(int id) const { return bi_.at(static_cast<std::size_t>(id)); }
    const std::vector<Edge>& directed_edges() const { return directed_; }
    const std::vector<Edge>& bidirected_edges() const { return bidirected_; }

    /// Kahn ordering; ties resolved by node index so the result is deterministic.
    std::vector<int> topological_order() const {
        std::vector<int> indeg(names_.size(), 0);
        for (const auto& e : directed_) ++indeg[static_cast<std::size_t>(e.to)];
        std::set<int> ready;
        for (int i = 0; i < size(); ++i)
            if (indeg[static_cast<std::size_t>(i)] == 0) ready.insert(i);
        std::vector<int> order;
        while (!ready.empty()) {
            const int v = *ready.begin();
            ready.erase(ready.begin());
            order.push_back(v);
            for (int w : out_[static_cast<std::size_t>(v)])
                if (--indeg[static_cast<std::size_t>(w)] == 0) ready.insert(w);
        }
        if (static_cast<int>(order.size()) != size()) fail(ErrorKind::StructuralCycle, "directed cycle");
        return order;
    }

    /// Descendants of `id` including itself.
    std::vector<bool> descendants(int id) const { return closure(id, out_); }
    /// Ancestors of `id` including itself.
    std::vector<bool> ancestors(int id) const { return closure(id, in_); }

private:
    void check_id(int id) const {
        if (id < 0 || id >= size()) fail(ErrorKind::Lookup, "node index out of range");
    }

    bool reaches(int from, int to) const { return closure(from, out_)[static_cast<std::size_t>(to)]; }

    std::vector<bool> closure(int id, const std::vector<std::vector<int>>& adj) const {
        std::vector<bool> seen(names_.size(), false);
        std::vector<int> stack{id};
        seen[static_cast<std::size_t>(id)] = true;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : adj[static_cast<std::size_t>(v)])
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = true;
                    stack.push_back(w);
                }
        }
        return seen;
    }

    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::vector<int>> out_, in_, bi_;
    std::vector<Edge> directed_, bidirected_;
};

/// Linear SEM parameters. `coefficients(i, j)` is the direct effect of node j on node i.
struct SemParameters {
    Matrix coefficients;
    Matrix error_cov;
};

/// Checks that `sem` matches the diagram structure and is a valid parameterization.
inline void validate_sem(const CausalDiagram& g, const SemParameters& sem) {
    const int p = g.size();
    if (sem.coefficients.rows() != p || sem.coefficients.cols() != p || sem.error_cov.rows() != p ||
        sem.error_cov.cols() != p)
        fail(ErrorKind::Argument, "SEM dimensions do not match diagram");
    if (!sem.coefficients.allFinite() || !sem.error_cov.allFinite())
        fail(ErrorKind::Argument, "non-finite SEM parameter");
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            if ((sem.coefficients(i, j) != 0.0) != g.has_directed(j, i))
                fail(ErrorKind::Argument, "coefficient pattern disagrees with edge " + g.name(j) + " -> " + g.name(i));
            if (i != j && (sem.error_cov(i, j) != 0.0) != g.has_bidirected(i, j))
                fail(ErrorKind::Argument, "error covariance pattern disagrees with " + g.name(i) + " <-> " + g.name(j));
        }
    if (!is_symmetric(sem.error_cov, 0.0)) fail(ErrorKind::Argument, "error covariance not symmetric");
    for (int i = 0; i < p; ++i)
        if (!(sem.error_cov(i, i) > 0.0)) fail(ErrorKind::Argument, "non-positive error variance for " + g.name(i));
    if (min_eigenvalue(sem.error_cov) < -1e-10) fail(ErrorKind::Argument, "error covariance not positive semidefinite");
}

/// Σ = (I - C)^{-1} Ψ (I - C)^{-T}.
inline Matrix implied_covariance(const SemParameters& sem) {
    const Eigen::Index p = sem.coefficients.rows();
    const Matrix IminusC = Matrix::Identity(p, p) - sem.coefficients;
    Eigen::FullPivLU<Matrix> lu(IminusC);
    if (p > 0 && !lu.isInvertible()) fail(ErrorKind::StructuralCycle, "(I - C) is singular");
    const Matrix B = lu.inverse();
    Matrix sigma = B * sem.error_cov * B.transpose();
    return (sigma + sigma.transpose()) / 2.0;
}

/// Diagram plus parameters, as read from the text format.
struct DiagramSpec {
    CausalDiagram diagram;
    SemParameters sem;
};

namespace detail {

inline double parse_value(const std::string& tok, int line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
}

} // namespace detail

/// Parses the line-oriented diagram format:
///
///     node A
///     edge A -> B 0.5
///     bicov A <-> B 0.3
///     var A 1.0
///
/// `#` starts a comment. Nodes without a `var` line get the error variance
/// that gives them unit implied variance.
inline DiagramSpec parse_diagram(std::istream& in) {
    struct Pending {
        std::string a, b;
        double v;
        int line;
    };
    std::vector<std::string> order;
    std::set<std::string> seen_nodes;
    auto note_node = [&](const std::string& n) {
        if (seen_nodes.insert(n).second) order.push_back(n);
    };
    std::vector<Pending> edges, bicovs;
    std::map<std::string, double> vars;
    std::set<std::pair<std::string, std::string>> edge_keys, bicov_keys;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ss(line);
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (tok[0] == "node" && tok.size() == 2) {
            if (seen_nodes.count(tok[1])) fail(ErrorKind::Format, where + "duplicate node '" + tok[1] + "'");
            note_node(tok[1]);
        } else if (tok[0] == "edge" && tok.size() == 5 && tok[2] == "->") {
            if (!edge_keys.insert({tok[1], tok[3]}).second)
                fail(ErrorKind::Format, where + "duplicate edge " + tok[1] + " -> " + tok[3]);
            note_node(tok[1]);
            note_node(tok[3]);
            edges.push_back({tok[1], tok[3], detail::parse_value(tok[4], line_no), line_no});
        } else if (tok[0] == "bicov" && tok.size() == 5 && tok[2] == "<->") {
            auto key = std::minmax(tok[1], tok[3]);
            if (!bicov_keys.insert({key.first, key.second}).second)
                fail(ErrorKind::Format, where + "duplicate bicov " + tok[1] + " <-> " + tok[3]);
            note_node(tok[1]);
            note_node(tok[3]);
            bicovs.push_back({tok[1], tok[3], detail::parse_value(tok[4], line_no), line_no});
        } else if (tok[0] == "var" && tok.size() == 3) {
            if (vars.count(tok[1])) fail(ErrorKind::Format, where + "duplicate var " + tok[1]);
            note_node(tok[1]);
            vars[tok[1]] = detail::parse_value(tok[2], line_no);
        } else {
            fail(ErrorKind::Format, where + "unrecognized declaration");
        }
    }

    DiagramSpec spec;
    for (const auto& n : order) spec.diagram.add_node(n);
    const auto p = static_cast<Eigen::Index>(order.size());
    spec.sem.coefficients = Matrix::Zero(p, p);
    spec.sem.error_cov = Matrix::Zero(p, p);
    for (const auto& e : edges) {
        const std::string where = "line " + std::to_string(e.line) + ": ";
        if (e.v == 0.0) fail(ErrorKind::Format, where + "zero coefficient; omit the edge instead");
        try {
            spec.diagram.add_directed(e.a, e.b);
        } catch (const Error& err) {
            fail(err.kind() == ErrorKind::StructuralCycle ? ErrorKind::StructuralCycle : ErrorKind::Format,
                 where + err.what());
        }
        spec.sem.coefficients(spec.diagram.index_of(e.b), spec.diagram.index_of(e.a)) = e.v;
    }
    for (const auto& e : bicovs) {
        const std::string where = "line " + std::to_string(e.line) + ": ";
        if (e.v == 0.0) fail(ErrorKind::Format, where + "zero covariance; omit the edge instead");
        try {
            spec.diagram.add_bidirected(e.a, e.b);
        } catch (const Error& err) {
            fail(ErrorKind::Format, where + err.what());
        }
        const int i = spec.diagram.index_of(e.a), j = spec.diagram.index_of(e.b);
        spec.sem.error_cov(i, j) = spec.sem.error_cov(j, i) = e.v;
    }
    for (const auto& [n, v] : vars) spec.sem.error_cov(spec.diagram.index_of(n), spec.diagram.index_of(n)) = v;

    // Solve the unset error variances in topological order so that each such
    // node ends up with unit implied variance.
    const Matrix B = (Matrix::Identity(p, p) - spec.sem.coefficients).inverse();
    for (int i : spec.diagram.topological_order()) {
        if (vars.count(spec.diagram.name(i))) continue;
        double rest = 0.0;
        for (Eigen::Index k = 0; k < p; ++k)
            for (Eigen::Index l = 0; l < p; ++l)
                if (!(k == i && l == i)) rest += B(i, k) * B(i, l) * spec.sem.error_cov(k, l);
        const double psi = 1.0 - rest;
        if (!(psi > 0.0))
            fail(ErrorKind::Format, "node '" + spec.diagram.name(i) +
                                        "' cannot have unit variance: parents already explain " +
                                        format_number(rest, 6));
        spec.sem.error_cov(i, i) = psi;
    }
    validate_sem(spec.diagram, spec.sem);
    return spec;
}

inline DiagramSpec parse_diagram(const std::string& text) {
    std::istringstream in(text);
    return parse_diagram(in);
}

// ---------------------------------------------------------------- paths

/// One traversed edge. `forward` means the walk follows the arrow of a
/// directed edge; it is meaningless for bidirected edges.
struct PathStep {
    int from = 0;
    int to = 0;
    EdgeKind kind = EdgeKind::Directed;
    bool forward = true;

    bool head_at_to() const { return kind == EdgeKind::Bidirected || forward; }
    bool head_at_from() const { return kind == EdgeKind::Bidirected || !forward; }
};

struct Path {
    std::vector<int> nodes;
    std::vector<PathStep> steps;
    bool blocked = false;

    /// Source node of an unblocked path without bidirected edges, else -1.
    int root() const {
        if (blocked) return -1;
        int r = nodes.empty() ? -1 : nodes.front();
        for (const auto& s : steps) {
            if (s.kind == EdgeKind::Bidirected) return -1;
            if (!s.forward) r = s.to;
        }
        return r;
    }

    bool contains(int v) const { return std::find(nodes.begin(), nodes.end(), v) != nodes.end(); }

    std::string to_string(const CausalDiagram& g) const {
        std::string out = nodes.empty() ? std::string() : g.name(nodes.front());
        for (const auto& s : steps) {
            out += s.kind == EdgeKind::Bidirected ? " <-> " : (s.forward ? " -> " : " <- ");
            out += g.name(s.to);
        }
        return out;
    }
};

inline constexpr int kDefaultPathNodeCap = 20;

struct PathOptions {
    bool include_blocked = false;
    int max_nodes = kDefaultPathNodeCap;
    /// Edges treated as absent.
    std::vector<Edge> removed;
};

namespace detail {

inline bool edge_removed(const std::vector<Edge>& removed, const Edge& e) {
    for (const auto& r : removed)
        if (r.kind == e.kind && ((r.from == e.from && r.to == e.to) ||
                                 (e.kind == EdgeKind::Bidirected && r.from == e.to && r.to == e.from)))
            return true;
    return false;
}

} // namespace detail

/// All simple paths between `a` and `b`. Blocked paths are pruned as soon as
/// a collider appears unless `include_blocked` is set. A partial path that
/// would exceed `max_nodes` raises a path-overflow error.
inline std::vector<Path> enumerate_paths(const CausalDiagram& g, int a, int b, const PathOptions& opt = {}) {
    if (a < 0 || a >= g.size() || b < 0 || b >= g.size()) fail(ErrorKind::Lookup, "node index out of range");
    if (opt.max_nodes < 2) fail(ErrorKind::Argument, "path node cap must be at least 2");
    std::vector<Path> out;
    if (a == b) return out;

    Path cur;
    cur.nodes.push_back(a);
    std::vector<bool> on_path(static_cast<std::size_t>(g.size()), false);
    on_path[static_cast<std::size_t>(a)] = true;

    auto step_ok = [&](const PathStep& s) { return !(cur.steps.size() && cur.steps.back().head_at_to() && s.head_at_from()); };

    std::function<void()> dfs = [&]() {
        const int v = cur.nodes.back();
        if (v == b) {
            out.push_back(cur);
            return;
        }
        std::vector<PathStep> next;
        for (int w : g.children(v))
            if (!detail::edge_removed(opt.removed, {v, w, EdgeKind::Directed}))
                next.push_back({v, w, EdgeKind::Directed, true});
        for (int w : g.parents(v))
            if (!detail::edge_removed(opt.removed, {w, v, EdgeKind::Directed}))
                next.push_back({v, w, EdgeKind::Directed, false});
        for (int w : g.siblings(v))
            if (!detail::edge_removed(opt.removed, {std::min(v, w), std::max(v, w), EdgeKind::Bidirected}))
                next.push_back({v, w, EdgeKind::Bidirected, true});
        for (const auto& s : next) {
            if (on_path[static_cast<std::size_t>(s.to)]) continue;
            const bool collider = !step_ok(s);
            if (collider && !opt.include_blocked) continue;
            if (static_cast<int>(cur.nodes.size()) + 1 > opt.max_nodes)
                fail(ErrorKind::PathOverflow,
                     "path between " + g.name(a) + " and " + g.name(b) + " exceeds " + std::to_string(opt.max_nodes) +
                         " nodes");
            const bool was_blocked = cur.blocked;
            cur.blocked = cur.blocked || collider;
            cur.nodes.push_back(s.to);
            cur.steps.push_back(s);
            on_path[static_cast<std::size_t>(s.to)] = true;
            dfs();
            on_path[static_cast<std::size_t>(s.to)] = false;
            cur.steps.pop_back();
            cur.nodes.pop_back();
            cur.blocked = was_blocked;
        }
    };
    dfs();
    return out;
}

/// Product of edge parameters along `p`.
inline double path_product(const Path& p, const SemParameters& sem) {
    double t = 1.0;
    for (const auto& s : p.steps) {
        if (s.kind == EdgeKind::Bidirected)
            t *= sem.error_cov(s.from, s.to);
        else if (s.forward)
            t *= sem.coefficients(s.to, s.from);
        else
            t *= sem.coefficients(s.from, s.to);
    }
    return t;
}

struct WrightOptions {
    bool standardized = true;
    /// Root variances for non-standardized mode; implied variances when empty.
    std::optional<Vector> variances;
    int max_nodes = kDefaultPathNodeCap;
};

/// Covariance of `a` and `b` as the sum over unblocked paths.
inline double wright_covariance(const CausalDiagram& g, const SemParameters& sem, int a, int b,
                                const WrightOptions& opt = {}) {
    Vector var;
    if (opt.standardized) {
        const Matrix sigma = implied_covariance(sem);
        for (Eigen::Index i = 0; i < sigma.rows(); ++i)
            if (std::abs(sigma(i, i) - 1.0) > 1e-8)
                fail(ErrorKind::Argument, "standardized mode but var(" + g.name(static_cast<int>(i)) +
                                              ") = " + format_number(sigma(i, i)));
    } else {
        var = opt.variances ? *opt.variances : Vector(implied_covariance(sem).diagonal());
        if (var.size() != g.size()) fail(ErrorKind::Argument, "variance vector size mismatch");
    }
    if (a == b) return opt.standardized ? 1.0 : var(a);
    PathOptions popt;
    popt.max_nodes = opt.max_nodes;
    double sum = 0.0;
    for (const auto& p : enumerate_paths(g, a, b, popt)) {
        double t = path_product(p, sem);
        if (!opt.standardized) {
            const int r = p.root();
            if (r >= 0) t *= var(r);
        }
        sum += t;
    }
    return sum;
}

inline double wright_covariance(const CausalDiagram& g, const SemParameters& sem, const std::string& a,
                                const std::string& b, const WrightOptions& opt = {}) {
    return wright_covariance(g, sem, g.index_of(a), g.index_of(b), opt);
}

// ---------------------------------------------------------- d-separation

/// Unconditional d-separation of `a` and `b` after deleting `removed`.
/// Bidirected edges act as latent common parents: the nodes are connected iff
/// their ancestor sets meet or a surviving bidirected edge joins them.
inline bool d_separated(const CausalDiagram& g, int a, int b, const std::vector<Edge>& removed = {}) {
    if (a < 0 || a >= g.size() || b < 0 || b >= g.size()) fail(ErrorKind::Lookup, "node index out of range");
    for (const auto& e : removed) {
        const bool present = e.kind == EdgeKind::Directed ? g.has_directed(e.from, e.to) : g.has_bidirected(e.from, e.to);
        if (!present) fail(ErrorKind::Argument, "removed edge is not in the diagram");
    }
    if (a == b) return false;
    auto ancestors = [&](int v) {
        std::vector<bool> seen(static_cast<std::size_t>(g.size()), false);
        std::vector<int> stack{v};
        seen[static_cast<std::size_t>(v)] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int p : g.parents(u))
                if (!seen[static_cast<std::size_t>(p)] && !detail::edge_removed(removed, {p, u, EdgeKind::Directed})) {
                    seen[static_cast<std::size_t>(p)] = true;
                    stack.push_back(p);
                }
        }
        return seen;
    };
    const auto anc_a = ancestors(a), anc_b = ancestors(b);
    for (int v = 0; v < g.size(); ++v)
        if (anc_a[static_cast<std::size_t>(v)] && anc_b[static_cast<std::size_t>(v)]) return false;
    for (const auto& e : g.bidirected_edges()) {
        if (detail::edge_removed(removed, e)) continue;
        const auto i = static_cast<std::size_t>(e.from), j = static_cast<std::size_t>(e.to);
        if ((anc_a[i] && anc_b[j]) || (anc_a[j] && anc_b[i])) return false;
    }
    return true;
}

inline bool d_separated(const CausalDiagram& g, const std::string& a, const std::string& b,
                        const std::vector<Edge>& removed = {}) {
    return d_separated(g, g.index_of(a), g.index_of(b), removed);
}

// ------------------------------------------------------ instrumental sets

struct InstrumentWitness {
    int instrument = 0;
    int exposure = 0;
    Path path;
};

struct InstrumentalSetVerdict {
    bool valid = false;
    /// 0 when valid, otherwise the first condition (1, 2 or 3) that no
    /// relabeling could satisfy.
    int violated_condition = 0;
    std::string reason;
    /// Ordered witness sequence when valid.
    std::vector<InstrumentWitness> witnesses;
};

inline constexpr int kMaxInstrumentalSetSize = 8;

namespace detail {

/// Edge of `p` incident to `v` on the side toward the end (after) or start (before).
inline bool head_at_after(const Path& p, std::size_t pos) { return p.steps[pos].head_at_from(); }
inline bool head_at_before(const Path& p, std::size_t pos) { return p.steps[pos - 1].head_at_to(); }

inline bool compatible(const InstrumentWitness& earlier, const InstrumentWitness& later, int outcome) {
    if (earlier.path.contains(later.instrument)) return false;
    const auto& pi = earlier.path;
    const auto& pj = later.path;
    for (std::size_t a = 0; a < pi.nodes.size(); ++a) {
        const int v = pi.nodes[a];
        if (v == outcome) continue;
        auto it = std::find(pj.nodes.begin(), pj.nodes.end(), v);
        if (it == pj.nodes.end()) continue;
        const auto b = static_cast<std::size_t>(it - pj.nodes.begin());
        if (a + 1 >= pi.nodes.size() || b == 0) return false;
        if (!head_at_after(pi, a) || !head_at_before(pj, b)) return false;
    }
    return true;
}

inline bool has_perfect_matching(const std::vector<std::vector<int>>& options, std::size_t k) {
    std::vector<int> match(k, -1);
    std::function<bool(std::size_t, std::vector<bool>&)> augment = [&](std::size_t i, std::vector<bool>& seen) {
        for (int x : options[i]) {
            const auto xs = static_cast<std::size_t>(x);
            if (seen[xs]) continue;
            seen[xs] = true;
            if (match[xs] < 0 || augment(static_cast<std::size_t>(match[xs]), seen)) {
                match[xs] = static_cast<int>(i);
                return true;
            }
        }
        return false;
    };
    for (std::size_t i = 0; i < options.size(); ++i) {
        std::vector<bool> seen(k, false);
        if (!augment(i, seen)) return false;
    }
    return true;
}

} // namespace detail

/// Tests whether `instruments` form an instrumental set for the effects of
/// `exposures` on `outcome`. All relabelings and path choices are searched.
inline InstrumentalSetVerdict check_instrumental_set(const CausalDiagram& g, const std::vector<int>& instruments,
                                                     const std::vector<int>& exposures, int outcome,
                                                     int max_path_nodes = kDefaultPathNodeCap) {
    const std::size_t k = instruments.size();
    if (k != exposures.size()) fail(ErrorKind::Argument, "instrument and exposure counts differ");
    if (k == 0) fail(ErrorKind::Argument, "empty instrument set");
    if (static_cast<int>(k) > kMaxInstrumentalSetSize)
        fail(ErrorKind::Combinatorial, "instrumental-set search supports at most " +
                                           std::to_string(kMaxInstrumentalSetSize) + " instruments");
    if (outcome < 0 || outcome >= g.size()) fail(ErrorKind::Lookup, "outcome index out of range");
    std::set<int> distinct;
    for (int v : instruments) {
        if (v < 0 || v >= g.size()) fail(ErrorKind::Lookup, "instrument index out of range");
        if (v == outcome) fail(ErrorKind::Argument, "outcome listed among instruments");
        distinct.insert(v);
    }
    for (int v : exposures) {
        if (v < 0 || v >= g.size()) fail(ErrorKind::Lookup, "exposure index out of range");
        if (v == outcome) fail(ErrorKind::Argument, "outcome listed among exposures");
        distinct.insert(v);
    }
    if (distinct.size() != 2 * k) fail(ErrorKind::Argument, "instruments and exposures must be distinct nodes");

    InstrumentalSetVerdict verdict;
    auto reject = [&](int cond, std::string why) {
        verdict.valid = false;
        verdict.violated_condition = cond;
        verdict.reason = std::move(why);
        return verdict;
    };

    // Condition 1: non-descendant of Y with an unblocked path ending X_j -> Y.
    const auto desc_y = g.descendants(outcome);
    std::vector<std::vector<InstrumentWitness>> candidates(k);
    std::vector<std::vector<int>> exposure_options(k);
    PathOptions popt;
    popt.max_nodes = max_path_nodes;
    for (std::size_t i = 0; i < k; ++i) {
        const int e = instruments[i];
        if (desc_y[static_cast<std::size_t>(e)])
            return reject(1, g.name(e) + " is a descendant of " + g.name(outcome));
        std::set<int> reach;
        for (auto& p : enumerate_paths(g, e, outcome, popt)) {
            const auto& last = p.steps.back();
            if (last.kind != EdgeKind::Directed || !last.forward) continue;
            const auto it = std::find(exposures.begin(), exposures.end(), last.from);
            if (it == exposures.end()) continue;
            const int xj = static_cast<int>(it - exposures.begin());
            reach.insert(xj);
            candidates[i].push_back({e, exposures[static_cast<std::size_t>(xj)], std::move(p)});
        }
        if (reach.empty())
            return reject(1, g.name(e) + " has no unblocked path ending in an exposure -> " + g.name(outcome) + " edge");
        exposure_options[i].assign(reach.begin(), reach.end());
    }
    if (!detail::has_perfect_matching(exposure_options, k))
        return reject(1, "no assignment of distinct exposures to instruments");

    // Condition 2: d-separated from Y once every exposure -> Y edge is removed.
    std::vector<Edge> cut;
    for (int x : exposures)
        if (g.has_directed(x, outcome)) cut.push_back({x, outcome, EdgeKind::Directed});
    for (int e : instruments)
        if (!d_separated(g, e, outcome, cut))
            return reject(2, g.name(e) + " is d-connected to " + g.name(outcome) + " without exposure edges");

    // Condition 3: search orderings and path choices.
    std::vector<InstrumentWitness> chosen;
    std::vector<bool> used_inst(k, false);
    std::set<int> used_exp;
    std::function<bool()> search = [&]() {
        if (chosen.size() == k) return true;
        for (std::size_t i = 0; i < k; ++i) {
            if (used_inst[i]) continue;
            for (const auto& cand : candidates[i]) {
                if (used_exp.count(cand.exposure)) continue;
                bool ok = true;
                for (const auto& prev : chosen)
                    if (!detail::compatible(prev, cand, outcome)) {
                        ok = false;
                        break;
                    }
                if (!ok) continue;
                used_inst[i] = true;
                used_exp.insert(cand.exposure);
                chosen.push_back(cand);
                if (search()) return true;
                chosen.pop_back();
                used_exp.erase(cand.exposure);
                used_inst[i] = false;
            }
        }
        return false;
    };
    if (!search()) return reject(3, "no ordering of witness paths avoids a shared non-collider variable");
    verdict.valid = true;
    verdict.violated_condition = 0;
    verdict.witnesses = chosen;
    return verdict;
}

inline InstrumentalSetVerdict check_instrumental_set(const CausalDiagram& g, const std::vector<std::string>& instruments,
                                                     const std::vector<std::string>& exposures,
                                                     const std::string& outcome,
                                                     int max_path_nodes = kDefaultPathNodeCap) {
    std::vector<int> ins, exs;
    for (const auto& n : instruments) ins.push_back(g.index_of(n));
    for (const auto& n : exposures) exs.push_back(g.index_of(n));
    return check_instrumental_set(g, ins, exs, g.index_of(outcome), max_path_nodes);
}

} // namespace mvmr
