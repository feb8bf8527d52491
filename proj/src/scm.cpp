#include "caformer/scm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "caformer/error.hpp"

namespace caformer {

namespace {

constexpr std::size_t kMaxVars = 6;
constexpr std::size_t kMaxCard = 4;
constexpr double kRowSumTol = 1e-12;
constexpr double kMaxJointCells = 1e6;

std::size_t parent_row(const DiscreteSCM& scm, std::size_t v,
                       const std::vector<std::size_t>& assignment) {
    std::size_t row = 0;
    for (std::size_t p : scm.parents[v]) row = row * scm.card[p] + assignment[p];
    return row;
}

// Odometer over full assignments; returns false once exhausted.
bool advance(std::vector<std::size_t>& a, const std::vector<std::size_t>& card) {
    for (std::size_t i = a.size(); i-- > 0;) {
        if (++a[i] < card[i]) return true;
        a[i] = 0;
    }
    return false;
}

std::size_t flat_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& card) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < a.size(); ++i) idx = idx * card[i] + a[i];
    return idx;
}

std::vector<std::size_t> children_adjacency_check(const DiscreteSCM& scm) {
    // DFS cycle check over the parent lists; returns a topological order.
    const std::size_t n = scm.n();
    std::vector<int> state(n, 0); // 0 new, 1 on stack, 2 done
    std::vector<std::size_t> topo;
    struct Frame {
        std::size_t v, next;
    };
    for (std::size_t s = 0; s < n; ++s) {
        if (state[s] != 0) continue;
        std::vector<Frame> stack{{s, 0}};
        state[s] = 1;
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < scm.parents[f.v].size()) {
                const std::size_t p = scm.parents[f.v][f.next++];
                if (state[p] == 1) throw ContractError("scm: cycle through '" + scm.names[p] + "'");
                if (state[p] == 0) {
                    state[p] = 1;
                    stack.push_back({p, 0});
                }
            } else {
                state[f.v] = 2;
                topo.push_back(f.v);
                stack.pop_back();
            }
        }
    }
    return topo; // parents precede children
}

double checked_sum(const std::vector<double>& row, const std::string& where) {
    double s = 0.0;
    for (double v : row) {
        if (!std::isfinite(v) || v < 0.0)
            throw ContractError("scm: " + where + " has a negative or non-finite entry");
        s += v;
    }
    return s;
}

} // namespace

std::size_t DiscreteSCM::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw ContractError("scm: no variable named '" + name + "'");
}

void DiscreteSCM::validate() const {
    const std::size_t nv = n();
    if (nv == 0) throw ContractError("scm: no variables");
    if (nv > kMaxVars)
        throw ContractError("scm: " + std::to_string(nv) + " variables exceeds the cap of " +
                            std::to_string(kMaxVars));
    if (card.size() != nv || parents.size() != nv || cpt.size() != nv)
        throw ContractError("scm: field lengths disagree with the variable count");
    for (std::size_t i = 0; i < nv; ++i) {
        if (names[i].empty()) throw ContractError("scm: empty variable name");
        for (std::size_t j = i + 1; j < nv; ++j)
            if (names[i] == names[j])
                throw ContractError("scm: duplicate variable name '" + names[i] + "'");
        if (card[i] < 2 || card[i] > kMaxCard)
            throw ContractError("scm: alphabet of '" + names[i] + "' must have 2.." +
                                std::to_string(kMaxCard) + " symbols");
        for (std::size_t p : parents[i]) {
            if (p >= nv) throw ContractError("scm: parent index out of range for '" + names[i] + "'");
            if (p == i) throw ContractError("scm: '" + names[i] + "' cannot parent itself");
        }
    }
    children_adjacency_check(*this); // throws on a cycle
    for (std::size_t v = 0; v < nv; ++v) {
        std::size_t rows = 1;
        for (std::size_t p : parents[v]) rows *= card[p];
        if (cpt[v].size() != rows)
            throw ContractError("scm: CPT of '" + names[v] + "' has " +
                                std::to_string(cpt[v].size()) + " rows, expected " +
                                std::to_string(rows));
        for (std::size_t r = 0; r < rows; ++r) {
            if (cpt[v][r].size() != card[v])
                throw ContractError("scm: CPT row width mismatch for '" + names[v] + "'");
            const double s = checked_sum(cpt[v][r], "CPT row of '" + names[v] + "'");
            if (std::abs(s - 1.0) > kRowSumTol)
                throw ContractError("scm: CPT row " + std::to_string(r) + " of '" + names[v] +
                                    "' sums to " + std::to_string(s) + ", not 1");
        }
    }
}

double JointTable::prob(const std::vector<std::size_t>& assignment) const {
    if (assignment.size() != card.size())
        throw ContractError("joint: assignment arity mismatch");
    for (std::size_t i = 0; i < card.size(); ++i)
        if (assignment[i] >= card[i]) throw ContractError("joint: assignment value out of range");
    return p[flat_index(assignment, card)];
}

JointTable joint(const DiscreteSCM& scm) {
    scm.validate();
    double cells = 1.0;
    for (std::size_t c : scm.card) cells *= static_cast<double>(c);
    if (cells > kMaxJointCells)
        throw ContractError("scm: joint space of " + std::to_string(cells) +
                            " cells exceeds the enumeration cap");
    JointTable j;
    j.card = scm.card;
    j.p.assign(static_cast<std::size_t>(cells), 0.0);
    std::vector<std::size_t> a(scm.n(), 0);
    do {
        double pr = 1.0;
        for (std::size_t v = 0; v < scm.n(); ++v) pr *= scm.cpt[v][parent_row(scm, v, a)][a[v]];
        j.p[flat_index(a, j.card)] = pr;
    } while (advance(a, j.card));
    return j;
}

DiscreteSCM do_surgery(const DiscreteSCM& scm, std::size_t var, std::size_t value) {
    if (var >= scm.n()) throw ContractError("do_surgery: variable index out of range");
    if (value >= scm.card[var]) throw ContractError("do_surgery: value outside the alphabet");
    DiscreteSCM cut = scm;
    cut.parents[var].clear();
    std::vector<double> point(cut.card[var], 0.0);
    point[value] = 1.0;
    cut.cpt[var] = {point};
    return cut;
}

JointTable truncated_do(const DiscreteSCM& scm, std::size_t var, std::size_t value) {
    return joint(do_surgery(scm, var, value));
}

double prob_event(const JointTable& j, const Event& fixed) {
    for (const auto& [var, val] : fixed) {
        if (var >= j.card.size()) throw ContractError("prob_event: variable index out of range");
        if (val >= j.card[var]) throw ContractError("prob_event: value outside the alphabet");
    }
    double acc = 0.0;
    std::vector<std::size_t> a(j.card.size(), 0);
    do {
        bool match = true;
        for (const auto& [var, val] : fixed)
            if (a[var] != val) {
                match = false;
                break;
            }
        if (match) acc += j.p[flat_index(a, j.card)];
    } while (advance(a, j.card));
    return acc;
}

std::vector<double> marginal(const JointTable& j, std::size_t var) {
    if (var >= j.card.size()) throw ContractError("marginal: variable index out of range");
    std::vector<double> out(j.card[var], 0.0);
    std::vector<std::size_t> a(j.card.size(), 0);
    do {
        out[a[var]] += j.p[flat_index(a, j.card)];
    } while (advance(a, j.card));
    return out;
}

std::vector<double> conditional(const JointTable& j, std::size_t target, const Event& fixed) {
    const double pe = prob_event(j, fixed);
    if (pe == 0.0) {
        std::ostringstream msg;
        msg << "conditional: conditioning event {";
        for (std::size_t i = 0; i < fixed.size(); ++i)
            msg << (i ? ", " : "") << "var" << fixed[i].first << "=" << fixed[i].second;
        msg << "} has probability zero";
        throw NumericError(msg.str());
    }
    std::vector<double> out(j.card[target], 0.0);
    for (std::size_t t = 0; t < j.card[target]; ++t) {
        Event with = fixed;
        with.emplace_back(target, t);
        out[t] = prob_event(j, with) / pe;
    }
    return out;
}

std::vector<double> backdoor_estimate(const DiscreteSCM& scm, std::size_t x_value,
                                      const std::string& x_name, const std::string& t_name,
                                      const std::string& c_name) {
    const std::size_t X = scm.index_of(x_name);
    const std::size_t T = scm.index_of(t_name);
    const std::size_t C = scm.index_of(c_name);
    if (x_value >= scm.card[X]) throw ContractError("backdoor_estimate: value outside X's alphabet");
    const JointTable obs = joint(scm);
    const std::vector<double> pc = marginal(obs, C);
    std::vector<double> out(scm.card[T], 0.0);
    for (std::size_t c = 0; c < scm.card[C]; ++c) {
        const double pxc = prob_event(obs, {{X, x_value}, {C, c}});
        if (pxc == 0.0)
            throw NumericError("backdoor_estimate: stratum " + c_name + "=" + std::to_string(c) +
                               " with " + x_name + "=" + std::to_string(x_value) +
                               " has zero probability; the adjustment conditional is undefined");
        const std::vector<double> pt = conditional(obs, T, {{X, x_value}, {C, c}});
        for (std::size_t t = 0; t < out.size(); ++t) out[t] += pt[t] * pc[c];
    }
    return out;
}

// ---------------------------------------------------------------------- dags

Dag graph_of(const DiscreteSCM& scm) {
    Dag g;
    g.n = scm.n();
    g.parents = scm.parents;
    return g;
}

Dag remove_incoming(Dag g, std::size_t var) {
    if (var >= g.n) throw ContractError("remove_incoming: variable index out of range");
    g.parents[var].clear();
    return g;
}

Dag remove_outgoing(const Dag& g, std::size_t var) {
    if (var >= g.n) throw ContractError("remove_outgoing: variable index out of range");
    Dag out = g;
    for (std::size_t v = 0; v < out.n; ++v) {
        auto& ps = out.parents[v];
        ps.erase(std::remove(ps.begin(), ps.end(), var), ps.end());
    }
    return out;
}

bool d_separated(const Dag& g, const std::set<std::size_t>& xs, const std::set<std::size_t>& ys,
                 const std::set<std::size_t>& zs) {
    for (std::size_t v : xs)
        if (v >= g.n) throw ContractError("d_separated: variable index out of range");
    for (std::size_t v : ys)
        if (v >= g.n) throw ContractError("d_separated: variable index out of range");
    for (std::size_t v : zs)
        if (v >= g.n) throw ContractError("d_separated: variable index out of range");
    for (std::size_t v : xs)
        if (ys.count(v) || zs.count(v))
            throw ContractError("d_separated: query sets must be disjoint");
    for (std::size_t v : ys)
        if (zs.count(v)) throw ContractError("d_separated: query sets must be disjoint");

    std::vector<std::vector<std::size_t>> children(g.n);
    for (std::size_t v = 0; v < g.n; ++v)
        for (std::size_t p : g.parents[v]) children[p].push_back(v);

    // Ancestors of the conditioning set (inclusive): colliders open there.
    std::vector<char> anc(g.n, 0);
    std::vector<std::size_t> stack(zs.begin(), zs.end());
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        if (anc[v]) continue;
        anc[v] = 1;
        for (std::size_t p : g.parents[v]) stack.push_back(p);
    }

    // Reachability over (node, arrival direction) states. "up" = arrived from
    // a child (moving against edges), "down" = arrived from a parent.
    std::vector<char> seen_up(g.n, 0), seen_down(g.n, 0);
    std::vector<std::pair<std::size_t, int>> queue;
    for (std::size_t x : xs) queue.emplace_back(x, 0); // start as if from below
    while (!queue.empty()) {
        auto [v, dir] = queue.back();
        queue.pop_back();
        auto& seen = dir == 0 ? seen_up : seen_down;
        if (seen[v]) continue;
        seen[v] = 1;
        const bool in_z = zs.count(v) != 0;
        if (dir == 0) {
            if (in_z) continue; // an observed node blocks a chain/fork pass-through
            if (ys.count(v)) return false;
            for (std::size_t p : g.parents[v]) queue.emplace_back(p, 0);
            for (std::size_t c : children[v]) queue.emplace_back(c, 1);
        } else {
            if (!in_z) {
                if (ys.count(v)) return false;
                for (std::size_t c : children[v]) queue.emplace_back(c, 1);
            }
            if (anc[v]) // collider (or ancestor of one observed): bounce upward
                for (std::size_t p : g.parents[v]) queue.emplace_back(p, 0);
        }
    }
    return true;
}

// ------------------------------------------------------------------- rules

namespace {

double max_dist_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

} // namespace

DoCalculusReport verify_docalculus_rules(const DiscreteSCM& scm, const std::string& x_name,
                                         const std::string& z_name, const std::string& y_name,
                                         double tol) {
    scm.validate();
    const std::size_t X = scm.index_of(x_name);
    const std::size_t Z = scm.index_of(z_name);
    const std::size_t Y = scm.index_of(y_name);
    if (X == Z || X == Y || Z == Y)
        throw ContractError("verify_docalculus_rules: x, z, y must be distinct");
    const Dag g = graph_of(scm);
    const std::set<std::size_t> sx{X}, sz{Z}, sy{Y};

    DoCalculusReport rep;

    // Rule 1 (drop an observation): premise is Y _||_ Z | X with X's incoming
    // edges cut; then P(y | do(x), z) == P(y | do(x)).
    rep.rule1.premise = d_separated(remove_incoming(g, X), sz, sy, sx);
    if (rep.rule1.premise) {
        rep.rule1.equality_checked = true;
        double worst = 0.0;
        for (std::size_t xv = 0; xv < scm.card[X]; ++xv) {
            const JointTable j = truncated_do(scm, X, xv);
            const std::vector<double> base = marginal(j, Y);
            for (std::size_t zv = 0; zv < scm.card[Z]; ++zv) {
                if (prob_event(j, {{Z, zv}}) == 0.0) continue; // vacuous stratum
                worst = std::max(worst, max_dist_diff(conditional(j, Y, {{Z, zv}}), base));
            }
        }
        rep.rule1.max_abs_diff = worst;
        rep.rule1.equality_holds = worst <= tol;
    }

    // Rule 2 (action/observation exchange): premise on the graph with X's
    // incoming and Z's outgoing edges cut; then
    // P(y | do(x), do(z)) == P(y | do(x), z).
    rep.rule2.premise = d_separated(remove_outgoing(remove_incoming(g, X), Z), sz, sy, sx);
    if (rep.rule2.premise) {
        rep.rule2.equality_checked = true;
        double worst = 0.0;
        for (std::size_t xv = 0; xv < scm.card[X]; ++xv) {
            const JointTable j_x = truncated_do(scm, X, xv);
            for (std::size_t zv = 0; zv < scm.card[Z]; ++zv) {
                if (prob_event(j_x, {{Z, zv}}) == 0.0) continue;
                const JointTable j_xz = joint(do_surgery(do_surgery(scm, X, xv), Z, zv));
                worst = std::max(worst,
                                 max_dist_diff(marginal(j_xz, Y), conditional(j_x, Y, {{Z, zv}})));
            }
        }
        rep.rule2.max_abs_diff = worst;
        rep.rule2.equality_holds = worst <= tol;
    }

    // Rule 3 (drop an action), empty extra conditioning set: premise on the
    // graph with both X's and Z's incoming edges cut; then
    // P(y | do(x), do(z)) == P(y | do(x)).
    rep.rule3.premise = d_separated(remove_incoming(remove_incoming(g, X), Z), sz, sy, sx);
    if (rep.rule3.premise) {
        rep.rule3.equality_checked = true;
        double worst = 0.0;
        for (std::size_t xv = 0; xv < scm.card[X]; ++xv) {
            const std::vector<double> base = marginal(truncated_do(scm, X, xv), Y);
            for (std::size_t zv = 0; zv < scm.card[Z]; ++zv) {
                const JointTable j_xz = joint(do_surgery(do_surgery(scm, X, xv), Z, zv));
                worst = std::max(worst, max_dist_diff(marginal(j_xz, Y), base));
            }
        }
        rep.rule3.max_abs_diff = worst;
        rep.rule3.equality_holds = worst <= tol;
    }
    return rep;
}

// ---------------------------------------------------------------- builders

DiscreteSCM random_scm(Rng& rng, std::size_t n_vars, std::size_t max_card, double edge_prob) {
    if (n_vars == 0 || n_vars > kMaxVars)
        throw ContractError("random_scm: variable count must be 1.." + std::to_string(kMaxVars));
    if (max_card < 2 || max_card > kMaxCard)
        throw ContractError("random_scm: max_card must be 2.." + std::to_string(kMaxCard));
    DiscreteSCM scm;
    scm.names.resize(n_vars);
    scm.card.resize(n_vars);
    scm.parents.resize(n_vars);
    scm.cpt.resize(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
        scm.names[v] = "V" + std::to_string(v);
        scm.card[v] = 2 + rng.below(max_card - 1);
    }
    for (std::size_t v = 1; v < n_vars; ++v)
        for (std::size_t u = 0; u < v; ++u)
            if (rng.uniform() < edge_prob) scm.parents[v].push_back(u);
    for (std::size_t v = 0; v < n_vars; ++v) {
        std::size_t rows = 1;
        for (std::size_t p : scm.parents[v]) rows *= scm.card[p];
        scm.cpt[v].resize(rows);
        for (auto& row : scm.cpt[v]) row = rng.dirichlet_row(scm.card[v]);
    }
    scm.validate();
    return scm;
}

DiscreteSCM confounded_triple(Rng& rng, std::size_t max_card) {
    if (max_card < 2 || max_card > kMaxCard)
        throw ContractError("confounded_triple: max_card must be 2.." + std::to_string(kMaxCard));
    DiscreteSCM scm;
    scm.names = {"C", "X", "T"};
    scm.card = {2 + rng.below(max_card - 1), 2 + rng.below(max_card - 1),
                2 + rng.below(max_card - 1)};
    scm.parents = {{}, {0}, {0, 1}};
    scm.cpt.resize(3);
    scm.cpt[0] = {rng.dirichlet_row(scm.card[0])};
    scm.cpt[1].resize(scm.card[0]);
    for (auto& row : scm.cpt[1]) row = rng.dirichlet_row(scm.card[1]);
    scm.cpt[2].resize(scm.card[0] * scm.card[1]);
    for (auto& row : scm.cpt[2]) row = rng.dirichlet_row(scm.card[2]);
    scm.validate();
    return scm;
}

// --------------------------------------------------------------------- i/o

DiscreteSCM parse_scm_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scm json: ") + e.what());
    }
    DiscreteSCM scm;
    try {
        for (const auto& v : doc.at("variables")) {
            scm.names.push_back(v.at("name").get<std::string>());
            scm.card.push_back(v.at("card").get<std::size_t>());
        }
        scm.parents.assign(scm.n(), {});
        scm.cpt.assign(scm.n(), {});
        if (doc.contains("parents"))
            for (const auto& [name, list] : doc.at("parents").items()) {
                const std::size_t v = scm.index_of(name);
                for (const auto& p : list)
                    scm.parents[v].push_back(scm.index_of(p.get<std::string>()));
            }
        for (const auto& [name, rows] : doc.at("cpt").items()) {
            const std::size_t v = scm.index_of(name);
            for (const auto& row : rows) scm.cpt[v].push_back(row.get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scm json: ") + e.what());
    }
    scm.validate();
    return scm;
}

std::string scm_to_json_text(const DiscreteSCM& scm) {
    nlohmann::ordered_json doc;
    doc["variables"] = nlohmann::ordered_json::array();
    for (std::size_t v = 0; v < scm.n(); ++v)
        doc["variables"].push_back({{"name", scm.names[v]}, {"card", scm.card[v]}});
    nlohmann::ordered_json parents = nlohmann::ordered_json::object();
    nlohmann::ordered_json cpt = nlohmann::ordered_json::object();
    for (std::size_t v = 0; v < scm.n(); ++v) {
        nlohmann::ordered_json plist = nlohmann::ordered_json::array();
        for (std::size_t p : scm.parents[v]) plist.push_back(scm.names[p]);
        parents[scm.names[v]] = plist;
        cpt[scm.names[v]] = scm.cpt[v];
    }
    doc["parents"] = parents;
    doc["cpt"] = cpt;
    return doc.dump(2);
}

DiscreteSCM load_scm_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("scm file: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scm_json(buf.str());
}

} // namespace caformer
