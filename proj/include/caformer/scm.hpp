#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "caformer/rng.hpp"

namespace caformer {

// Finite structural causal model, small enough for exhaustive enumeration:
// at most 6 variables, alphabets of 2..4 symbols.
//
// CPT layout: cpt[v] has one row per parent configuration (odometer over
// parents[v] in listed order, first parent most significant) and card[v]
// columns; each row sums to 1 within 1e-12.
struct DiscreteSCM {
    std::vector<std::string> names;
    std::vector<std::size_t> card;
    std::vector<std::vector<std::size_t>> parents;
    std::vector<std::vector<std::vector<double>>> cpt;

    std::size_t n() const { return names.size(); }
    std::size_t index_of(const std::string& name) const;
    void validate() const;
};

// Full joint over all variables; p is row-major over assignments with
// variable 0 most significant.
struct JointTable {
    std::vector<std::size_t> card;
    std::vector<double> p;
    double prob(const std::vector<std::size_t>& assignment) const;
};

using Event = std::vector<std::pair<std::size_t, std::size_t>>; // (var, value)

// Exhaustive factorization product. Joint spaces above 10^6 cells error out.
JointTable joint(const DiscreteSCM& scm);

// Graph surgery: cut var's incoming edges and pin its CPT to a point mass.
DiscreteSCM do_surgery(const DiscreteSCM& scm, std::size_t var, std::size_t value);

// Ground-truth interventional distribution via the truncated factorization.
JointTable truncated_do(const DiscreteSCM& scm, std::size_t var, std::size_t value);

double prob_event(const JointTable& j, const Event& fixed);
std::vector<double> marginal(const JointTable& j, std::size_t var);
// P(target | fixed); a zero-probability conditioning event is a numeric error.
std::vector<double> conditional(const JointTable& j, std::size_t target, const Event& fixed);

// Back-door adjustment sum_c P(T | X=x, C=c) P(C=c) from the observational
// joint, for the named treatment/outcome/context variables. Errors when some
// stratum has P(X=x, C=c) == 0, naming that stratum.
std::vector<double> backdoor_estimate(const DiscreteSCM& scm, std::size_t x_value,
                                      const std::string& x_name = "X",
                                      const std::string& t_name = "T",
                                      const std::string& c_name = "C");

// ------------------------------------------------------------------- graphs

struct Dag {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> parents;
};

Dag graph_of(const DiscreteSCM& scm);
Dag remove_incoming(Dag g, std::size_t var);
Dag remove_outgoing(const Dag& g, std::size_t var);

// d-separation of xs from ys given zs (sets must be disjoint): reachability
// along active paths with the usual collider opening/blocking rules.
bool d_separated(const Dag& g, const std::set<std::size_t>& xs, const std::set<std::size_t>& ys,
                 const std::set<std::size_t>& zs);

// --------------------------------------------------------- do-calculus rules

struct RuleReport {
    bool premise = false;        // d-separation test on the mutilated graph
    bool equality_checked = false;
    bool equality_holds = false;
    double max_abs_diff = 0.0;
};

struct DoCalculusReport {
    RuleReport rule1; // drop an observation:     P(y|do(x),z) = P(y|do(x))
    RuleReport rule2; // exchange action/observation: P(y|do(x),do(z)) = P(y|do(x),z)
    RuleReport rule3; // drop an action:          P(y|do(x),do(z)) = P(y|do(x))
};

// Tests each rule's independence premise by d-separation on its mutilated
// graph; where the premise holds, asserts the distribution equality by
// enumeration (within tol) over all intervention/conditioning values.
// Rules are stated with an empty extra conditioning set.
DoCalculusReport verify_docalculus_rules(const DiscreteSCM& scm, const std::string& x_name,
                                         const std::string& z_name, const std::string& y_name,
                                         double tol = 1e-12);

// ----------------------------------------------------------------- builders

// Random DAG over n_vars ordered variables (edge i->j, i<j, with edge_prob),
// cardinalities 2..max_card, CPT rows from a flat Dirichlet.
DiscreteSCM random_scm(Rng& rng, std::size_t n_vars, std::size_t max_card, double edge_prob);

// The confounded triple C->X, C->T, X->T with random CPTs; the shape that
// back-door adjustment over C is built for.
DiscreteSCM confounded_triple(Rng& rng, std::size_t max_card = 4);

// ---------------------------------------------------------------------- i/o

// JSON form: {"variables":[{"name":..,"card":..}], "parents":{name:[names]},
// "cpt":{name:[[row]..]}}
DiscreteSCM parse_scm_json(const std::string& text);
std::string scm_to_json_text(const DiscreteSCM& scm);
DiscreteSCM load_scm_file(const std::string& path);

} // namespace caformer
