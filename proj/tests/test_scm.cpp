#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "caformer/error.hpp"
#include "caformer/scm.hpp"

using namespace caformer;

namespace {

// Two independent fair coins.
DiscreteSCM two_coins() {
    DiscreteSCM s;
    s.names = {"A", "B"};
    s.card = {2, 2};
    s.parents = {{}, {}};
    s.cpt = {{{0.5, 0.5}}, {{0.5, 0.5}}};
    return s;
}

// C -> X -> T with C -> T: the canonical confounded triple, strong enough
// that conditioning and intervening visibly disagree.
DiscreteSCM strong_confounder() {
    DiscreteSCM s;
    s.names = {"C", "X", "T"};
    s.card = {2, 2, 2};
    s.parents = {{}, {0}, {0, 1}};
    s.cpt = {
        {{0.5, 0.5}},
        // X follows C most of the time
        {{0.9, 0.1}, {0.1, 0.9}},
        // rows: (C=0,X=0),(C=0,X=1),(C=1,X=0),(C=1,X=1); C dominates T
        {{0.9, 0.1}, {0.8, 0.2}, {0.2, 0.8}, {0.1, 0.9}},
    };
    return s;
}

} // namespace

TEST_CASE("validation accepts coins and rejects malformed tables") {
    two_coins().validate();

    DiscreteSCM bad = two_coins();
    bad.cpt[0][0] = {0.6, 0.6}; // row sums to 1.2
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = two_coins();
    bad.parents[1] = {5};
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = two_coins();
    bad.parents[0] = {0}; // self-loop
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = two_coins();
    bad.card[0] = 1; // alphabet too small
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = two_coins();
    bad.names[1] = "A"; // duplicate
    CHECK_THROWS_AS(bad.validate(), ContractError);

    // cycle: A -> B -> A
    bad = two_coins();
    bad.parents = {{1}, {0}};
    bad.cpt = {{{0.5, 0.5}, {0.5, 0.5}}, {{0.5, 0.5}, {0.5, 0.5}}};
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("joint of independent coins is uniform") {
    JointTable j = joint(two_coins());
    REQUIRE(j.p.size() == 4);
    double total = 0.0;
    for (double v : j.p) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(j.prob({1, 0}) == doctest::Approx(0.25));
}

TEST_CASE("joint respects the factorization of a chain") {
    // X -> T with P(X=1)=0.3, P(T=1|X=0)=0.2, P(T=1|X=1)=0.7
    DiscreteSCM s;
    s.names = {"X", "T"};
    s.card = {2, 2};
    s.parents = {{}, {0}};
    s.cpt = {{{0.7, 0.3}}, {{0.8, 0.2}, {0.3, 0.7}}};
    JointTable j = joint(s);
    CHECK(j.prob({0, 0}) == doctest::Approx(0.7 * 0.8).epsilon(1e-15));
    CHECK(j.prob({0, 1}) == doctest::Approx(0.7 * 0.2).epsilon(1e-15));
    CHECK(j.prob({1, 0}) == doctest::Approx(0.3 * 0.3).epsilon(1e-15));
    CHECK(j.prob({1, 1}) == doctest::Approx(0.3 * 0.7).epsilon(1e-15));

    std::vector<double> mx = marginal(j, 0);
    CHECK(mx[1] == doctest::Approx(0.3).epsilon(1e-15));
    std::vector<double> cond = conditional(j, 1, {{0, 1}});
    CHECK(cond[1] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("intervening on an unconfounded root equals conditioning") {
    DiscreteSCM s;
    s.names = {"X", "T"};
    s.card = {2, 2};
    s.parents = {{}, {0}};
    s.cpt = {{{0.6, 0.4}}, {{0.75, 0.25}, {0.1, 0.9}}};
    JointTable obs = joint(s);
    for (std::size_t x = 0; x < 2; ++x) {
        JointTable done = truncated_do(s, 0, x);
        std::vector<double> by_do = marginal(done, 1);
        std::vector<double> by_cond = conditional(obs, 1, {{0, x}});
        for (std::size_t t = 0; t < 2; ++t)
            CHECK(by_do[t] == doctest::Approx(by_cond[t]).epsilon(1e-14));
    }
}

TEST_CASE("interventional distributions normalize") {
    Rng rng(77);
    DiscreteSCM s = confounded_triple(rng);
    for (std::size_t x = 0; x < s.card[s.index_of("X")]; ++x) {
        JointTable done = truncated_do(s, s.index_of("X"), x);
        std::vector<double> m = marginal(done, s.index_of("T"));
        double total = 0.0;
        for (double v : m) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        // the pinned variable really is pinned
        std::vector<double> mx = marginal(done, s.index_of("X"));
        CHECK(mx[x] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("strong confounding separates conditioning from intervening") {
    DiscreteSCM s = strong_confounder();
    s.validate();
    JointTable obs = joint(s);

    // by hand: P(T=1|do(X=1)) = 0.5*0.2 + 0.5*0.9 = 0.55
    JointTable done = truncated_do(s, 1, 1);
    std::vector<double> by_do = marginal(done, 2);
    CHECK(by_do[1] == doctest::Approx(0.55).epsilon(1e-12));

    // by hand: P(C=1|X=1) = 0.9, so P(T=1|X=1) = 0.1*0.2 + 0.9*0.9 = 0.83
    std::vector<double> by_cond = conditional(obs, 2, {{1, 1}});
    CHECK(by_cond[1] == doctest::Approx(0.83).epsilon(1e-12));
    CHECK(std::abs(by_cond[1] - by_do[1]) > 0.25);

    // the adjustment recovers the interventional answer from observations
    std::vector<double> adj = backdoor_estimate(s, 1);
    CHECK(adj[1] == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(adj[0] == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("adjustment without confounding collapses to the plain conditional") {
    // C is disconnected; X -> T only.
    DiscreteSCM s;
    s.names = {"C", "X", "T"};
    s.card = {2, 2, 2};
    s.parents = {{}, {}, {1}};
    s.cpt = {{{0.3, 0.7}}, {{0.6, 0.4}}, {{0.8, 0.2}, {0.25, 0.75}}};
    JointTable obs = joint(s);
    for (std::size_t x = 0; x < 2; ++x) {
        std::vector<double> adj = backdoor_estimate(s, x);
        std::vector<double> cond = conditional(obs, 2, {{1, x}});
        for (std::size_t t = 0; t < 2; ++t)
            CHECK(adj[t] == doctest::Approx(cond[t]).epsilon(1e-12));
    }
}

TEST_CASE("adjustment averages strata by the context prior") {
    // T depends on C only: the estimate must be sum_c P(c) P(T|c), x-free.
    DiscreteSCM s;
    s.names = {"C", "X", "T"};
    s.card = {2, 2, 2};
    s.parents = {{}, {0}, {0, 1}};
    s.cpt = {
        {{0.25, 0.75}},
        {{0.5, 0.5}, {0.5, 0.5}},
        {{0.3, 0.7}, {0.3, 0.7}, {0.6, 0.4}, {0.6, 0.4}},
    };
    for (std::size_t x = 0; x < 2; ++x) {
        std::vector<double> adj = backdoor_estimate(s, x);
        CHECK(adj[1] == doctest::Approx(0.25 * 0.7 + 0.75 * 0.4).epsilon(1e-12));
    }
}

TEST_CASE("an unobservable stratum is a numeric error naming the stratum") {
    // X copies C deterministically, so P(X=1, C=0) = 0.
    DiscreteSCM s = strong_confounder();
    s.cpt[1] = {{1.0, 0.0}, {0.0, 1.0}};
    try {
        backdoor_estimate(s, 1);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("C=0") != std::string::npos);
    }
}

TEST_CASE("d-separation: chain, fork, collider, collider descendant") {
    // chain 0 -> 1 -> 2
    Dag chain{3, {{}, {0}, {1}}};
    CHECK(d_separated(chain, {0}, {2}, {1}));
    CHECK_FALSE(d_separated(chain, {0}, {2}, {}));

    // fork 0 <- 1 -> 2
    Dag fork{3, {{1}, {}, {1}}};
    CHECK(d_separated(fork, {0}, {2}, {1}));
    CHECK_FALSE(d_separated(fork, {0}, {2}, {}));

    // collider 0 -> 2 <- 1, with descendant 2 -> 3
    Dag coll{4, {{}, {}, {0, 1}, {2}}};
    CHECK(d_separated(coll, {0}, {1}, {}));
    CHECK_FALSE(d_separated(coll, {0}, {1}, {2})); // conditioning opens it
    CHECK_FALSE(d_separated(coll, {0}, {1}, {3})); // so does its descendant

    CHECK_THROWS_AS(d_separated(chain, {0}, {0}, {}), ContractError);
}

TEST_CASE("graph surgery drops exactly the targeted edges") {
    DiscreteSCM s = strong_confounder();
    Dag g = graph_of(s);
    REQUIRE(g.n == 3);
    CHECK(g.parents[2] == std::vector<std::size_t>{0, 1});

    Dag cut_in = remove_incoming(g, 2);
    CHECK(cut_in.parents[2].empty());
    CHECK(cut_in.parents[1] == std::vector<std::size_t>{0});

    Dag cut_out = remove_outgoing(g, 0);
    CHECK(cut_out.parents[1].empty());
    CHECK(cut_out.parents[2] == std::vector<std::size_t>{1});
}

TEST_CASE("rule reports on the three fixture shapes") {
    auto consistent = [](const RuleReport& r) {
        return !r.premise || (r.equality_checked && r.equality_holds);
    };

    // chain X -> Z -> Y: only rule 2 (action/observation exchange on Z) applies
    DiscreteSCM chain;
    chain.names = {"X", "Z", "Y"};
    chain.card = {2, 2, 2};
    chain.parents = {{}, {0}, {1}};
    chain.cpt = {{{0.4, 0.6}}, {{0.7, 0.3}, {0.2, 0.8}}, {{0.9, 0.1}, {0.35, 0.65}}};
    DoCalculusReport rc = verify_docalculus_rules(chain, "X", "Z", "Y");
    CHECK_FALSE(rc.rule1.premise);
    CHECK(rc.rule2.premise);
    CHECK(rc.rule2.equality_checked);
    CHECK(rc.rule2.equality_holds);
    CHECK(rc.rule2.max_abs_diff < 1e-12);
    CHECK_FALSE(rc.rule3.premise);
    CHECK(consistent(rc.rule1));
    CHECK(consistent(rc.rule2));
    CHECK(consistent(rc.rule3));

    // fork X <- Z -> Y: again only rule 2
    DiscreteSCM fork;
    fork.names = {"Z", "X", "Y"};
    fork.card = {2, 2, 2};
    fork.parents = {{}, {0}, {0}};
    fork.cpt = {{{0.5, 0.5}}, {{0.8, 0.2}, {0.3, 0.7}}, {{0.6, 0.4}, {0.15, 0.85}}};
    DoCalculusReport rf = verify_docalculus_rules(fork, "X", "Z", "Y");
    CHECK_FALSE(rf.rule1.premise);
    CHECK(rf.rule2.premise);
    CHECK(rf.rule2.equality_holds);
    CHECK_FALSE(rf.rule3.premise);

    // three isolated variables: every premise holds and every equality verifies
    DiscreteSCM iso;
    iso.names = {"X", "Z", "Y"};
    iso.card = {2, 2, 2};
    iso.parents = {{}, {}, {}};
    iso.cpt = {{{0.5, 0.5}}, {{0.25, 0.75}}, {{0.9, 0.1}}};
    DoCalculusReport ri = verify_docalculus_rules(iso, "X", "Z", "Y");
    for (const RuleReport* r : {&ri.rule1, &ri.rule2, &ri.rule3}) {
        CHECK(r->premise);
        CHECK(r->equality_checked);
        CHECK(r->equality_holds);
        CHECK(r->max_abs_diff < 1e-12);
    }

    CHECK_THROWS_AS(verify_docalculus_rules(chain, "X", "X", "Y"), ContractError);
}

TEST_CASE("random models are valid and their joints normalize") {
    Rng rng(101);
    for (int rep = 0; rep < 50; ++rep) {
        DiscreteSCM s = random_scm(rng, 2 + rep % 5, 2 + rep % 3, 0.5);
        s.validate();
        JointTable j = joint(s);
        double total = 0.0;
        for (double v : j.p) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(random_scm(rng, 0, 3, 0.5), ContractError);
    CHECK_THROWS_AS(random_scm(rng, 3, 9, 0.5), ContractError);
}

TEST_CASE("confounded triple: shape and adjustment identity") {
    Rng rng(55);
    for (int rep = 0; rep < 5; ++rep) {
        DiscreteSCM s = confounded_triple(rng);
        s.validate();
        const std::size_t C = s.index_of("C"), X = s.index_of("X"), T = s.index_of("T");
        CHECK(s.parents[X] == std::vector<std::size_t>{C});
        CHECK((s.parents[T] == std::vector<std::size_t>{C, X} ||
               s.parents[T] == std::vector<std::size_t>{X, C}));
        for (std::size_t x = 0; x < s.card[X]; ++x) {
            std::vector<double> adj = backdoor_estimate(s, x);
            std::vector<double> truth = marginal(truncated_do(s, X, x), T);
            REQUIRE(adj.size() == truth.size());
            for (std::size_t t = 0; t < adj.size(); ++t)
                CHECK(adj[t] == doctest::Approx(truth[t]).epsilon(1e-12));
        }
    }
}

TEST_CASE("json round-trip preserves the model") {
    Rng rng(66);
    DiscreteSCM s = confounded_triple(rng);
    std::string text = scm_to_json_text(s);
    DiscreteSCM back = parse_scm_json(text);
    back.validate();
    CHECK(back.names == s.names);
    CHECK(back.card == s.card);
    CHECK(back.parents == s.parents);
    REQUIRE(back.cpt.size() == s.cpt.size());
    for (std::size_t v = 0; v < s.cpt.size(); ++v)
        for (std::size_t r = 0; r < s.cpt[v].size(); ++r)
            for (std::size_t c = 0; c < s.cpt[v][r].size(); ++c)
                CHECK(back.cpt[v][r][c] == doctest::Approx(s.cpt[v][r][c]).epsilon(1e-15));

    CHECK_THROWS_AS(parse_scm_json("{not json"), ParseError);
    CHECK_THROWS_AS(parse_scm_json("{\"variables\": 3}"), ParseError);
    CHECK_THROWS_AS(load_scm_file("/nonexistent/model.json"), ParseError);
}
