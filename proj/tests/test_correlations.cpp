#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "rhm/correlations.hpp"

using rhm::build_grammar;
using rhm::RhmParams;

namespace {

RhmParams make(int L, int s, int v, int m, std::uint64_t seed = 0) {
    RhmParams p;
    p.depth = L;
    p.branching = s;
    p.vocab_size = v;
    p.rules_per_symbol = m;
    p.grammar_seed = seed;
    return p;
}

std::vector<rhm::Sequence> iid_uniform_samples(std::uint64_t count, std::size_t len, int v,
                                               std::uint64_t seed) {
    std::vector<rhm::Sequence> samples(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        rhm::CounterRng rng(seed, rhm::stream::synthetic, i);
        samples[i].resize(len);
        for (auto& tok : samples[i]) tok = static_cast<rhm::Symbol>(rng.below(v));
    }
    return samples;
}

}  // namespace

TEST_CASE("analytic plateaus match their closed-form values", "[correlations]") {
    REQUIRE(rhm::analytic_plateau(8, 2, 1) == Catch::Approx(0.03125).epsilon(1e-12));
    REQUIRE(rhm::analytic_plateau(8, 2, 2) == Catch::Approx(0.015625).epsilon(1e-12));
    REQUIRE(rhm::analytic_plateau(8, 2, 3) == Catch::Approx(0.0078125).epsilon(1e-12));
    REQUIRE(rhm::analytic_plateau(32, 8, 1) == Catch::Approx(1.953125e-3).epsilon(1e-12));
    REQUIRE(rhm::analytic_plateau(32, 8, 2) == Catch::Approx(2.44140625e-4).epsilon(1e-12));
}

TEST_CASE("plateau rows decrease by m per level; tuples lag by sqrt(m)", "[correlations]") {
    auto rows = rhm::analytic_plateaus(make(4, 2, 32, 8));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(!rows[i].exactly_zero);
        REQUIRE(rows[i].tuple_plateau ==
                Catch::Approx(rows[i].token_plateau / std::sqrt(8.0)).epsilon(1e-12));
        if (i > 0) {
            REQUIRE(rows[i].token_plateau < rows[i - 1].token_plateau);
            REQUIRE(rows[i].token_plateau ==
                    Catch::Approx(rows[i - 1].token_plateau / 8.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("saturated rules report exactly-zero plateaus", "[correlations]") {
    auto rows = rhm::analytic_plateaus(make(3, 2, 4, 4));
    for (const auto& row : rows) {
        REQUIRE(row.exactly_zero);
        REQUIRE(row.token_plateau == 0.0);
    }
}

TEST_CASE("decay exponent is log(m)/log(s)", "[correlations]") {
    REQUIRE(rhm::beta_exponent(make(3, 2, 32, 8)) == Catch::Approx(3.0).epsilon(1e-12));
    REQUIRE(rhm::beta_exponent(make(3, 2, 8, 2)) == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(rhm::beta_exponent(make(2, 3, 11, 9)) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("exact curve vanishes in the factorised case", "[correlations]") {
    auto curve = rhm::exact_corr_curve(build_grammar(make(2, 2, 4, 4, 3)));
    for (const auto& e : curve.entries) REQUIRE(e.value < 1e-12);
}

TEST_CASE("exact curve refuses instances beyond its point cap", "[correlations]") {
    auto g = build_grammar(make(3, 2, 4, 2, 2));
    REQUIRE_THROWS_AS(rhm::exact_corr_curve(g, 3), rhm::cap_error);
}

TEST_CASE("exact curve equals the rational enumeration oracle", "[correlations]") {
    auto g = build_grammar(make(2, 2, 4, 2, 21));
    auto st = oracle::enumerate(g);
    auto curve = rhm::exact_corr_curve(g);
    REQUIRE(curve.entries.size() == 3);
    for (const auto& e : curve.entries)
        REQUIRE(std::abs(e.value - oracle::corr_value(st, g, e.t)) < 1e-12);
}

TEST_CASE("ensemble mean of level-1 exact correlations nears the plateau", "[correlations]") {
    auto curve = rhm::ensemble_exact_corr_curve(make(3, 2, 8, 2), 200);
    REQUIRE(std::abs(curve.entries[0].value - 0.03125) < 0.15 * 0.03125);
}

TEST_CASE("empirical curve on the full population equals the exact one", "[correlations]") {
    auto g = build_grammar(make(2, 2, 4, 2, 5));
    std::vector<rhm::Sequence> population;
    for (auto& [seq, prob] : rhm::enumerate_sequences(g)) population.push_back(seq);
    auto emp = rhm::empirical_corr_curve(population, 4);
    auto exact = rhm::exact_corr_curve(g);
    REQUIRE(emp.sample_count == population.size());
    for (std::size_t i = 0; i < exact.entries.size(); ++i) {
        REQUIRE(emp.entries[i].t == exact.entries[i].t);
        REQUIRE(std::abs(emp.entries[i].value - exact.entries[i].value) < 1e-12);
        REQUIRE(emp.entries[i].noise_floor ==
                Catch::Approx(1.0 / (4 * std::sqrt(32.0))).epsilon(1e-12));
    }
}

TEST_CASE("token-independent data sits on the noise floor", "[correlations]") {
    for (std::uint64_t count : {1000ull, 10000ull}) {
        auto samples = iid_uniform_samples(count, 16, 4, 77);
        auto curve = rhm::empirical_corr_curve(samples, 4);
        const double floor = 1.0 / (4 * std::sqrt(static_cast<double>(count)));
        for (const auto& e : curve.entries) {
            REQUIRE(e.value > 0.3 * floor);
            REQUIRE(e.value < 3.0 * floor);
        }
    }
}

TEST_CASE("finite samples resolve shallow levels and saturate deep ones", "[correlations]") {
    auto params = make(4, 2, 32, 8, 1);
    params.sample_seed = 3;
    auto g = build_grammar(params);
    std::vector<rhm::Sequence> samples(10000);
    for (std::uint64_t i = 0; i < samples.size(); ++i)
        samples[i] = rhm::sample_derivation(g, i).leaves();
    auto emp = rhm::empirical_corr_curve(samples, 32);
    auto exact = rhm::exact_corr_curve(g);
    const double floor = 1.0 / (32 * std::sqrt(10000.0));

    // the level-1 value is far above the floor and estimated within 3 floors
    REQUIRE(std::abs(emp.entries[0].value - exact.entries[0].value) < 3 * floor);
    // distances with a level-4 ancestor carry correlations ~2^-18, utterly
    // unresolvable at this P: the estimate sits on the noise floor
    for (const auto& e : emp.entries) {
        if (rhm::lca_level(e.t, params) != 4) continue;
        REQUIRE(e.value > floor / 3);
        REQUIRE(e.value < 3 * floor);
    }
}

TEST_CASE("empirical error decays like one over sqrt(P)", "[correlations]") {
    auto params = make(3, 2, 8, 2, 11);
    auto g = build_grammar(params);
    auto exact = rhm::exact_corr_curve(g);
    auto max_err = [&](std::uint64_t count, std::uint64_t seed_base) {
        RhmParams p = params;
        p.sample_seed = seed_base;
        rhm::Grammar h = g;
        h.params = p;
        std::vector<rhm::Sequence> samples(count);
        for (std::uint64_t i = 0; i < count; ++i)
            samples[i] = rhm::sample_derivation(h, i).leaves();
        auto emp = rhm::empirical_corr_curve(samples, 8);
        double worst = 0;
        for (std::size_t k = 0; k < exact.entries.size(); ++k)
            worst = std::max(worst, std::abs(emp.entries[k].value - exact.entries[k].value));
        return worst;
    };
    // doubling P brings the max error down by about 1/sqrt(2); average a few
    // disjoint sample streams to tame the fluctuation of the max
    double lo = 0, hi = 0;
    for (std::uint64_t rep = 0; rep < 4; ++rep) {
        lo += max_err(20000, 100 + rep) / 4;
        hi += max_err(40000, 200 + rep) / 4;
    }
    const double ratio = hi / lo;
    REQUIRE(ratio > (1.0 / std::sqrt(2.0)) * 0.7);
    REQUIRE(ratio < (1.0 / std::sqrt(2.0)) * 1.3);
}

TEST_CASE("curves are invariant under vocabulary relabeling", "[correlations]") {
    auto params = make(2, 2, 4, 2, 9);
    params.sample_seed = 123;
    auto g = build_grammar(params);
    std::vector<rhm::Sequence> samples(4000);
    for (std::uint64_t i = 0; i < samples.size(); ++i)
        samples[i] = rhm::sample_derivation(g, i).leaves();
    auto base = rhm::empirical_corr_curve(samples, 4);

    const rhm::Symbol relabel[4] = {2, 0, 3, 1};
    for (auto& seq : samples)
        for (auto& tok : seq) tok = relabel[tok];
    auto permuted = rhm::empirical_corr_curve(samples, 4);
    for (std::size_t i = 0; i < base.entries.size(); ++i)
        REQUIRE(std::abs(base.entries[i].value - permuted.entries[i].value) < 1e-12);
}

TEST_CASE("effective window reproduces the staircase examples", "[correlations]") {
    auto p = make(4, 2, 32, 8);
    auto w1 = rhm::effective_window(p, 5000);
    REQUIRE(w1.level == 1);
    REQUIRE(w1.t_star == 1);
    auto w2 = rhm::effective_window(p, 20000);
    REQUIRE(w2.level == 2);
    REQUIRE(w2.t_star == 3);
    // exactly at P_1 = v*m the floor ties the plateau: unresolved
    auto q = make(3, 2, 8, 2);
    REQUIRE(rhm::effective_window(q, 16).level == 0);
    REQUIRE(rhm::effective_window(q, 17).level == 1);
    REQUIRE(rhm::effective_window(q, 15).t_star == 0);
}

TEST_CASE("effective window grows with P and shrinks with m", "[correlations]") {
    auto p = make(4, 2, 32, 8);
    std::uint64_t prev = 0;
    for (double x = 2; x <= 7.001; x += 0.05) {
        auto w = rhm::effective_window(p, static_cast<std::uint64_t>(std::pow(10.0, x)));
        REQUIRE(w.t_star >= prev);
        prev = w.t_star;
    }
    auto low_m = rhm::effective_window(make(4, 2, 32, 2), 20000);
    auto high_m = rhm::effective_window(make(4, 2, 32, 8), 20000);
    REQUIRE(low_m.level >= high_m.level);

    auto zero = rhm::effective_window(make(4, 2, 4, 4), 1u << 30);
    REQUIRE(zero.level == 0);  // no correlations to resolve
}

TEST_CASE("curve CSV round-trips through the pinned format", "[correlations]") {
    namespace fs = std::filesystem;
    auto samples = iid_uniform_samples(100, 4, 3, 5);
    auto curve = rhm::empirical_corr_curve(samples, 3);
    const auto path = (fs::temp_directory_path() / "rhm_curve_test.csv").string();
    rhm::write_corr_csv(curve, path);
    auto loaded = rhm::read_corr_csv(path);
    REQUIRE(loaded.entries.size() == curve.entries.size());
    for (std::size_t i = 0; i < curve.entries.size(); ++i) {
        REQUIRE(loaded.entries[i].t == curve.entries[i].t);
        REQUIRE(loaded.entries[i].value == curve.entries[i].value);  // 17 digits round-trip
        REQUIRE(loaded.entries[i].noise_floor == curve.entries[i].noise_floor);
    }
    fs::remove(path);

    std::ostringstream out;
    rhm::write_corr_csv(rhm::exact_corr_curve(build_grammar(make(1, 2, 2, 2))), out);
    std::istringstream lines(out.str());
    std::string header, row;
    std::getline(lines, header);
    REQUIRE(header == "t,value,noise_floor");
    std::getline(lines, row);
    REQUIRE(row.back() == ',');  // exact curves leave the floor empty
}

TEST_CASE("estimator inputs are validated", "[correlations]") {
    REQUIRE_THROWS_AS(rhm::empirical_corr_curve({}, 4), rhm::constraint_error);
    std::vector<rhm::Sequence> one{{0, 1, 0}};
    REQUIRE_THROWS_AS(rhm::empirical_corr_curve(one, 4), rhm::constraint_error);
    std::vector<rhm::Sequence> bad{{0, 1, 9}, {0, 1, 0}};
    REQUIRE_THROWS_AS(rhm::empirical_corr_curve(bad, 4), rhm::constraint_error);
    std::vector<rhm::Sequence> ragged{{0, 1, 1}, {0, 1}};
    REQUIRE_THROWS_AS(rhm::empirical_corr_curve(ragged, 4), rhm::constraint_error);
}
