#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rhm/bigmath.hpp"
#include "rhm/correlations.hpp"
#include "rhm/params.hpp"

namespace rhm {

// Mean number of masked-token values compatible with an aligned context of
// size s^level - 1, averaged over the grammar ensemble. Level 0 means no
// context, where every one of the v values is possible; deeper contexts pin
// the value down through
//   N(level) = 1 + (v - 1) * (m * N(level - 1) - 1) / (v^s - 1).
inline BigRat nbar_exact(const RhmParams& params, int level) {
    params.validate();
    if (level < 0) throw constraint_error("level must be >= 0");
    const BigInt vs = big_pow(params.vocab_size, params.branching);
    BigRat n = params.vocab_size;
    for (int ell = 1; ell <= level; ++ell)
        n = 1 + BigRat(params.vocab_size - 1) * (params.rules_per_symbol * n - 1) / BigRat(vs - 1);
    return n;
}

// The recursion solved in closed form: fixed point plus geometrically
// shrinking start offset. Equal to nbar_exact at every level, exactly.
inline BigRat nbar_closed_form_exact(const RhmParams& params, int level) {
    params.validate();
    if (level < 0) throw constraint_error("level must be >= 0");
    const BigInt vs = big_pow(params.vocab_size, params.branching);
    const BigInt v = params.vocab_size, m = params.rules_per_symbol;
    const BigInt denom = vs - 1 - m * (v - 1);
    const BigRat fixed_point = BigRat(vs - v, denom);
    const BigRat offset_scale = BigRat((vs - m * v) * (v - 1), denom);
    const BigRat ratio = BigRat(m * (v - 1), vs - 1);
    return fixed_point + offset_scale * big_rat_pow(ratio, static_cast<unsigned>(level));
}

inline double nbar(const RhmParams& params, int level) {
    return static_cast<double>(nbar_exact(params, level));
}

struct LossBound {
    int level = 0;
    double nats = 0.0;         // ln of the recursion value
    double closed_form = 0.0;  // ln of the solved recursion; equals nats
    double asymptotic = 0.0;   // ln(1 + v * (m / v^(s-1))^level), the v,m >> 1 limit
};

inline LossBound loss_bound(const RhmParams& params, int level) {
    LossBound b;
    b.level = level;
    b.nats = std::log(static_cast<double>(nbar_exact(params, level)));
    b.closed_form = std::log(static_cast<double>(nbar_closed_form_exact(params, level)));
    const double density =
        params.rules_per_symbol / std::pow(params.vocab_size, params.branching - 1);
    b.asymptotic = std::log1p(params.vocab_size * std::pow(density, level));
    return b;
}

// Training-set size at which level-`level` correlations emerge from the
// sampling noise: P = v * m^(2*level - 1). Exact; serialise via .str() when
// it exceeds the native width.
inline BigInt sample_complexity(const RhmParams& params, int level) {
    params.validate();
    if (level < 1) throw constraint_error("sample complexity is defined for level >= 1");
    return BigInt(params.vocab_size) * big_pow(params.rules_per_symbol, 2 * level - 1);
}

// Number of distinct level-`level` subtree strings: v * m^((s^level-1)/(s-1)).
inline BigInt count_sequences(const RhmParams& params, int level) {
    params.validate();
    if (level < 1) throw constraint_error("sequence count is defined for level >= 1");
    BigInt e = (big_pow(params.branching, static_cast<unsigned>(level)) - 1) / (params.branching - 1);
    BigInt base = params.rules_per_symbol, result = 1;
    while (e > 0) {
        if ((e & 1) != 0) result *= base;
        base *= base;
        e >>= 1;
    }
    return BigInt(params.vocab_size) * result;
}

struct TheoryRow {
    int level = 0;
    std::optional<BigInt> sample_complexity;  // absent at level 0
    BigRat nbar;
    double loss_bound_nats = 0.0;
    std::optional<double> plateau;        // absent at level 0
    std::optional<double> tuple_plateau;  // absent at level 0
};

inline std::vector<TheoryRow> theory_table(const RhmParams& params) {
    params.validate();
    auto plateaus = analytic_plateaus(params);
    std::vector<TheoryRow> rows;
    for (int ell = 0; ell <= params.depth; ++ell) {
        TheoryRow row;
        row.level = ell;
        row.nbar = nbar_exact(params, ell);
        row.loss_bound_nats = std::log(static_cast<double>(row.nbar));
        if (ell >= 1) {
            row.sample_complexity = sample_complexity(params, ell);
            row.plateau = plateaus[ell - 1].token_plateau;
            row.tuple_plateau = plateaus[ell - 1].tuple_plateau;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_theory_csv(const std::vector<TheoryRow>& rows, std::ostream& out) {
    out << "ell,P_ell,Nbar,Lbar_nats,Ctilde,Ctilde_tuple\n";
    for (const auto& row : rows) {
        out << row.level << ',';
        if (row.sample_complexity) out << row.sample_complexity->str();
        out << ',' << format_float(static_cast<double>(row.nbar)) << ','
            << format_float(row.loss_bound_nats) << ',';
        if (row.plateau) out << format_float(*row.plateau);
        out << ',';
        if (row.tuple_plateau) out << format_float(*row.tuple_plateau);
        out << '\n';
    }
}

}  // namespace rhm
