#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "rhm/errors.hpp"

namespace rhm {

using Symbol = std::int32_t;

// base^exp, or nullopt on unsigned-64 overflow.
inline std::optional<std::uint64_t> checked_pow(std::uint64_t base, std::uint64_t exp) {
    std::uint64_t result = 1;
    for (std::uint64_t i = 0; i < exp; ++i) {
        if (base != 0 && result > std::numeric_limits<std::uint64_t>::max() / base) return std::nullopt;
        result *= base;
    }
    return result;
}

// Hyperparameters of the hierarchy: depth, branching factor, per-level
// vocabulary size and number of production rules per symbol, plus the two
// seeds that make grammar construction and data sampling reproducible.
struct RhmParams {
    int depth = 1;             // L: number of rule levels
    int branching = 2;         // s: tuple size of every production rule
    int vocab_size = 2;        // v: symbols per level
    int rules_per_symbol = 1;  // m: synonymic expansions per symbol
    std::uint64_t grammar_seed = 0;
    std::uint64_t sample_seed = 0;

    // Sequence length s^L. Only valid after validate().
    std::uint64_t seq_len() const { return *checked_pow(branching, depth); }

    // Number of distinct s-tuples v^s at one level.
    std::uint64_t tuple_space() const { return *checked_pow(vocab_size, branching); }

    // Internal nodes of one derivation tree: (s^L - 1) / (s - 1).
    std::uint64_t internal_nodes() const { return (seq_len() - 1) / (branching - 1); }

    // Nodes at a given level ell in 0..L: s^(L - ell).
    std::uint64_t nodes_at_level(int level) const { return *checked_pow(branching, depth - level); }

    void validate() const {
        if (depth < 1) throw constraint_error("L >= 1 violated: L = " + std::to_string(depth));
        if (branching < 2) throw constraint_error("s >= 2 violated: s = " + std::to_string(branching));
        if (vocab_size < 2) throw constraint_error("v >= 2 violated: v = " + std::to_string(vocab_size));
        if (rules_per_symbol < 1)
            throw constraint_error("m >= 1 violated: m = " + std::to_string(rules_per_symbol));
        // m <= v^(s-1); the bound may itself overflow, in which case it holds.
        auto bound = checked_pow(vocab_size, branching - 1);
        if (bound && static_cast<std::uint64_t>(rules_per_symbol) > *bound) {
            std::ostringstream msg;
            msg << "m > v^(s-1): " << rules_per_symbol << " > " << *bound;
            throw constraint_error(msg.str());
        }
        if (!checked_pow(branching, depth))
            throw constraint_error("sequence length s^L overflows the native unsigned width");
        if (!checked_pow(vocab_size, branching))
            throw constraint_error("tuple count v^s overflows the native unsigned width");
    }
};

inline std::string params_label(const RhmParams& p) {
    std::ostringstream s;
    s << "L=" << p.depth << ",s=" << p.branching << ",v=" << p.vocab_size << ",m="
      << p.rules_per_symbol << ",seed=" << p.grammar_seed;
    return s.str();
}

}  // namespace rhm
