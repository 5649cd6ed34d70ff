#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rhm/errors.hpp"
#include "rhm/grammar.hpp"
#include "rhm/params.hpp"
#include "rhm/rng.hpp"

namespace rhm {

using Sequence = std::vector<Symbol>;

// Full generative trace of one datum. Level ell holds s^(L-ell) nodes;
// symbols[L] is the root, symbols[0] the leaves. choices[ell][i] is the rule
// index expanding node i of level ell (choices[0] is unused padding).
//
// Trees produced by sample_derivation and transform_reset satisfy
// leaves == expansion of (root, choices); transform_substitute deliberately
// breaks the link between the substituted node and its parent's rule.
struct DerivationTree {
    std::vector<std::vector<Symbol>> symbols;        // [0..L][node]
    std::vector<std::vector<std::int32_t>> choices;  // [1..L][node]

    Symbol root() const { return symbols.back().at(0); }
    const Sequence& leaves() const { return symbols.front(); }
};

// Height of the lowest common ancestor of positions d-t and d, i.e. the
// smallest ell with t <= s^ell - 1. Distances t = s^(ell-1)..s^ell - 1 share
// one level, mirroring the tree geometry.
inline int lca_level(std::uint64_t t, const RhmParams& params) {
    const std::uint64_t d = params.seq_len();
    if (t < 1 || t > d - 1)
        throw constraint_error("distance out of range: t = " + std::to_string(t) +
                               ", valid range is 1.." + std::to_string(d - 1));
    int ell = 0;
    std::uint64_t reach = 1;  // s^ell
    while (reach < t + 1) {
        reach *= static_cast<std::uint64_t>(params.branching);
        ++ell;
    }
    return ell;
}

namespace detail {

// Recompute symbols below node (level, pos) from its symbol and the stored
// rule choices.
inline void expand_subtree(const Grammar& g, DerivationTree& tree, int level, std::uint64_t pos) {
    const int s = g.params.branching;
    for (int ell = level; ell >= 1; --ell) {
        const std::uint64_t width = *checked_pow(s, level - ell);  // nodes of this level in the subtree
        const std::uint64_t first = pos * width;
        const RuleTable& table = g.level(ell);
        for (std::uint64_t i = first; i < first + width; ++i) {
            auto rule = table.tuple(tree.symbols[ell][i], tree.choices[ell][i]);
            for (int k = 0; k < s; ++k) tree.symbols[ell - 1][i * s + k] = rule[k];
        }
    }
}

}  // namespace detail

// Expands the whole tree from its root symbol and rule choices.
inline void expand(const Grammar& g, DerivationTree& tree) {
    detail::expand_subtree(g, tree, g.params.depth, 0);
}

// Draws derivation `index` of the stream defined by params.sample_seed: the
// root is uniform over v and every rule choice uniform over m. Randomness is
// a pure function of (sample_seed, index), so samples are reproducible and
// may be generated in any order or in parallel.
inline DerivationTree sample_derivation(const Grammar& g, std::uint64_t index) {
    const RhmParams& p = g.params;
    CounterRng rng(p.sample_seed, stream::sample, index);
    DerivationTree tree;
    tree.symbols.resize(p.depth + 1);
    tree.choices.resize(p.depth + 1);
    for (int ell = 0; ell <= p.depth; ++ell) {
        tree.symbols[ell].resize(p.nodes_at_level(ell));
        if (ell >= 1) tree.choices[ell].resize(p.nodes_at_level(ell));
    }
    tree.symbols[p.depth][0] = static_cast<Symbol>(rng.below(p.vocab_size));
    for (int ell = p.depth; ell >= 1; --ell)
        for (auto& c : tree.choices[ell]) c = static_cast<std::int32_t>(rng.below(p.rules_per_symbol));
    expand(g, tree);
    return tree;
}

// Default node the transformations act on: the penultimate node of the level,
// so the masked last token stays outside the affected subtree. Falls back to
// the single node (the root) when the level has only one.
inline std::uint64_t default_transform_position(const RhmParams& params, int level) {
    if (level < 1 || level > params.depth)
        throw constraint_error("transform level out of range: " + std::to_string(level));
    const std::uint64_t nodes = params.nodes_at_level(level);
    return nodes >= 2 ? nodes - 2 : 0;
}

namespace detail {

inline std::uint64_t resolve_transform_position(const Grammar& g, int level,
                                                std::optional<std::uint64_t> position) {
    if (level < 1 || level > g.params.depth)
        throw constraint_error("transform level out of range: " + std::to_string(level));
    const std::uint64_t pos = position.value_or(default_transform_position(g.params, level));
    if (pos >= g.params.nodes_at_level(level))
        throw constraint_error("transform position out of range: " + std::to_string(pos));
    return pos;
}

inline void resample_choices(const Grammar& g, DerivationTree& tree, int level, std::uint64_t pos,
                             CounterRng& rng) {
    const int s = g.params.branching;
    for (int ell = level; ell >= 1; --ell) {
        const std::uint64_t width = *checked_pow(s, level - ell);
        const std::uint64_t first = pos * width;
        for (std::uint64_t i = first; i < first + width; ++i)
            tree.choices[ell][i] = static_cast<std::int32_t>(rng.below(g.params.rules_per_symbol));
    }
}

}  // namespace detail

// Keeps the symbol at (level, pos) and redraws every rule choice in its
// subtree; only the s^level leaves below the node may change.
inline DerivationTree transform_reset(const Grammar& g, const DerivationTree& tree, int level,
                                      CounterRng& rng, std::optional<std::uint64_t> position = {}) {
    const std::uint64_t pos = detail::resolve_transform_position(g, level, position);
    DerivationTree out = tree;
    detail::resample_choices(g, out, level, pos, rng);
    detail::expand_subtree(g, out, level, pos);
    return out;
}

// Replaces the symbol at (level, pos) with a uniformly drawn different one,
// then redraws the subtree's rule choices. The parent's rule still names the
// old symbol, so the result is an off-distribution probe datum.
inline DerivationTree transform_substitute(const Grammar& g, const DerivationTree& tree, int level,
                                           CounterRng& rng,
                                           std::optional<std::uint64_t> position = {}) {
    if (g.params.vocab_size < 2)
        throw constraint_error("substitution needs v >= 2");
    const std::uint64_t pos = detail::resolve_transform_position(g, level, position);
    DerivationTree out = tree;
    const Symbol old = out.symbols[level][pos];
    Symbol fresh = static_cast<Symbol>(rng.below(g.params.vocab_size - 1));
    if (fresh >= old) ++fresh;
    out.symbols[level][pos] = fresh;
    detail::resample_choices(g, out, level, pos, rng);
    detail::expand_subtree(g, out, level, pos);
    return out;
}

}  // namespace rhm
