#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rhm/bigmath.hpp"
#include "rhm/derivation.hpp"
#include "rhm/grammar.hpp"
#include "rhm/io.hpp"

namespace rhm {

inline constexpr std::uint64_t kDefaultEnumerationCap = 1ull << 22;

// Exact distribution of the token at one (1-based) position.
struct TokenDistribution {
    std::uint64_t position = 0;
    std::vector<double> probs;  // length v, sums to 1
};

// Exact joint distribution of the tokens at positions (i, d); probs is v x v
// row-major with the position-i token as the row index.
struct JointDistribution {
    std::uint64_t position = 0;  // i < d; the column position is always d
    std::vector<double> probs;
};

namespace detail {

// row vector (length v) times row-major v x v matrix
inline std::vector<double> vec_mat(const std::vector<double>& q, const std::vector<double>& M,
                                   int v) {
    std::vector<double> out(v, 0.0);
    for (int a = 0; a < v; ++a) {
        const double qa = q[a];
        if (qa == 0.0) continue;
        const double* row = M.data() + static_cast<std::size_t>(a) * v;
        for (int b = 0; b < v; ++b) out[b] += qa * row[b];
    }
    return out;
}

inline std::vector<double> mat_mat(const std::vector<double>& A, const std::vector<double>& B,
                                   int v) {
    std::vector<double> out(static_cast<std::size_t>(v) * v, 0.0);
    for (int a = 0; a < v; ++a)
        for (int k = 0; k < v; ++k) {
            const double x = A[static_cast<std::size_t>(a) * v + k];
            if (x == 0.0) continue;
            const double* row = B.data() + static_cast<std::size_t>(k) * v;
            double* dst = out.data() + static_cast<std::size_t>(a) * v;
            for (int b = 0; b < v; ++b) dst[b] += x * row[b];
        }
    return out;
}

inline std::vector<double> identity(int v) {
    std::vector<double> m(static_cast<std::size_t>(v) * v, 0.0);
    for (int a = 0; a < v; ++a) m[static_cast<std::size_t>(a) * v + a] = 1.0;
    return m;
}

}  // namespace detail

// Message passing on the derivation tree of a fixed grammar. Marginals follow
// the branch path from the uniform root; joints split at the lowest common
// ancestor of the two positions. All quantities are exact up to double
// round-off, with no ensemble approximation: per-level branch transition
// matrices are the realised rule counts divided by m, and the hidden marginal
// at the common ancestor is itself propagated from the root.
class TreeDp {
public:
    explicit TreeDp(const Grammar& g) : grammar_(&g), v_(g.params.vocab_size) {
        const RhmParams& p = g.params;
        const int s = p.branching;
        const double inv_m = 1.0 / p.rules_per_symbol;

        // trans_[ell][b][parent*v + child]: probability that the rule chosen
        // for a level-ell parent puts `child` at branch b.
        trans_.assign(p.depth + 1, {});
        for (int ell = 1; ell <= p.depth; ++ell) {
            trans_[ell].assign(s, std::vector<double>(static_cast<std::size_t>(v_) * v_, 0.0));
            const RuleTable& table = g.level(ell);
            for (Symbol parent = 0; parent < v_; ++parent)
                for (int r = 0; r < p.rules_per_symbol; ++r) {
                    auto t = table.tuple(parent, r);
                    for (int b = 0; b < s; ++b)
                        trans_[ell][b][static_cast<std::size_t>(parent) * v_ + t[b]] += inv_m;
                }
        }

        // Hidden marginal of the rightmost node at every level (masked-token
        // ancestor chain), and descent matrices from a level-j symbol to its
        // rightmost leaf.
        right_marginal_.assign(p.depth + 1, {});
        right_marginal_[p.depth].assign(v_, 1.0 / v_);
        for (int ell = p.depth - 1; ell >= 0; --ell)
            right_marginal_[ell] =
                detail::vec_mat(right_marginal_[ell + 1], trans_[ell + 1][s - 1], v_);

        right_descent_.assign(p.depth, {});
        right_descent_[0] = detail::identity(v_);
        for (int j = 1; j < p.depth; ++j)
            right_descent_[j] = detail::mat_mat(trans_[j][s - 1], right_descent_[j - 1], v_);
    }

    const Grammar& grammar() const { return *grammar_; }

    // Distribution of the hidden symbol at the last node of a level.
    const std::vector<double>& right_marginal(int level) const { return right_marginal_.at(level); }

    TokenDistribution marginal(std::uint64_t position) const {
        const RhmParams& p = grammar_->params;
        const std::uint64_t d = p.seq_len();
        if (position < 1 || position > d)
            throw constraint_error("position out of range: " + std::to_string(position));
        std::vector<double> q(right_marginal_[p.depth]);
        for (int ell = p.depth; ell >= 1; --ell)
            q = detail::vec_mat(q, trans_[ell][branch_digit(position, ell)], v_);
        return {position, std::move(q)};
    }

    // Joint of position i and the masked last position d.
    JointDistribution joint(std::uint64_t position) const {
        const RhmParams& p = grammar_->params;
        const std::uint64_t d = p.seq_len();
        if (position < 1 || position >= d)
            throw constraint_error("joint position must satisfy 1 <= i < d");
        const int s = p.branching;
        const int ell = lca_level(d - position, p);

        // Split the ancestor's rule at the two diverging branches, then push
        // each side to its leaf.
        const std::vector<double>& q = right_marginal_[ell];
        const int bi = branch_digit(position, ell);
        std::vector<double> split(static_cast<std::size_t>(v_) * v_, 0.0);
        const RuleTable& table = grammar_->level(ell);
        const double inv_m = 1.0 / p.rules_per_symbol;
        for (Symbol parent = 0; parent < v_; ++parent) {
            const double w = q[parent] * inv_m;
            if (w == 0.0) continue;
            for (int r = 0; r < p.rules_per_symbol; ++r) {
                auto t = table.tuple(parent, r);
                split[static_cast<std::size_t>(t[bi]) * v_ + t[s - 1]] += w;
            }
        }

        std::vector<double> descent_i = detail::identity(v_);
        for (int lv = ell - 1; lv >= 1; --lv)
            descent_i = detail::mat_mat(descent_i, trans_[lv][branch_digit(position, lv)], v_);
        // probs[mu][nu] = sum_{a,b} descent_i[a][mu] * split[a][b] * descent_d[b][nu]
        std::vector<double> tmp(static_cast<std::size_t>(v_) * v_, 0.0);
        for (int a = 0; a < v_; ++a)
            for (int mu = 0; mu < v_; ++mu) {
                const double x = descent_i[static_cast<std::size_t>(a) * v_ + mu];
                if (x == 0.0) continue;
                for (int b = 0; b < v_; ++b)
                    tmp[static_cast<std::size_t>(mu) * v_ + b] +=
                        x * split[static_cast<std::size_t>(a) * v_ + b];
            }
        std::vector<double> probs =
            detail::mat_mat(tmp, right_descent_[ell - 1], v_);
        return {position, std::move(probs)};
    }

private:
    // Branch taken at the level-ell expansion on the path to a 1-based leaf.
    int branch_digit(std::uint64_t position, int ell) const {
        const std::uint64_t stride = *checked_pow(grammar_->params.branching, ell - 1);
        return static_cast<int>(((position - 1) / stride) % grammar_->params.branching);
    }

    const Grammar* grammar_;
    int v_;
    std::vector<std::vector<std::vector<double>>> trans_;
    std::vector<std::vector<double>> right_marginal_;
    std::vector<std::vector<double>> right_descent_;
};

inline TokenDistribution marginal(const Grammar& g, std::uint64_t position) {
    return TreeDp(g).marginal(position);
}

inline JointDistribution joint(const Grammar& g, std::uint64_t position) {
    return TreeDp(g).joint(position);
}

namespace detail {

// Number of distinct sequences, v * m^((s^L - 1)/(s - 1)), as a big integer.
inline BigInt sequence_count(const RhmParams& p, int level) {
    BigInt e = (big_pow(p.branching, level) - 1) / (p.branching - 1);  // internal nodes
    BigInt base = p.rules_per_symbol, result = 1;
    while (e > 0) {
        if ((e & 1) != 0) result *= base;
        base *= base;
        e >>= 1;
    }
    return BigInt(p.vocab_size) * result;
}

// All strings a level-`level` symbol can generate, per symbol, in rule-major
// order. Sizes are m^((s^level - 1)/(s - 1)) strings of length s^level each.
inline std::vector<std::vector<Sequence>> level_expansions(const Grammar& g, int level) {
    const RhmParams& p = g.params;
    std::vector<std::vector<Sequence>> cur(p.vocab_size);
    for (Symbol a = 0; a < p.vocab_size; ++a) cur[a] = {Sequence{a}};
    for (int ell = 1; ell <= level; ++ell) {
        std::vector<std::vector<Sequence>> next(p.vocab_size);
        const RuleTable& table = g.level(ell);
        for (Symbol parent = 0; parent < p.vocab_size; ++parent) {
            for (int r = 0; r < p.rules_per_symbol; ++r) {
                auto t = table.tuple(parent, r);
                // cartesian product over the s children, leftmost slowest
                std::vector<std::size_t> idx(p.branching, 0);
                while (true) {
                    Sequence seq;
                    for (int k = 0; k < p.branching; ++k) {
                        const Sequence& part = cur[t[k]][idx[k]];
                        seq.insert(seq.end(), part.begin(), part.end());
                    }
                    next[parent].push_back(std::move(seq));
                    int k = p.branching - 1;
                    while (k >= 0 && ++idx[k] == cur[t[k]].size()) idx[k--] = 0;
                    if (k < 0) break;
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

// Every generable sequence with its probability. Unambiguity makes the
// derivation-to-sequence map injective, so each sequence appears once with
// probability 1/(v * m^internal_nodes). Refuses instances whose sequence
// count exceeds `cap`.
inline std::vector<std::pair<Sequence, double>> enumerate_sequences(
    const Grammar& g, std::uint64_t cap = kDefaultEnumerationCap) {
    const RhmParams& p = g.params;
    const BigInt total = detail::sequence_count(p, p.depth);
    if (total > cap)
        throw cap_error("enumeration needs " + total.str() + " sequences, cap is " +
                        std::to_string(cap));
    const double prob = 1.0 / static_cast<double>(total);
    auto expansions = detail::level_expansions(g, p.depth);
    std::vector<std::pair<Sequence, double>> out;
    out.reserve(static_cast<std::size_t>(total));
    for (Symbol root = 0; root < p.vocab_size; ++root)
        for (auto& seq : expansions[root]) out.emplace_back(std::move(seq), prob);
    return out;
}

// Enumeration dump: CSV with the sequence quoted (space-separated tokens).
inline void write_enumeration_csv(const std::vector<std::pair<Sequence, double>>& rows,
                                  std::ostream& out) {
    out << "seq,prob\n";
    for (const auto& [seq, prob] : rows) {
        out << '"';
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << seq[i];
        }
        out << "\"," << format_float(prob) << '\n';
    }
}

// Exact conditional distribution of the masked last token given the previous
// s^ell - 1 tokens of its level-ell subtree: uniform over the completions the
// grammar allows. The context length must be s^ell - 1 for some ell <= L.
inline TokenDistribution conditional_last(const Grammar& g, std::span<const Symbol> context,
                                          std::uint64_t cap = kDefaultEnumerationCap) {
    const RhmParams& p = g.params;
    const std::uint64_t d = p.seq_len();
    int ell = 0;
    std::uint64_t width = 1;  // s^ell
    while (width < context.size() + 1) {
        width *= static_cast<std::uint64_t>(p.branching);
        ++ell;
    }
    if (width != context.size() + 1 || ell > p.depth)
        throw constraint_error("context length must be s^ell - 1 with ell <= L, got " +
                               std::to_string(context.size()));
    for (Symbol tok : context)
        if (tok < 0 || tok >= p.vocab_size) throw constraint_error("context token out of range");

    if (ell == 0)
        return {d, std::vector<double>(p.vocab_size, 1.0 / p.vocab_size)};

    const BigInt total = detail::sequence_count(p, ell);
    if (total > cap)
        throw cap_error("conditional needs " + total.str() + " subtree strings, cap is " +
                        std::to_string(cap));
    auto expansions = detail::level_expansions(g, ell);
    std::set<Symbol> completions;
    for (Symbol sym = 0; sym < p.vocab_size; ++sym)
        for (const Sequence& str : expansions[sym])
            if (std::equal(context.begin(), context.end(), str.begin()))
                completions.insert(str.back());
    if (completions.empty())
        throw incompatible_context_error("context is generated by no derivation");
    TokenDistribution dist{d, std::vector<double>(p.vocab_size, 0.0)};
    for (Symbol tok : completions) dist.probs[tok] = 1.0 / static_cast<double>(completions.size());
    return dist;
}

struct ConditionalLoss {
    int level = 0;
    double loss_nats = 0.0;  // E over contexts of ln N(context)
    double mean_n = 0.0;     // E over contexts of N(context)
};

// Cross-entropy of the masked token given the aligned level-ell context,
// taking the completions as equiprobable: E[ln N]. The context measure is the
// exact one, i.e. the hidden marginal of the subtree ancestor pushed through
// the realised rules, so weakly reachable contexts are weighted accordingly.
inline ConditionalLoss exact_conditional_loss(const Grammar& g, int level,
                                              std::uint64_t cap = kDefaultEnumerationCap) {
    const RhmParams& p = g.params;
    if (level < 0 || level > p.depth)
        throw constraint_error("loss level out of range: " + std::to_string(level));
    if (level == 0)
        return {0, std::log(static_cast<double>(p.vocab_size)),
                static_cast<double>(p.vocab_size)};

    const BigInt total = detail::sequence_count(p, level);
    if (total > cap)
        throw cap_error("loss at ell = " + std::to_string(level) + " needs " + total.str() +
                        " subtree strings, cap is " + std::to_string(cap));

    const std::vector<double> q = TreeDp(g).right_marginal(level);
    auto expansions = detail::level_expansions(g, level);
    const double per_string =
        1.0 / static_cast<double>(big_pow(p.rules_per_symbol,
                                          static_cast<unsigned>((*checked_pow(p.branching, level) - 1) /
                                                                (p.branching - 1))));

    struct ContextStats {
        double prob = 0.0;
        std::set<Symbol> completions;
    };
    std::map<Sequence, ContextStats> contexts;
    for (Symbol sym = 0; sym < p.vocab_size; ++sym)
        for (const Sequence& str : expansions[sym]) {
            Sequence prefix(str.begin(), str.end() - 1);
            auto& stats = contexts[std::move(prefix)];
            stats.prob += q[sym] * per_string;
            stats.completions.insert(str.back());
        }

    ConditionalLoss result{level, 0.0, 0.0};
    for (const auto& [prefix, stats] : contexts) {
        const auto n = static_cast<double>(stats.completions.size());
        result.loss_nats += stats.prob * std::log(n);
        result.mean_n += stats.prob * n;
    }
    return result;
}

// Loss report rows for ell = 0..max_level.
inline void write_loss_csv(const std::vector<ConditionalLoss>& rows, std::ostream& out) {
    out << "ell,loss_nats,mean_N\n";
    for (const auto& row : rows)
        out << row.level << ',' << format_float(row.loss_nats) << ',' << format_float(row.mean_n)
            << '\n';
}

}  // namespace rhm
