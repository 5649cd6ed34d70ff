#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rhm/errors.hpp"
#include "rhm/params.hpp"
#include "rhm/rng.hpp"

namespace rhm {

// Production rules of one level: every parent symbol in 0..v-1 owns exactly m
// ordered s-tuples of child symbols. Stored flat, tuple-major.
class RuleTable {
public:
    RuleTable() = default;
    RuleTable(int vocab_size, int rules_per_symbol, int branching)
        : v_(vocab_size), m_(rules_per_symbol), s_(branching),
          data_(static_cast<std::size_t>(vocab_size) * rules_per_symbol * branching) {}

    int vocab_size() const { return v_; }
    int rules_per_symbol() const { return m_; }
    int branching() const { return s_; }

    std::span<const Symbol> tuple(Symbol parent, int rule) const {
        return {data_.data() + offset(parent, rule), static_cast<std::size_t>(s_)};
    }
    std::span<Symbol> tuple(Symbol parent, int rule) {
        return {data_.data() + offset(parent, rule), static_cast<std::size_t>(s_)};
    }

    // No level-(l-1) tuple may be producible by two parents; with m tuples per
    // parent this is equivalent to all v*m stored tuples being distinct.
    bool unambiguous() const {
        std::unordered_set<std::uint64_t> seen;
        for (Symbol p = 0; p < v_; ++p)
            for (int r = 0; r < m_; ++r)
                if (!seen.insert(encode(tuple(p, r))).second) return false;
        return true;
    }

    std::uint64_t encode(std::span<const Symbol> t) const {
        std::uint64_t code = 0;
        for (Symbol sym : t) code = code * v_ + static_cast<std::uint64_t>(sym);
        return code;
    }

private:
    std::size_t offset(Symbol parent, int rule) const {
        return (static_cast<std::size_t>(parent) * m_ + rule) * s_;
    }

    int v_ = 0, m_ = 0, s_ = 0;
    std::vector<Symbol> data_;
};

// One realisation of the ensemble: an unambiguous rule table per level.
// Immutable after construction; levels are numbered 1..L.
struct Grammar {
    RhmParams params;
    std::vector<RuleTable> tables;  // tables[ell - 1] holds the level-ell rules

    const RuleTable& level(int ell) const { return tables.at(static_cast<std::size_t>(ell) - 1); }
};

namespace detail {

// v*m distinct tuple codes, uniform over ordered selections from [0, v^s).
// Small spaces get a partial Fisher-Yates shuffle; large ones a hash-set
// rejection sampler, which stays cheap while v*m << v^s.
inline std::vector<std::uint64_t> draw_distinct_codes(std::uint64_t space, std::uint64_t count,
                                                      CounterRng& rng) {
    constexpr std::uint64_t kShuffleThreshold = 1ull << 24;
    std::vector<std::uint64_t> codes;
    codes.reserve(count);
    if (space <= kShuffleThreshold) {
        std::vector<std::uint64_t> all(space);
        for (std::uint64_t i = 0; i < space; ++i) all[i] = i;
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t j = i + rng.below(space - i);
            std::swap(all[i], all[j]);
            codes.push_back(all[i]);
        }
    } else {
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(count * 2);
        while (codes.size() < count) {
            std::uint64_t c = rng.below(space);
            if (seen.insert(c).second) codes.push_back(c);
        }
    }
    return codes;
}

inline void decode_tuple(std::uint64_t code, int vocab_size, std::span<Symbol> out) {
    for (std::size_t k = out.size(); k-- > 0;) {
        out[k] = static_cast<Symbol>(code % vocab_size);
        code /= vocab_size;
    }
}

}  // namespace detail

// Samples a grammar uniformly among all unambiguous rule assignments with
// exactly m tuples per parent: per level, draw v*m distinct s-tuples without
// replacement and hand out consecutive blocks of m. Deterministic in
// (params, grammar_seed); each level consumes its own random stream.
inline Grammar build_grammar(const RhmParams& params) {
    params.validate();
    Grammar g{params, {}};
    const std::uint64_t space = params.tuple_space();
    const std::uint64_t count =
        static_cast<std::uint64_t>(params.vocab_size) * params.rules_per_symbol;
    for (int ell = 1; ell <= params.depth; ++ell) {
        CounterRng rng(params.grammar_seed, stream::grammar, static_cast<std::uint64_t>(ell));
        auto codes = detail::draw_distinct_codes(space, count, rng);
        RuleTable table(params.vocab_size, params.rules_per_symbol, params.branching);
        std::size_t next = 0;
        for (Symbol parent = 0; parent < params.vocab_size; ++parent)
            for (int r = 0; r < params.rules_per_symbol; ++r)
                detail::decode_tuple(codes[next++], params.vocab_size, table.tuple(parent, r));
        g.tables.push_back(std::move(table));
    }
    return g;
}

// --- JSON serialization ------------------------------------------------
// Schema: {"L","s","v","m","grammar_seed","rules"} with
// rules[level][parent] = list of m arrays of s integers.

inline nlohmann::ordered_json grammar_to_json(const Grammar& g) {
    nlohmann::ordered_json j;
    j["L"] = g.params.depth;
    j["s"] = g.params.branching;
    j["v"] = g.params.vocab_size;
    j["m"] = g.params.rules_per_symbol;
    j["grammar_seed"] = g.params.grammar_seed;
    auto rules = nlohmann::ordered_json::array();
    for (int ell = 1; ell <= g.params.depth; ++ell) {
        auto level = nlohmann::ordered_json::array();
        for (Symbol p = 0; p < g.params.vocab_size; ++p) {
            auto parent = nlohmann::ordered_json::array();
            for (int r = 0; r < g.params.rules_per_symbol; ++r) {
                auto t = g.level(ell).tuple(p, r);
                parent.push_back(std::vector<Symbol>(t.begin(), t.end()));
            }
            level.push_back(std::move(parent));
        }
        rules.push_back(std::move(level));
    }
    j["rules"] = std::move(rules);
    return j;
}

inline Grammar grammar_from_json(const nlohmann::json& j) {
    try {
        RhmParams params;
        params.depth = j.at("L").get<int>();
        params.branching = j.at("s").get<int>();
        params.vocab_size = j.at("v").get<int>();
        params.rules_per_symbol = j.at("m").get<int>();
        params.grammar_seed = j.at("grammar_seed").get<std::uint64_t>();
        params.validate();
        const auto& rules = j.at("rules");
        if (rules.size() != static_cast<std::size_t>(params.depth))
            throw constraint_error("grammar JSON: rule table count != L");
        Grammar g{params, {}};
        for (int ell = 1; ell <= params.depth; ++ell) {
            const auto& level = rules.at(ell - 1);
            if (level.size() != static_cast<std::size_t>(params.vocab_size))
                throw constraint_error("grammar JSON: parent count != v");
            RuleTable table(params.vocab_size, params.rules_per_symbol, params.branching);
            for (Symbol p = 0; p < params.vocab_size; ++p) {
                const auto& parent = level.at(p);
                if (parent.size() != static_cast<std::size_t>(params.rules_per_symbol))
                    throw constraint_error("grammar JSON: rule count != m");
                for (int r = 0; r < params.rules_per_symbol; ++r) {
                    const auto& tup = parent.at(r);
                    if (tup.size() != static_cast<std::size_t>(params.branching))
                        throw constraint_error("grammar JSON: tuple size != s");
                    auto out = table.tuple(p, r);
                    for (int k = 0; k < params.branching; ++k) {
                        Symbol sym = tup.at(k).get<Symbol>();
                        if (sym < 0 || sym >= params.vocab_size)
                            throw constraint_error("grammar JSON: symbol out of range");
                        out[k] = sym;
                    }
                }
            }
            if (!table.unambiguous())
                throw constraint_error("grammar JSON: level " + std::to_string(ell) +
                                       " is ambiguous");
            g.tables.push_back(std::move(table));
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("malformed grammar JSON: ") + e.what());
    }
}

inline void save_grammar(const Grammar& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << grammar_to_json(g).dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

inline Grammar load_grammar(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("cannot parse grammar JSON " + path + ": " + e.what());
    }
    return grammar_from_json(j);
}

}  // namespace rhm
