#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rhm/bigmath.hpp"
#include "rhm/exact.hpp"
#include "rhm/io.hpp"

namespace rhm {

enum class CurveSource { analytic, exact, empirical };

inline const char* to_string(CurveSource s) {
    switch (s) {
        case CurveSource::analytic: return "analytic";
        case CurveSource::exact: return "exact";
        default: return "empirical";
    }
}

// Correlation strength at each token distance t from the masked last
// position: the root mean square over the v^2 vocabulary pairs of the
// co-occurrence covariance. Empirical curves carry the sampling-noise floor.
struct CorrPoint {
    std::uint64_t t = 0;
    double value = 0.0;
    std::optional<double> noise_floor;
};

struct CorrCurve {
    CurveSource source = CurveSource::exact;
    std::optional<std::uint64_t> sample_count;  // P, for empirical curves
    std::string label;
    std::vector<CorrPoint> entries;  // strictly increasing in t
};

// --- analytical ensemble values -----------------------------------------

// Ensemble plateau of the correlation function over the distances whose
// lowest common ancestor sits at `level`: v^(-3/2) * m^(1/2 - level).
// The squared value is the exact integer reciprocal 1/(v^3 m^(2l-1)), so one
// correctly rounded sqrt beats chaining pow with fractional exponents.
inline double analytic_plateau(int vocab_size, int rules_per_symbol, int level) {
    const double denom_sq =
        static_cast<double>(big_pow(vocab_size, 3) * big_pow(rules_per_symbol, 2 * level - 1));
    if (std::isfinite(denom_sq)) return 1.0 / std::sqrt(denom_sq);
    return std::pow(vocab_size, -1.5) * std::pow(rules_per_symbol, 0.5 - level);
}

// Same with the observable token replaced by its whole s-tuple; smaller by
// exactly 1/sqrt(m).
inline double analytic_tuple_plateau(int vocab_size, int rules_per_symbol, int level) {
    const double denom_sq =
        static_cast<double>(big_pow(vocab_size, 3) * big_pow(rules_per_symbol, 2 * level));
    if (std::isfinite(denom_sq)) return 1.0 / std::sqrt(denom_sq);
    return std::pow(vocab_size, -1.5) * std::pow(static_cast<double>(rules_per_symbol), -level);
}

// Squared plateau as an exact rational, m^(1 - 2*level) / v^3. This is the
// formula value; the m = v^(s-1) zero-correlation case is not special-cased
// here so algebraic identities against the sample complexities stay exact.
inline BigRat analytic_plateau_squared(int vocab_size, int rules_per_symbol, int level) {
    BigRat r = BigRat(1, big_pow(vocab_size, 3));
    const BigRat m = rules_per_symbol;
    for (int i = 0; i < 2 * level - 1; ++i) r /= m;
    return r;
}

struct PlateauRow {
    int level = 0;
    double token_plateau = 0.0;
    double tuple_plateau = 0.0;
    bool exactly_zero = false;  // m = v^(s-1): the distribution factorises
};

inline std::vector<PlateauRow> analytic_plateaus(const RhmParams& params) {
    params.validate();
    const bool zero =
        checked_pow(params.vocab_size, params.branching - 1) ==
        std::optional<std::uint64_t>(static_cast<std::uint64_t>(params.rules_per_symbol));
    std::vector<PlateauRow> rows;
    for (int ell = 1; ell <= params.depth; ++ell) {
        PlateauRow row{ell, 0.0, 0.0, zero};
        if (!zero) {
            row.token_plateau = analytic_plateau(params.vocab_size, params.rules_per_symbol, ell);
            row.tuple_plateau =
                analytic_tuple_plateau(params.vocab_size, params.rules_per_symbol, ell);
        }
        rows.push_back(row);
    }
    return rows;
}

// Stepwise ensemble curve over all distances 1..d-1.
inline CorrCurve analytic_corr_curve(const RhmParams& params,
                                     std::uint64_t max_points = 1ull << 20) {
    params.validate();
    const std::uint64_t d = params.seq_len();
    if (d - 1 > max_points)
        throw cap_error("curve would hold " + std::to_string(d - 1) + " points, cap is " +
                        std::to_string(max_points));
    auto plateaus = analytic_plateaus(params);
    CorrCurve curve{CurveSource::analytic, std::nullopt, params_label(params), {}};
    for (std::uint64_t t = 1; t < d; ++t)
        curve.entries.push_back({t, plateaus[lca_level(t, params) - 1].token_plateau, std::nullopt});
    return curve;
}

// Power-law exponent approximating the stepwise decay: log(m)/log(s).
inline double beta_exponent(const RhmParams& params) {
    return std::log(static_cast<double>(params.rules_per_symbol)) /
           std::log(static_cast<double>(params.branching));
}

// --- exact curve for one realisation ------------------------------------

inline double rms_covariance(const JointDistribution& joint, const TokenDistribution& mi,
                             const TokenDistribution& md) {
    const std::size_t v = mi.probs.size();
    double sum_sq = 0.0;
    for (std::size_t mu = 0; mu < v; ++mu)
        for (std::size_t nu = 0; nu < v; ++nu) {
            const double c = joint.probs[mu * v + nu] - mi.probs[mu] * md.probs[nu];
            sum_sq += c * c;
        }
    return std::sqrt(sum_sq) / static_cast<double>(v);
}

inline CorrCurve exact_corr_curve(const Grammar& g, std::uint64_t max_points = 1ull << 20) {
    const std::uint64_t d = g.params.seq_len();
    if (d - 1 > max_points)
        throw cap_error("curve would hold " + std::to_string(d - 1) + " points, cap is " +
                        std::to_string(max_points));
    TreeDp dp(g);
    const TokenDistribution md = dp.marginal(d);
    CorrCurve curve{CurveSource::exact, std::nullopt, params_label(g.params), {}};
    for (std::uint64_t t = 1; t < d; ++t) {
        const std::uint64_t i = d - t;
        curve.entries.push_back({t, rms_covariance(dp.joint(i), dp.marginal(i), md), std::nullopt});
    }
    return curve;
}

// Pointwise average of exact curves over consecutive grammar seeds.
inline CorrCurve ensemble_exact_corr_curve(const RhmParams& params, int num_seeds) {
    if (num_seeds < 1) throw constraint_error("ensemble size must be >= 1");
    RhmParams p = params;
    CorrCurve mean;
    for (int k = 0; k < num_seeds; ++k) {
        p.grammar_seed = params.grammar_seed + static_cast<std::uint64_t>(k);
        CorrCurve c = exact_corr_curve(build_grammar(p));
        if (k == 0) {
            mean = std::move(c);
        } else {
            for (std::size_t i = 0; i < mean.entries.size(); ++i)
                mean.entries[i].value += c.entries[i].value;
        }
    }
    for (auto& e : mean.entries) e.value /= num_seeds;
    mean.label = params_label(params) + ",ensemble=" + std::to_string(num_seeds);
    return mean;
}

// --- empirical estimation ------------------------------------------------

// Streaming plug-in estimator of the correlation curve. Counting is integer
// and mergeable, so disjoint sample ranges can be accumulated by independent
// workers and added together without changing any result bit.
class CorrAccumulator {
public:
    CorrAccumulator(std::size_t seq_len, int vocab_size)
        : len_(seq_len), v_(vocab_size),
          pair_counts_((seq_len - 1) * static_cast<std::size_t>(vocab_size) * vocab_size, 0),
          pos_counts_(seq_len * static_cast<std::size_t>(vocab_size), 0) {
        if (seq_len < 2) throw constraint_error("sequences must have length >= 2");
        if (vocab_size < 1) throw constraint_error("vocabulary must be non-empty");
    }

    void add(std::span<const Symbol> seq) {
        if (seq.size() != len_) throw constraint_error("sequence length mismatch");
        for (std::size_t i = 0; i < len_; ++i) {
            const Symbol tok = seq[i];
            if (tok < 0 || tok >= v_)
                throw constraint_error("token out of range: " + std::to_string(tok));
            ++pos_counts_[i * v_ + tok];
        }
        const Symbol last = seq[len_ - 1];
        for (std::size_t t = 1; t < len_; ++t)
            ++pair_counts_[((t - 1) * v_ + seq[len_ - 1 - t]) * v_ + last];
        ++count_;
    }

    void merge(const CorrAccumulator& other) {
        if (other.len_ != len_ || other.v_ != v_)
            throw constraint_error("cannot merge incompatible accumulators");
        for (std::size_t i = 0; i < pair_counts_.size(); ++i) pair_counts_[i] += other.pair_counts_[i];
        for (std::size_t i = 0; i < pos_counts_.size(); ++i) pos_counts_[i] += other.pos_counts_[i];
        count_ += other.count_;
    }

    std::uint64_t count() const { return count_; }

    CorrCurve finalize(std::string label = {}) const {
        if (count_ < 2) throw constraint_error("empirical estimation needs P >= 2 samples");
        const double inv_p = 1.0 / static_cast<double>(count_);
        const double floor = 1.0 / (v_ * std::sqrt(static_cast<double>(count_)));
        CorrCurve curve{CurveSource::empirical, count_, std::move(label), {}};
        for (std::size_t t = 1; t < len_; ++t) {
            const std::size_t i = len_ - 1 - t;  // 0-based position at distance t
            double sum_sq = 0.0;
            for (int mu = 0; mu < v_; ++mu) {
                const double pmu = pos_counts_[i * v_ + mu] * inv_p;
                for (int nu = 0; nu < v_; ++nu) {
                    const double pnu = pos_counts_[(len_ - 1) * v_ + nu] * inv_p;
                    const double joint = pair_counts_[((t - 1) * v_ + mu) * v_ + nu] * inv_p;
                    const double c = joint - pmu * pnu;
                    sum_sq += c * c;
                }
            }
            curve.entries.push_back({t, std::sqrt(sum_sq) / v_, floor});
        }
        return curve;
    }

private:
    std::size_t len_;
    int v_;
    std::vector<std::uint64_t> pair_counts_;  // [t-1][mu][nu], nu = last token
    std::vector<std::uint64_t> pos_counts_;   // [position][mu]
    std::uint64_t count_ = 0;
};

inline CorrCurve empirical_corr_curve(const std::vector<Sequence>& samples, int vocab_size,
                                      int threads = 1, std::string label = {}) {
    if (samples.empty()) throw constraint_error("empirical estimation needs P >= 2 samples");
    CorrAccumulator acc(samples.front().size(), vocab_size);
    if (threads <= 1 || samples.size() < 1024) {
        for (const auto& seq : samples) acc.add(seq);
    } else {
        std::vector<CorrAccumulator> parts(threads, acc);
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        const std::size_t chunk = (samples.size() + threads - 1) / threads;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    const std::size_t lo = w * chunk;
                    const std::size_t hi = std::min(samples.size(), lo + chunk);
                    for (std::size_t i = lo; i < hi; ++i) parts[w].add(samples[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (const auto& part : parts) acc.merge(part);
    }
    return acc.finalize(std::move(label));
}

// --- effective context window --------------------------------------------

struct EffectiveWindow {
    int level = 0;         // ell*: deepest level whose plateau clears the noise floor
    std::uint64_t t_star = 0;  // s^ell* - 1
};

// Largest level whose ensemble plateau strictly exceeds the sampling noise
// (v^2 P)^(-1/2); equivalently P > v * m^(2*level - 1), which is evaluated in
// exact integer arithmetic so a floor exactly on a plateau leaves that level
// unresolved. With m = v^(s-1) there are no correlations to resolve at all.
inline EffectiveWindow effective_window(const RhmParams& params, const BigInt& sample_count) {
    params.validate();
    if (sample_count < 1) throw constraint_error("P >= 1 required");
    EffectiveWindow w{0, 0};
    const bool zero =
        checked_pow(params.vocab_size, params.branching - 1) ==
        std::optional<std::uint64_t>(static_cast<std::uint64_t>(params.rules_per_symbol));
    if (zero) return w;
    for (int ell = 1; ell <= params.depth; ++ell) {
        const BigInt threshold =
            BigInt(params.vocab_size) * big_pow(params.rules_per_symbol, 2 * ell - 1);
        if (sample_count > threshold) w.level = ell;
    }
    w.t_star = *checked_pow(params.branching, w.level) - 1;
    return w;
}

// --- CSV -----------------------------------------------------------------

inline void write_corr_csv(const CorrCurve& curve, std::ostream& out) {
    out << "t,value,noise_floor\n";
    for (const auto& e : curve.entries) {
        out << e.t << ',' << format_float(e.value) << ',';
        if (e.noise_floor) out << format_float(*e.noise_floor);
        out << '\n';
    }
}

inline void write_corr_csv(const CorrCurve& curve, const std::string& path) {
    auto out = open_output(path);
    write_corr_csv(curve, out);
    if (!out) throw io_error("write failed: " + path);
}

inline CorrCurve read_corr_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line)[0] != "t")
        throw io_error("not a correlation CSV: " + path);
    CorrCurve curve{CurveSource::exact, std::nullopt, path, {}};
    bool any_floor = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) throw io_error("malformed correlation CSV row: " + line);
        CorrPoint pt;
        pt.t = parse_u64(fields[0], "distance");
        pt.value = parse_double(fields[1], "correlation value");
        if (!fields[2].empty()) {
            pt.noise_floor = parse_double(fields[2], "noise floor");
            any_floor = true;
        }
        if (!curve.entries.empty() && pt.t <= curve.entries.back().t)
            throw io_error("correlation CSV distances must increase");
        if (pt.value < 0) throw io_error("correlation values must be non-negative");
        curve.entries.push_back(pt);
    }
    if (any_floor) curve.source = CurveSource::empirical;
    return curve;
}

}  // namespace rhm
