#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rhm/correlations.hpp"
#include "rhm/errors.hpp"
#include "rhm/io.hpp"
#include "rhm/rng.hpp"

namespace rhm {

// Character-level tokenised text: each distinct code point becomes one
// integer token, numbered in first-occurrence order.
struct Corpus {
    std::vector<Symbol> tokens;
    std::vector<char32_t> alphabet;

    int vocab_size() const { return static_cast<int>(alphabet.size()); }
};

namespace detail {

inline char32_t decode_utf8(const std::string& bytes, std::size_t& pos) {
    const auto lead = static_cast<unsigned char>(bytes[pos]);
    int extra;
    char32_t cp;
    if (lead < 0x80) {
        extra = 0;
        cp = lead;
    } else if ((lead >> 5) == 0x6) {
        extra = 1;
        cp = lead & 0x1f;
    } else if ((lead >> 4) == 0xe) {
        extra = 2;
        cp = lead & 0x0f;
    } else if ((lead >> 3) == 0x1e) {
        extra = 3;
        cp = lead & 0x07;
    } else {
        throw io_error("invalid UTF-8 at byte " + std::to_string(pos));
    }
    if (pos + extra >= bytes.size()) throw io_error("truncated UTF-8 at byte " + std::to_string(pos));
    for (int i = 1; i <= extra; ++i) {
        const auto cont = static_cast<unsigned char>(bytes[pos + i]);
        if ((cont >> 6) != 0x2) throw io_error("invalid UTF-8 at byte " + std::to_string(pos + i));
        cp = (cp << 6) | (cont & 0x3f);
    }
    static constexpr char32_t minima[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < minima[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
        throw io_error("invalid UTF-8 at byte " + std::to_string(pos));
    pos += extra + 1;
    return cp;
}

}  // namespace detail

inline Corpus load_corpus(const std::string& path, std::size_t alphabet_cap = 256) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error("read failed: " + path);
    if (bytes.empty()) throw constraint_error("corpus is empty: " + path);

    Corpus corpus;
    corpus.tokens.reserve(bytes.size());
    std::unordered_map<char32_t, Symbol> ids;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const char32_t cp = detail::decode_utf8(bytes, pos);
        auto [it, inserted] = ids.emplace(cp, static_cast<Symbol>(corpus.alphabet.size()));
        if (inserted) {
            if (corpus.alphabet.size() >= alphabet_cap)
                throw constraint_error("alphabet exceeds cap of " + std::to_string(alphabet_cap));
            corpus.alphabet.push_back(cp);
        }
        corpus.tokens.push_back(it->second);
    }
    return corpus;
}

// Correlation curve of `block_count` blocks of `block_len` consecutive
// tokens, each block's last token playing the masked position. Block starts
// are drawn uniformly with replacement; `exhaustive` instead slides over
// every valid offset once and ignores (block_count, seed).
inline CorrCurve corpus_corr_curve(const Corpus& corpus, std::size_t block_len,
                                   std::uint64_t block_count, std::uint64_t seed,
                                   bool exhaustive = false, int threads = 1) {
    if (block_len < 2) throw constraint_error("block length must be >= 2");
    if (corpus.tokens.size() < block_len)
        throw constraint_error("block longer than corpus: " + std::to_string(block_len) + " > " +
                               std::to_string(corpus.tokens.size()));
    const std::uint64_t starts = corpus.tokens.size() - block_len + 1;
    const std::uint64_t total = exhaustive ? starts : block_count;
    if (total < 2) throw constraint_error("empirical estimation needs P >= 2 blocks");

    auto run = [&](std::uint64_t lo, std::uint64_t hi, CorrAccumulator& acc) {
        for (std::uint64_t b = lo; b < hi; ++b) {
            const std::uint64_t start =
                exhaustive ? b : CounterRng(seed, stream::corpus_blocks, b).below(starts);
            acc.add({corpus.tokens.data() + start, block_len});
        }
    };

    CorrAccumulator acc(block_len, corpus.vocab_size());
    if (threads <= 1 || total < 1024) {
        run(0, total, acc);
    } else {
        std::vector<CorrAccumulator> parts(threads, acc);
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (total + threads - 1) / threads;
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    const std::uint64_t lo = w * chunk;
                    run(lo, std::min(total, lo + chunk), parts[w]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (const auto& part : parts) acc.merge(part);
    }
    return acc.finalize("corpus,d=" + std::to_string(block_len));
}

// --- power-law fit ---------------------------------------------------------

struct PowerLawFit {
    double beta = 0.0;       // decay exponent of value ~ amplitude * t^(-beta)
    double amplitude = 0.0;
    double residual = 0.0;   // RMS residual in log-log space
    std::uint64_t t_min = 0, t_max = 0;
    std::size_t points_used = 0;

    double z() const { return 2.0 * beta; }
};

// Ordinary least squares of ln(value) on ln(t) over the window, using only
// points safely above the noise floor (value > margin * floor).
inline PowerLawFit fit_powerlaw(const CorrCurve& curve, std::uint64_t t_min, std::uint64_t t_max,
                                double margin = 2.0) {
    if (t_min < 1 || t_max < t_min) throw constraint_error("invalid fit window");
    std::vector<std::pair<double, double>> pts;  // (ln t, ln value)
    for (const auto& e : curve.entries) {
        if (e.t < t_min || e.t > t_max || e.value <= 0.0) continue;
        if (e.noise_floor && e.value <= margin * *e.noise_floor) continue;
        pts.emplace_back(std::log(static_cast<double>(e.t)), std::log(e.value));
    }
    if (pts.size() < 3)
        throw constraint_error("insufficient unsaturated points in fit window: have " +
                               std::to_string(pts.size()) + ", need 3");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double denom = n * sxx - sx * sx;
    if (denom <= 0) throw constraint_error("degenerate fit window");
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    PowerLawFit fit;
    fit.beta = -slope;
    fit.amplitude = std::exp(intercept);
    fit.t_min = t_min;
    fit.t_max = t_max;
    fit.points_used = pts.size();
    double ss = 0;
    for (auto [x, y] : pts) {
        const double r = y - (intercept + slope * x);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    return fit;
}

// Distance where the fitted decay meets the sampling noise floor:
// amplitude * t^(-beta) = (v^2 P)^(-1/2), i.e. t* = (amplitude*v*sqrt(P))^(1/beta).
inline double corpus_effective_window(const PowerLawFit& fit, double sample_count, int vocab_size) {
    if (fit.beta <= 0) throw constraint_error("effective window needs beta > 0");
    if (sample_count < 1) throw constraint_error("P >= 1 required");
    return std::pow(fit.amplitude * vocab_size * std::sqrt(sample_count), 1.0 / fit.beta);
}

// --- loss-table rescaling ---------------------------------------------------

struct LossRow {
    double train_size = 0.0;  // P
    double context = 0.0;     // t
    double loss = 0.0;        // nats
};

struct CollapsedRow {
    LossRow in;
    double x = 0.0;   // P / t^z
    double y1 = 0.0;  // loss * P^alpha
    double y2 = 0.0;  // loss * t^(alpha*z)
};

inline std::vector<LossRow> read_loss_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line)[0] != "P")
        throw io_error("not a loss-table CSV (expected header P,t,loss): " + path);
    std::vector<LossRow> rows;
    std::unordered_map<std::string, bool> seen;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) throw io_error("malformed loss-table row: " + line);
        LossRow row{parse_double(fields[0], "P"), parse_double(fields[1], "t"),
                    parse_double(fields[2], "loss")};
        if (row.train_size <= 0 || row.context <= 0)
            throw constraint_error("loss-table P and t must be positive");
        if (!seen.emplace(fields[0] + "|" + fields[1], true).second)
            throw constraint_error("duplicate (P, t) pair in loss table: " + line);
        rows.push_back(row);
    }
    return rows;
}

// Pure rescaling of an externally produced loss table onto the collapse
// coordinates; no fitting happens here.
inline std::vector<CollapsedRow> collapse_rescale(const std::vector<LossRow>& table, double alpha,
                                                  double z) {
    if (alpha < 0) throw constraint_error("alpha >= 0 required");
    if (z <= 0) throw constraint_error("z > 0 required");
    std::vector<CollapsedRow> out;
    out.reserve(table.size());
    for (const auto& row : table) {
        if (row.train_size <= 0 || row.context <= 0)
            throw constraint_error("loss-table P and t must be positive");
        CollapsedRow c;
        c.in = row;
        c.x = row.train_size / std::pow(row.context, z);
        c.y1 = row.loss * std::pow(row.train_size, alpha);
        c.y2 = row.loss * std::pow(row.context, alpha * z);
        out.push_back(c);
    }
    return out;
}

// Convenience estimate of alpha from the saturated branch of the table,
// where the loss depends on t alone as t^(-alpha*z): regress ln(loss) on
// ln(t) over rows with P / t^z >= x_split.
inline double fit_alpha(const std::vector<LossRow>& table, double z, double x_split = 1.0) {
    if (z <= 0) throw constraint_error("z > 0 required");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const auto& row : table) {
        if (row.train_size / std::pow(row.context, z) < x_split || row.loss <= 0) continue;
        const double x = std::log(row.context), y = std::log(row.loss);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) throw constraint_error("too few rows with x >= x_split to fit alpha");
    const double denom = n * sxx - sx * sx;
    if (denom <= 0) throw constraint_error("alpha fit needs at least two distinct context lengths");
    const double slope = (n * sxy - sx * sy) / denom;
    return -slope / z;
}

inline void write_collapse_csv(const std::vector<CollapsedRow>& rows, std::ostream& out) {
    out << "P,t,loss,x,y1,y2\n";
    for (const auto& r : rows)
        out << format_float(r.in.train_size) << ',' << format_float(r.in.context) << ','
            << format_float(r.in.loss) << ',' << format_float(r.x) << ',' << format_float(r.y1)
            << ',' << format_float(r.y2) << '\n';
}

}  // namespace rhm
