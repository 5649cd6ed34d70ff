// Command-line surface of the toolkit. Every subcommand is a pure function
// of its flags: seeds default to 0 and identical invocations produce
// byte-identical artifacts.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rhm/rhm.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConstraint = 3;
constexpr int kExitIo = 4;
constexpr int kExitCap = 5;

void error_line(int code, const std::string& message) {
    std::cerr << "error code=" << code << " message=\"" << message << "\"\n";
}

struct ParamFlags {
    int depth = 1, branching = 2, vocab = 2, rules = 1;
    std::uint64_t grammar_seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--L", depth, "tree depth L")->required();
        cmd->add_option("--s", branching, "branching factor s")->required();
        cmd->add_option("--v", vocab, "vocabulary size v")->required();
        cmd->add_option("--m", rules, "production rules per symbol m")->required();
        cmd->add_option("--grammar-seed", grammar_seed, "grammar construction seed")
            ->capture_default_str();
    }

    rhm::RhmParams params() const {
        rhm::RhmParams p;
        p.depth = depth;
        p.branching = branching;
        p.vocab_size = vocab;
        p.rules_per_symbol = rules;
        p.grammar_seed = grammar_seed;
        return p;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"random hierarchy model: grammars, correlations, theory and corpus analysis"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads,
                   "worker threads; never changes output bytes")
        ->capture_default_str();

    // grammar-new ----------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("grammar-new", "construct a random unambiguous grammar");
        auto flags = std::make_shared<ParamFlags>();
        auto out = std::make_shared<std::string>();
        flags->attach(cmd);
        cmd->add_option("--out", *out, "grammar JSON path")->required();
        cmd->callback([flags, out] {
            auto g = rhm::build_grammar(flags->params());
            rhm::save_grammar(g, *out);
            std::cout << "grammar-new: wrote " << *out << " (" << rhm::params_label(g.params)
                      << ")\n";
        });
    }

    // sample ---------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("sample", "draw sequences from a grammar");
        auto grammar_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto count = std::make_shared<std::uint64_t>(1);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto start = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--grammar", *grammar_path, "grammar JSON path")->required();
        cmd->add_option("--P,--count", *count, "number of sequences")->required();
        cmd->add_option("--sample-seed", *seed, "sampling seed")->capture_default_str();
        cmd->add_option("--start-index", *start, "first sample index")->capture_default_str();
        cmd->add_option("--out", *out, "samples file path")->required();
        cmd->callback([=, &threads] {
            auto g = rhm::load_grammar(*grammar_path);
            g.params.sample_seed = *seed;
            std::vector<rhm::Sequence> samples(*count);
            auto worker = [&](std::uint64_t lo, std::uint64_t hi) {
                for (std::uint64_t i = lo; i < hi; ++i)
                    samples[i] = rhm::sample_derivation(g, *start + i).leaves();
            };
            if (threads <= 1 || *count < 1024) {
                worker(0, *count);
            } else {
                std::vector<std::exception_ptr> errors(threads);
                std::vector<std::thread> pool;
                const std::uint64_t chunk = (*count + threads - 1) / threads;
                for (int w = 0; w < threads; ++w)
                    pool.emplace_back([&, w] {
                        try {
                            const std::uint64_t lo = w * chunk;
                            worker(lo, std::min<std::uint64_t>(*count, lo + chunk));
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                for (auto& th : pool) th.join();
                for (const auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }
            rhm::write_samples(samples, *out);
            std::cout << "sample: wrote " << *count << " sequences to " << *out << "\n";
        });
    }

    // corr-theory ------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("corr-theory", "analytical stepwise correlation curve");
        auto flags = std::make_shared<ParamFlags>();
        auto out = std::make_shared<std::string>();
        flags->attach(cmd);
        cmd->add_option("--out", *out, "curve CSV path")->required();
        cmd->callback([flags, out] {
            auto curve = rhm::analytic_corr_curve(flags->params());
            rhm::write_corr_csv(curve, *out);
            std::cout << "corr-theory: wrote " << curve.entries.size() << " distances to " << *out;
            if (rhm::analytic_plateaus(flags->params()).front().exactly_zero)
                std::cout << " (m = v^(s-1): correlations are exactly zero)";
            std::cout << "\n";
        });
    }

    // corr-exact -------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("corr-exact",
                                       "exact correlation curve of one grammar realisation");
        auto grammar_path = std::make_shared<std::string>();
        auto flags = std::make_shared<ParamFlags>();
        auto ensemble = std::make_shared<int>(1);
        auto out = std::make_shared<std::string>();
        auto* from_file = cmd->add_option("--grammar", *grammar_path, "grammar JSON path");
        auto* l_opt = cmd->add_option("--L", flags->depth, "tree depth L")->excludes(from_file);
        auto* s_opt =
            cmd->add_option("--s", flags->branching, "branching factor s")->excludes(from_file);
        auto* v_opt =
            cmd->add_option("--v", flags->vocab, "vocabulary size v")->excludes(from_file);
        auto* m_opt = cmd->add_option("--m", flags->rules, "production rules per symbol m")
                          ->excludes(from_file);
        cmd->add_option("--grammar-seed", flags->grammar_seed, "first grammar seed")
            ->excludes(from_file);
        cmd->add_option("--ensemble", *ensemble,
                        "average the exact curve over this many consecutive seeds")
            ->excludes(from_file)
            ->capture_default_str();
        cmd->add_option("--out", *out, "curve CSV path")->required();
        cmd->callback([grammar_path, flags, ensemble, out, from_file, l_opt, s_opt, v_opt, m_opt] {
            rhm::CorrCurve curve;
            if (from_file->count() == 0 &&
                (l_opt->count() == 0 || s_opt->count() == 0 || v_opt->count() == 0 ||
                 m_opt->count() == 0))
                throw CLI::RequiredError("corr-exact: either --grammar or all of --L --s --v --m");
            if (from_file->count() > 0) {
                curve = rhm::exact_corr_curve(rhm::load_grammar(*grammar_path));
            } else {
                curve = *ensemble > 1
                            ? rhm::ensemble_exact_corr_curve(flags->params(), *ensemble)
                            : rhm::exact_corr_curve(rhm::build_grammar(flags->params()));
            }
            rhm::write_corr_csv(curve, *out);
            std::cout << "corr-exact: wrote " << curve.entries.size() << " distances to " << *out
                      << "\n";
        });
    }

    // corr-empirical -----------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("corr-empirical",
                                       "estimate the correlation curve from a samples file");
        auto samples_path = std::make_shared<std::string>();
        auto vocab = std::make_shared<int>(0);
        auto out = std::make_shared<std::string>();
        cmd->add_option("--samples", *samples_path, "samples file (one sequence per line)")
            ->required();
        cmd->add_option("--v", *vocab, "vocabulary size")->required();
        cmd->add_option("--out", *out, "curve CSV path")->required();
        cmd->callback([=, &threads] {
            auto samples = rhm::read_samples(*samples_path);
            auto curve = rhm::empirical_corr_curve(samples, *vocab, threads, *samples_path);
            rhm::write_corr_csv(curve, *out);
            std::cout << "corr-empirical: P=" << samples.size() << ", wrote "
                      << curve.entries.size() << " distances to " << *out << "\n";
        });
    }

    // window --------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("window", "effective context window for a training set size");
        auto flags = std::make_shared<ParamFlags>();
        auto count = std::make_shared<std::uint64_t>(1);
        flags->attach(cmd);
        cmd->add_option("--P", *count, "training set size")->required();
        cmd->callback([flags, count] {
            auto w = rhm::effective_window(flags->params(), rhm::BigInt(*count));
            std::cout << "ell*=" << w.level << " t*=" << w.t_star << "\n";
        });
    }

    // theory-table ----------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("theory-table",
                                       "per-level sample complexities, loss bounds and plateaus");
        auto flags = std::make_shared<ParamFlags>();
        auto out = std::make_shared<std::string>();
        flags->attach(cmd);
        cmd->add_option("--out", *out, "table CSV path")->required();
        cmd->callback([flags, out] {
            auto rows = rhm::theory_table(flags->params());
            auto stream = rhm::open_output(*out);
            rhm::write_theory_csv(rows, stream);
            std::cout << "theory-table: wrote " << rows.size() << " levels to " << *out << "\n";
        });
    }

    // exact-loss ---------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("exact-loss",
                                       "enumerated conditional losses of one realisation");
        auto grammar_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto ell_max = std::make_shared<int>(-1);
        auto cap = std::make_shared<std::uint64_t>(rhm::kDefaultEnumerationCap);
        auto dump = std::make_shared<std::string>();
        cmd->add_option("--grammar", *grammar_path, "grammar JSON path")->required();
        cmd->add_option("--ell-max", *ell_max, "deepest level to evaluate (default: L)");
        cmd->add_option("--cap", *cap, "enumeration size cap")->capture_default_str();
        cmd->add_option("--out", *out, "loss CSV path")->required();
        cmd->add_option("--dump-enumeration", *dump,
                        "also write the full sequence enumeration to this CSV");
        cmd->callback([grammar_path, out, ell_max, cap, dump] {
            auto g = rhm::load_grammar(*grammar_path);
            const int top = *ell_max < 0 ? g.params.depth : *ell_max;
            std::vector<rhm::ConditionalLoss> rows;
            for (int ell = 0; ell <= top; ++ell)
                rows.push_back(rhm::exact_conditional_loss(g, ell, *cap));
            auto stream = rhm::open_output(*out);
            rhm::write_loss_csv(rows, stream);
            if (!dump->empty()) {
                auto dump_stream = rhm::open_output(*dump);
                rhm::write_enumeration_csv(rhm::enumerate_sequences(g, *cap), dump_stream);
            }
            std::cout << "exact-loss: wrote levels 0.." << top << " to " << *out << "\n";
        });
    }

    // transform -----------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand(
            "transform", "apply subtree transformations and dump original/transformed pairs");
        auto grammar_path = std::make_shared<std::string>();
        auto kind = std::make_shared<std::string>();
        auto level = std::make_shared<int>(1);
        auto pos = std::make_shared<std::int64_t>(-1);
        auto trials = std::make_shared<std::uint64_t>(1);
        auto start = std::make_shared<std::uint64_t>(0);
        auto sample_seed = std::make_shared<std::uint64_t>(0);
        auto transform_seed = std::make_shared<std::uint64_t>(0);
        auto out_orig = std::make_shared<std::string>();
        auto out_new = std::make_shared<std::string>();
        cmd->add_option("--grammar", *grammar_path, "grammar JSON path")->required();
        cmd->add_option("--kind", *kind, "reset | substitute")
            ->check(CLI::IsMember({"reset", "substitute"}))
            ->required();
        cmd->add_option("--ell", *level, "level of the transformed node")->required();
        cmd->add_option("--pos", *pos, "node position (default: penultimate of the level)");
        cmd->add_option("--trials", *trials, "number of (sample, transform) pairs")
            ->capture_default_str();
        cmd->add_option("--start-index", *start, "first sample index")->capture_default_str();
        cmd->add_option("--sample-seed", *sample_seed, "sampling seed")->capture_default_str();
        cmd->add_option("--transform-seed", *transform_seed, "transformation seed")
            ->capture_default_str();
        cmd->add_option("--out-orig", *out_orig, "samples file for the originals")->required();
        cmd->add_option("--out-new", *out_new, "samples file for the transformed sequences")
            ->required();
        cmd->callback([=] {
            auto g = rhm::load_grammar(*grammar_path);
            g.params.sample_seed = *sample_seed;
            std::optional<std::uint64_t> position;
            if (*pos >= 0) position = static_cast<std::uint64_t>(*pos);
            std::vector<rhm::Sequence> originals, transformed;
            for (std::uint64_t k = 0; k < *trials; ++k) {
                auto tree = rhm::sample_derivation(g, *start + k);
                rhm::CounterRng rng(*transform_seed, rhm::stream::transform, k);
                auto probe = *kind == "reset"
                                 ? rhm::transform_reset(g, tree, *level, rng, position)
                                 : rhm::transform_substitute(g, tree, *level, rng, position);
                originals.push_back(tree.leaves());
                transformed.push_back(probe.leaves());
            }
            rhm::write_samples(originals, *out_orig);
            rhm::write_samples(transformed, *out_new);
            std::cout << "transform: wrote " << *trials << " " << *kind << " pairs to " << *out_orig
                      << " and " << *out_new << "\n";
        });
    }

    // corpus-corr --------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("corpus-corr",
                                       "correlation curve of sampled blocks of a text corpus");
        auto input = std::make_shared<std::string>();
        auto block_len = std::make_shared<std::uint64_t>(0);
        auto count = std::make_shared<std::uint64_t>(0);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto cap = std::make_shared<std::uint64_t>(256);
        auto exhaustive = std::make_shared<bool>(false);
        auto out = std::make_shared<std::string>();
        cmd->add_option("--input", *input, "UTF-8 text file")->required();
        cmd->add_option("--d", *block_len, "block length; the last token is the masked position")
            ->required();
        cmd->add_option("--P", *count, "number of blocks sampled with replacement");
        cmd->add_option("--seed", *seed, "block sampling seed")->capture_default_str();
        cmd->add_option("--alphabet-cap", *cap, "maximum distinct characters")
            ->capture_default_str();
        cmd->add_flag("--exhaustive", *exhaustive, "use every block offset once instead of sampling");
        cmd->add_option("--out", *out, "curve CSV path")->required();
        cmd->callback([=, &threads] {
            if (!*exhaustive && *count == 0)
                throw rhm::constraint_error("either --P or --exhaustive is required");
            auto corpus = rhm::load_corpus(*input, *cap);
            auto curve = rhm::corpus_corr_curve(corpus, *block_len, *count, *seed, *exhaustive,
                                                threads);
            rhm::write_corr_csv(curve, *out);
            std::cout << "corpus-corr: v=" << corpus.vocab_size() << " P=" << *curve.sample_count
                      << ", wrote " << curve.entries.size() << " distances to " << *out << "\n";
        });
    }

    // corpus-fit -----------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("corpus-fit",
                                       "fit a power law to a correlation curve CSV");
        auto curve_path = std::make_shared<std::string>();
        auto t_min = std::make_shared<std::uint64_t>(2);
        auto t_max = std::make_shared<std::uint64_t>(64);
        auto margin = std::make_shared<double>(2.0);
        auto count = std::make_shared<double>(0.0);
        auto vocab = std::make_shared<int>(0);
        auto out = std::make_shared<std::string>();
        cmd->add_option("--curve", *curve_path, "correlation curve CSV")->required();
        cmd->add_option("--t-min", *t_min, "fit window lower edge")->capture_default_str();
        cmd->add_option("--t-max", *t_max, "fit window upper edge")->capture_default_str();
        cmd->add_option("--margin", *margin, "exclude points within margin * noise floor")
            ->capture_default_str();
        auto* p_opt = cmd->add_option("--P", *count, "also report t*(P) for this sample count");
        cmd->add_option("--v", *vocab, "vocabulary size used for t*(P)")->needs(p_opt);
        cmd->add_option("--out", *out, "optional JSON report path");
        cmd->callback([=] {
            auto curve = rhm::read_corr_csv(*curve_path);
            auto fit = rhm::fit_powerlaw(curve, *t_min, *t_max, *margin);
            std::cout << "corpus-fit: beta=" << rhm::format_float(fit.beta)
                      << " z=" << rhm::format_float(fit.z())
                      << " amplitude=" << rhm::format_float(fit.amplitude)
                      << " residual=" << rhm::format_float(fit.residual)
                      << " points=" << fit.points_used;
            if (p_opt->count() > 0) {
                if (*vocab <= 0) throw rhm::constraint_error("--P needs --v");
                std::cout << " t_star="
                          << rhm::format_float(rhm::corpus_effective_window(fit, *count, *vocab));
            }
            std::cout << "\n";
            if (!out->empty()) {
                nlohmann::ordered_json j;
                j["beta"] = fit.beta;
                j["z"] = fit.z();
                j["amplitude"] = fit.amplitude;
                j["residual"] = fit.residual;
                j["t_min"] = fit.t_min;
                j["t_max"] = fit.t_max;
                j["points_used"] = fit.points_used;
                auto stream = rhm::open_output(*out);
                stream << j.dump(2) << '\n';
            }
        });
    }

    // collapse ----------------------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("collapse",
                                       "rescale an external loss table onto collapse coordinates");
        auto table_path = std::make_shared<std::string>();
        auto alpha = std::make_shared<double>(0.0);
        auto z = std::make_shared<double>(0.0);
        auto x_split = std::make_shared<double>(1.0);
        auto do_fit = std::make_shared<bool>(false);
        auto out = std::make_shared<std::string>();
        cmd->add_option("--table", *table_path, "loss table CSV with header P,t,loss")->required();
        auto* alpha_opt = cmd->add_option("--alpha", *alpha, "scaling-law exponent alpha");
        cmd->add_option("--z", *z, "dynamical exponent z = 2*beta")->required();
        cmd->add_flag("--fit-alpha", *do_fit, "estimate alpha from the saturated branch instead");
        cmd->add_option("--x-split", *x_split, "saturated branch is x = P/t^z >= this")
            ->capture_default_str();
        cmd->add_option("--out", *out, "collapse CSV path")->required();
        cmd->callback([=] {
            auto table = rhm::read_loss_csv(*table_path);
            double a = *alpha;
            if (*do_fit)
                a = rhm::fit_alpha(table, *z, *x_split);
            else if (alpha_opt->count() == 0)
                throw rhm::constraint_error("either --alpha or --fit-alpha is required");
            auto rows = rhm::collapse_rescale(table, a, *z);
            auto stream = rhm::open_output(*out);
            rhm::write_collapse_csv(rows, stream);
            std::cout << "collapse: alpha=" << rhm::format_float(a) << " z="
                      << rhm::format_float(*z) << ", wrote " << rows.size() << " rows to " << *out
                      << "\n";
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        error_line(kExitUsage, e.what());
        return kExitUsage;
    } catch (const rhm::cap_error& e) {
        error_line(kExitCap, e.what());
        return kExitCap;
    } catch (const rhm::io_error& e) {
        error_line(kExitIo, e.what());
        return kExitIo;
    } catch (const rhm::constraint_error& e) {
        error_line(kExitConstraint, e.what());
        return kExitConstraint;
    } catch (const std::exception& e) {
        error_line(1, e.what());
        return 1;
    }
    return 0;
}
