#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "rhm/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliFixture {
public:
    CliFixture() {
        dir_ = fs::temp_directory_path() / ("rhm_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    ~CliFixture() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    RunResult run(const std::string& args) const {
        const auto out = dir_ / "stdout.txt";
        const auto err = dir_ / "stderr.txt";
        const std::string cmd = std::string(RHM_CLI_PATH) + " " + args + " > " + out.string() +
                                " 2> " + err.string();
        const int status = std::system(cmd.c_str());
        RunResult r;
        r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

private:
    fs::path dir_;
};

}  // namespace

TEST_CASE("theory-table emits the staircase sample complexities", "[cli]") {
    CliFixture cli;
    auto table = cli.path("theory.csv");
    auto r = cli.run("theory-table --v 32 --s 2 --m 8 --L 3 --out " + table.string());
    REQUIRE(r.exit_code == 0);
    auto csv = slurp(table);
    REQUIRE(csv.find("1,256,") != std::string::npos);
    REQUIRE(csv.find("2,16384,") != std::string::npos);
    REQUIRE(csv.find("3,1048576,") != std::string::npos);
    REQUIRE(csv.rfind("ell,P_ell,Nbar,Lbar_nats,Ctilde,Ctilde_tuple\n", 0) == 0);
}

TEST_CASE("window prints the resolved level and distance", "[cli]") {
    CliFixture cli;
    auto r = cli.run("window --v 32 --s 2 --m 8 --L 4 --P 20000");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out == "ell*=2 t*=3\n");
    auto r2 = cli.run("window --v 32 --s 2 --m 8 --L 4 --P 5000");
    REQUIRE(r2.out == "ell*=1 t*=1\n");
}

TEST_CASE("constraint violations exit 3 and cite the inequality", "[cli]") {
    CliFixture cli;
    auto r = cli.run("grammar-new --v 4 --s 2 --m 8 --L 1 --out " + cli.path("g.json").string());
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.err.find("error code=3") != std::string::npos);
    REQUIRE(r.err.find("m > v^(s-1)") != std::string::npos);
}

TEST_CASE("usage, io and cap failures map onto distinct exit codes", "[cli]") {
    CliFixture cli;
    REQUIRE(cli.run("no-such-command").exit_code == 2);
    REQUIRE(cli.run("window --bogus-flag 1").exit_code == 2);
    REQUIRE(cli.run("--help").exit_code == 0);
    auto help = cli.run("sample --help");
    REQUIRE(help.exit_code == 0);
    for (const char* flag : {"--grammar", "--P", "--sample-seed", "--start-index", "--out"})
        REQUIRE(help.out.find(flag) != std::string::npos);
    REQUIRE(cli.run("sample --grammar /nonexistent.json --count 2 --out " +
                    cli.path("s.txt").string())
                .exit_code == 4);

    // enumeration beyond the cap: L=3, v=8, m=8 has 16777216 sequences
    auto big = cli.path("big.json");
    REQUIRE(cli.run("grammar-new --v 8 --s 2 --m 8 --L 3 --out " + big.string()).exit_code == 0);
    auto r = cli.run("exact-loss --grammar " + big.string() + " --out " +
                     cli.path("loss.csv").string());
    REQUIRE(r.exit_code == 5);
    REQUIRE(r.err.find("error code=5") != std::string::npos);
}

TEST_CASE("errors raised inside worker threads still exit cleanly", "[cli]") {
    CliFixture cli;
    std::ofstream bad(cli.path("bad.txt"));
    for (int i = 0; i < 2000; ++i) bad << "0 1 2 3\n";  // token 3 >= v below
    bad.close();
    auto r = cli.run("--threads 4 corr-empirical --samples " + cli.path("bad.txt").string() +
                     " --v 3 --out " + cli.path("c.csv").string());
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.err.find("token out of range") != std::string::npos);
}

TEST_CASE("the sampling pipeline is reproducible end to end", "[cli]") {
    CliFixture cli;
    auto g = cli.path("g.json");
    REQUIRE(cli.run("grammar-new --v 8 --s 2 --m 2 --L 3 --grammar-seed 5 --out " + g.string())
                .exit_code == 0);

    auto s1 = cli.path("s1.txt"), s2 = cli.path("s2.txt"), s3 = cli.path("s3.txt");
    const std::string sample_flags = " --count 2000 --sample-seed 9 --out ";
    REQUIRE(cli.run("sample --grammar " + g.string() + sample_flags + s1.string()).exit_code == 0);
    REQUIRE(cli.run("sample --grammar " + g.string() + sample_flags + s2.string()).exit_code == 0);
    REQUIRE(cli.run("--threads 4 sample --grammar " + g.string() + sample_flags + s3.string())
                .exit_code == 0);
    REQUIRE(slurp(s1) == slurp(s2));
    REQUIRE(slurp(s1) == slurp(s3));

    auto c1 = cli.path("c1.csv"), c2 = cli.path("c2.csv");
    const std::string emp = "corr-empirical --samples " + s1.string() + " --v 8 --out ";
    REQUIRE(cli.run(emp + c1.string()).exit_code == 0);
    REQUIRE(cli.run("--threads 4 " + emp + c2.string()).exit_code == 0);
    REQUIRE(slurp(c1) == slurp(c2));
    REQUIRE(slurp(c1).rfind("t,value,noise_floor\n", 0) == 0);

    // grammar construction itself is reproducible
    auto g2 = cli.path("g2.json");
    REQUIRE(cli.run("grammar-new --v 8 --s 2 --m 2 --L 3 --grammar-seed 5 --out " + g2.string())
                .exit_code == 0);
    REQUIRE(slurp(g) == slurp(g2));
}

TEST_CASE("exact and analytic curves come out of the same pipeline", "[cli]") {
    CliFixture cli;
    auto g = cli.path("g.json");
    REQUIRE(cli.run("grammar-new --v 4 --s 2 --m 2 --L 2 --out " + g.string()).exit_code == 0);
    REQUIRE(cli.run("corr-exact --grammar " + g.string() + " --out " +
                    cli.path("exact.csv").string())
                .exit_code == 0);
    REQUIRE(cli.run("corr-exact --v 8 --s 2 --m 2 --L 3 --ensemble 10 --out " +
                    cli.path("ens.csv").string())
                .exit_code == 0);
    REQUIRE(cli.run("corr-theory --v 8 --s 2 --m 2 --L 3 --out " +
                    cli.path("theory.csv").string())
                .exit_code == 0);
    auto theory = slurp(cli.path("theory.csv"));
    REQUIRE(theory.find("1,0.03125,\n") != std::string::npos);
    REQUIRE(theory.find("4,0.0078125,\n") != std::string::npos);

    auto loss = cli.path("loss.csv");
    REQUIRE(cli.run("exact-loss --grammar " + g.string() + " --out " + loss.string() +
                    " --dump-enumeration " + cli.path("enum.csv").string())
                .exit_code == 0);
    REQUIRE(slurp(loss).rfind("ell,loss_nats,mean_N\n", 0) == 0);
    auto enum_csv = slurp(cli.path("enum.csv"));
    REQUIRE(enum_csv.rfind("seq,prob\n", 0) == 0);
    REQUIRE(enum_csv.find("0.03125") != std::string::npos);  // 1/32
}

TEST_CASE("transform subcommand writes paired sample files", "[cli]") {
    CliFixture cli;
    auto g = cli.path("g.json");
    REQUIRE(cli.run("grammar-new --v 4 --s 2 --m 2 --L 2 --out " + g.string()).exit_code == 0);
    auto orig = cli.path("orig.txt"), probe = cli.path("new.txt");
    auto r = cli.run("transform --grammar " + g.string() +
                     " --kind reset --ell 1 --trials 50 --out-orig " + orig.string() +
                     " --out-new " + probe.string());
    REQUIRE(r.exit_code == 0);
    std::istringstream o(slurp(orig)), n(slurp(probe));
    std::string lo, ln;
    int lines = 0;
    while (std::getline(o, lo) && std::getline(n, ln)) {
        ++lines;
        // positions outside the transformed pair agree
        REQUIRE(lo.substr(4) == ln.substr(4));
    }
    REQUIRE(lines == 50);

    REQUIRE(cli.run("transform --grammar " + g.string() +
                    " --kind substitute --ell 2 --trials 5 --out-orig " + orig.string() +
                    " --out-new " + probe.string())
                .exit_code == 0);
    REQUIRE(cli.run("transform --grammar " + g.string() +
                    " --kind reset --ell 7 --trials 1 --out-orig " + orig.string() +
                    " --out-new " + probe.string())
                .exit_code == 3);
}

TEST_CASE("corpus subcommands fit and rescale end to end", "[cli]") {
    CliFixture cli;

    // correlated synthetic text: repeat blocks so nearby characters co-vary
    std::string text;
    rhm::CounterRng rng(3, rhm::stream::synthetic, 0);
    while (text.size() < 120000) {
        const char c = static_cast<char>('a' + rng.below(6));
        for (int k = 0; k < 4; ++k) text += c;
    }
    auto corpus_path = cli.path("corpus.txt");
    std::ofstream(corpus_path, std::ios::binary) << text;

    auto curve = cli.path("curve.csv");
    REQUIRE(cli.run("corpus-corr --input " + corpus_path.string() + " --d 33 --P 20000 --out " +
                    curve.string())
                .exit_code == 0);
    auto fit = cli.run("corpus-fit --curve " + curve.string() +
                       " --t-min 1 --t-max 16 --margin 1.5 --P 20000 --v 6 --out " +
                       cli.path("fit.json").string());
    REQUIRE(fit.exit_code == 0);
    REQUIRE(fit.out.find("beta=") != std::string::npos);
    REQUIRE(fit.out.find("t_star=") != std::string::npos);
    REQUIRE(slurp(cli.path("fit.json")).find("\"z\"") != std::string::npos);

    // same flags, same bytes, with and without worker threads
    auto curve2 = cli.path("curve2.csv"), curve3 = cli.path("curve3.csv");
    REQUIRE(cli.run("corpus-corr --input " + corpus_path.string() + " --d 33 --P 20000 --out " +
                    curve2.string())
                .exit_code == 0);
    REQUIRE(cli.run("--threads 3 corpus-corr --input " + corpus_path.string() +
                    " --d 33 --P 20000 --out " + curve3.string())
                .exit_code == 0);
    REQUIRE(slurp(curve) == slurp(curve2));
    REQUIRE(slurp(curve) == slurp(curve3));

    std::ofstream(cli.path("loss.csv")) << "P,t,loss\n100,4,0.5\n200,4,0.4\n100,8,0.6\n";
    auto collapse = cli.run("collapse --table " + cli.path("loss.csv").string() +
                            " --alpha 0.3 --z 2.8 --out " + cli.path("collapse.csv").string());
    REQUIRE(collapse.exit_code == 0);
    REQUIRE(slurp(cli.path("collapse.csv")).rfind("P,t,loss,x,y1,y2\n", 0) == 0);

    REQUIRE(cli.run("collapse --table " + cli.path("loss.csv").string() + " --z 2.8 --out " +
                    cli.path("c2.csv").string())
                .exit_code == 3);  // neither --alpha nor --fit-alpha
}
