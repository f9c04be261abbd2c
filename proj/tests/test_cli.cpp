#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pathquant/cli.hpp"
#include "pathquant/config.hpp"

using namespace pathquant;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("pathquant_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "run.ini";
    std::ofstream(p) << text;
    return p;
}

const char* kPlaten = R"([model]
name = platen
alpha = 1
beta = 1
sigma = 1
xi = 0.05
lambda = 1
eta = 0.000314
y0 = 0.1

[quantizer]
allocation = 23, 7, 3, 2

[scheme]
method = fq, mc
n = 20
integrator = rk4
M = 1000
seed = 42

[market]
s0 = 2
r = 0.03
T = 1
)";

const char* kBlanc = R"([model]
name = blanc
beta0 = 0.01
beta1 = 0.1
beta2 = 0.5
alpha = 0
lambda1 = 5
lambda2 = 2
r1_0 = 0.1
r2_0 = 0.04

[scheme]
N = 32
n = 50
K = 16

[market]
T = 1
)";

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        cache = fs::temp_directory_path() / "pathquant_test_cache";
        fs::create_directories(cache);
        setenv("PATHQUANT_CACHE", cache.c_str(), 1);
    }
    fs::path cache;
    std::ostringstream out, err;
};

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    return s.replace(at, from.size(), to);
}

}  // namespace

TEST(Config, RoundTrip) {
    const auto c = Config::parse(std::string(kPlaten) + "\n# trailing comment\n[output]\ntiming=false ; note\n");
    const auto again = Config::parse(c.serialize());
    EXPECT_EQ(again, c);
    EXPECT_EQ(again.serialize(), c.serialize());
    EXPECT_EQ(again.hash(), c.hash());
    EXPECT_EQ(c.numbers("quantizer", "allocation"), (std::vector<double>{23, 7, 3, 2}));
    EXPECT_EQ(c.list("scheme", "method"), (std::vector<std::string>{"fq", "mc"}));
    EXPECT_EQ(c.number("market", "s0"), 2.0);
    EXPECT_EQ(c.integer("scheme", "n"), 20);
    EXPECT_FALSE(c.flag_or("output", "timing", true));
}

TEST(Config, HashTracksContent) {
    auto c = Config::parse(kPlaten);
    const auto h = c.hash();
    EXPECT_EQ(h.size(), 16u);
    c.set("scheme", "seed", "43");
    EXPECT_NE(c.hash(), h);
    c.set("scheme", "seed", " 42 ");
    EXPECT_EQ(c.hash(), h);
}

TEST(Config, Errors) {
    auto line_of = [](const std::string& text) -> long {
        try {
            Config::parse(text);
        } catch (const ParseError& e) {
            return static_cast<long>(e.line());
        }
        return -1;
    };
    EXPECT_EQ(line_of("name = x\n"), 1);
    EXPECT_EQ(line_of("[model]\nname = a\nname = b\n"), 3);
    EXPECT_EQ(line_of("[model]\nbogus = 1\n"), 2);
    EXPECT_EQ(line_of("[nowhere]\n"), 1);
    EXPECT_EQ(line_of("[model]\njust text\n"), 2);
    EXPECT_EQ(line_of("[model\n"), 1);
    const auto c = Config::parse("[model]\nname = platen\nxi = abc\n");
    EXPECT_THROW(c.number("model", "xi"), ValidationError);
    try {
        c.number("model", "eta");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("model.eta"), std::string::npos);
    }
}

TEST_F(CliTest, GridsAreCached) {
    const auto dir = fresh_dir("grids");
    setenv("PATHQUANT_CACHE", dir.c_str(), 1);
    EXPECT_EQ(cli::cmd_grids("1..32", cli::cache_directory(nullptr), out), cli::kOk);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
    EXPECT_EQ(files, 32u);
    EXPECT_NE(out.str().find("32 computed, 0 cached"), std::string::npos);
    const auto stamp = fs::last_write_time(cli::grid_file(dir, 17));
    out.str("");
    EXPECT_EQ(cli::cmd_grids("1..32", dir, out), cli::kOk);
    EXPECT_NE(out.str().find("0 computed, 32 cached"), std::string::npos);
    EXPECT_EQ(fs::last_write_time(cli::grid_file(dir, 17)), stamp);
    EXPECT_EQ(load_grid(cli::grid_file(dir, 5).string()), optimize(5, 1e-12, 1000));
}

TEST_F(CliTest, GridsUnwritableDirectory) {
    const int code = cli::guarded(err, [&] { return cli::cmd_grids("1..4", "/dev/null/grids", out); });
    EXPECT_EQ(code, cli::kIo);
    EXPECT_NE(err.str().find("cannot create directory"), std::string::npos);
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_grids("4..1", cache, out); }), cli::kValidation);
}

TEST_F(CliTest, QuantizePlaten) {
    const auto dir = fresh_dir("quantize");
    cli::Globals g;
    g.config = write_config(dir, kPlaten).string();
    g.out = (dir / "out").string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_quantize(g, err); }), cli::kOk) << err.str();
    const auto csv = slurp(dir / "out" / "bundle.csv");
    EXPECT_EQ(csv.rfind("# config_hash=" + Config::load(*g.config).hash() + "\nt,index,weight,y,y_g1,y_g2,y_h\n", 0), 0u);
    EXPECT_EQ(count_lines(csv), 2u + 966u * 21u);
    EXPECT_FALSE(fs::exists(dir / "out" / ".pathquant.lock"));
}

TEST_F(CliTest, OutputDirectoryFromConfigUnlessOverridden) {
    const auto dir = fresh_dir("outdir");
    const std::string body = std::string(kBlanc) + "\n[output]\ndirectory = " + (dir / "from_config").string() + "\n";
    cli::Globals g;
    g.config = write_config(dir, replace(replace(body, "N = 32", "N = 4"), "n = 50", "n = 2")).string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, {}, {}, out, err); }), cli::kOk) << err.str();
    EXPECT_TRUE(fs::exists(dir / "from_config" / "rmq_transitions.csv"));
    g.out = (dir / "flag").string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, {}, {}, out, err); }), cli::kOk) << err.str();
    EXPECT_TRUE(fs::exists(dir / "flag" / "rmq_transitions.csv"));
}

TEST_F(CliTest, RmqIntegrationModes) {
    const auto dir = fresh_dir("integration");
    cli::Globals g;
    g.out = dir.string();
    const std::string small = replace(replace(kBlanc, "N = 32", "N = 4"), "n = 50", "n = 2");
    g.config = write_config(dir, replace(small, "K = 16", "K = 8\nintegration = quadrature")).string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, {}, {}, out, err); }), cli::kOk) << err.str();
    g.config = write_config(dir, replace(small, "K = 16", "K = 8\nintegration = midpoint")).string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, {}, {}, out, err); }), cli::kValidation);
    g.config = write_config(dir, replace(small, "K = 16", "K = 513")).string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, {}, {}, out, err); }), cli::kValidation);
}

TEST_F(CliTest, QuantizeGuyonWarnsOnPositivity) {
    const auto dir = fresh_dir("guyon");
    cli::Globals g;
    g.config = write_config(dir, "[model]\nname = guyon\nbeta0 = 0.04\nbeta1 = 0.1\nbeta2 = 0.6\nlambda1 = 2\n"
                                 "lambda2 = 6\nr1_0 = 0\nr2_0 = 0.04\n[quantizer]\nbudget = 96\n[scheme]\nn = 50\n"
                                 "[market]\nT = 1\n")
                   .string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_quantize(g, err); }), cli::kOk) << err.str();
    EXPECT_NE(err.str().find("warning: positivity condition lambda2 < 2 lambda1 violated"), std::string::npos);
}

TEST_F(CliTest, QuantizeMissingParameter) {
    const auto dir = fresh_dir("missing");
    cli::Globals g;
    g.config = write_config(dir, replace(kPlaten, "eta = 0.000314\n", "")).string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_quantize(g, err); }), cli::kValidation);
    EXPECT_NE(err.str().find("model.eta"), std::string::npos);
}

TEST_F(CliTest, QuantizeBlancIsUnsupported) {
    const auto dir = fresh_dir("blancq");
    cli::Globals g;
    g.config = write_config(dir, std::string(kBlanc) + "[quantizer]\nbudget = 16\n").string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_quantize(g, err); }), cli::kValidation);
}

TEST_F(CliTest, PriceSweepAndDeterminism) {
    const auto dir = fresh_dir("price");
    auto text = replace(kPlaten, "lambda = 1\n", "lambda = 1, 2, 3\n");
    text = replace(text, "T = 1\n", "T = 0.5, 1\n");
    cli::Globals g;
    g.config = write_config(dir, text).string();
    g.out = (dir / "a").string();
    g.threads = 2;
    ASSERT_EQ(cli::guarded(err, [&] { return cli::cmd_price(g, err); }), cli::kOk) << err.str();
    const auto first = slurp(dir / "a" / "prices.csv");
    EXPECT_EQ(count_lines(first), 2u + 12u);
    std::size_t fq = 0, mc = 0;
    std::istringstream rows(first);
    std::string row;
    while (std::getline(rows, row)) {
        fq += row.rfind("fq,", 0) == 0;
        mc += row.rfind("mc,", 0) == 0;
    }
    EXPECT_EQ(fq, 6u);
    EXPECT_EQ(mc, 6u);
    EXPECT_NE(first.find("\nmethod,lambda,T,N,n,value,ci_low,ci_high,runtime_s\n"), std::string::npos);
    g.out = (dir / "b").string();
    g.threads = 1;
    ASSERT_EQ(cli::guarded(err, [&] { return cli::cmd_price(g, err); }), cli::kOk) << err.str();
    EXPECT_EQ(slurp(dir / "b" / "prices.csv"), first);
    g.seed = 7;
    g.out = (dir / "c").string();
    ASSERT_EQ(cli::guarded(err, [&] { return cli::cmd_price(g, err); }), cli::kOk) << err.str();
    EXPECT_NE(slurp(dir / "c" / "prices.csv"), first);
}

TEST_F(CliTest, PriceRejectsOtherModels) {
    const auto dir = fresh_dir("pricebad");
    cli::Globals g;
    g.config = write_config(dir, kBlanc).string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_price(g, err); }), cli::kValidation);
}

TEST_F(CliTest, RmqWritesEveryStep) {
    const auto dir = fresh_dir("rmq");
    cli::Globals g;
    g.config = write_config(dir, kBlanc).string();
    g.out = (dir / "out").string();
    ASSERT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, std::string("y"), std::size_t{0}, out, err); }), cli::kOk)
        << err.str();
    std::size_t grids = 0;
    for (const auto& e : fs::directory_iterator(dir / "out"))
        grids += e.path().filename().string().rfind("rmq_grid_", 0) == 0;
    EXPECT_EQ(grids, 51u);
    EXPECT_TRUE(fs::exists(dir / "out" / "rmq_transitions.csv"));
    EXPECT_DOUBLE_EQ(std::stod(out.str()), BlancParams{}.y0());
}

TEST_F(CliTest, RmqValidationFailure) {
    const auto dir = fresh_dir("rmqbad");
    auto text = replace(kBlanc, "beta0 = 0.01\n", "beta0 = 0\n");
    text = replace(text, "r2_0 = 0.04\n", "r2_0 = 0\n");
    cli::Globals g;
    g.config = write_config(dir, text).string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, std::nullopt, std::nullopt, out, err); }), cli::kValidation);
    EXPECT_NE(err.str().find("beta0 + beta2 r2_0 > 0"), std::string::npos);
}

TEST_F(CliTest, LockedOutputDirectory) {
    const auto dir = fresh_dir("locked");
    std::ofstream(dir / ".pathquant.lock") << "";
    cli::Globals g;
    g.config = write_config(dir, kBlanc).string();
    g.out = dir.string();
    EXPECT_EQ(cli::guarded(err, [&] { return cli::cmd_rmq(g, std::nullopt, std::nullopt, out, err); }), cli::kIo);
    EXPECT_NE(err.str().find("locked"), std::string::npos);
}
