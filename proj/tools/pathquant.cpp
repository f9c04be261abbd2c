#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pathquant/cli.hpp"

int main(int argc, char** argv) {
    namespace cli = pathquant::cli;
    CLI::App app{"Functional and recursive marginal quantization of path-dependent volatility models"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the verb

    cli::Globals g;
    std::string config;
    std::uint64_t seed = 0;
    app.add_option("--config", config, "Run configuration file");
    std::string out;
    auto* out_opt = app.add_option("--out", out, "Output directory (default output.directory, else .)");
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "Overrides scheme.seed");

    auto* grids = app.add_subcommand("grids", "Compute and cache optimal N(0,1) quantizers");
    std::string levels;
    grids->add_option("--levels", levels, "Level range a..b")->required();

    auto* quantize = app.add_subcommand("quantize", "Integrate the codeword bundle and write bundle.csv");
    auto* price = app.add_subcommand("price", "Zero-coupon bond prices by FQ and/or MC into prices.csv");

    auto* rmq = app.add_subcommand("rmq", "Recursive marginal quantization grids and transitions");
    std::string expect;
    std::size_t at = 0;
    auto* expect_opt = rmq->add_option("--expect", expect, "Print E[component] at a step: y, y_g1, y_g2, y_h1, y_h2");
    auto* at_opt = rmq->add_option("--at", at, "Step for --expect (default n)");

    CLI11_PARSE(app, argc, argv);

    if (!config.empty()) g.config = config;
    if (*seed_opt) g.seed = seed;
    if (*out_opt) g.out = out;

    return cli::guarded(std::cerr, [&] {
        if (*grids) {
            std::optional<pathquant::Config> cfg;
            if (g.config) cfg = cli::load_config(g);
            return cli::cmd_grids(levels, cli::cache_directory(cfg ? &*cfg : nullptr), std::cout);
        }
        if (*quantize) return cli::cmd_quantize(g, std::cerr);
        if (*price) return cli::cmd_price(g, std::cerr);
        std::optional<std::string> e;
        std::optional<std::size_t> k;
        if (*expect_opt) e = expect;
        if (*at_opt) k = at;
        (void)rmq;
        return cli::cmd_rmq(g, e, k, std::cout, std::cerr);
    });
}
