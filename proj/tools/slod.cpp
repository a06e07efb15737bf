#include "slod/experiment.hpp"
#include "slod/parallel.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    int threads = 0;
    int fine = 0;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--fine", flags.fine, "fine divisions per side")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", flags.seed, "dual-node seed")->check(CLI::NonNegativeNumber);
}

slod::ExperimentConfig resolve(const CommonFlags& flags) {
    slod::ExperimentConfig c = flags.config.empty() ? slod::ExperimentConfig{} : slod::load_config(flags.config);
    if (!flags.out.empty()) c.output_dir = flags.out;
    if (flags.threads > 0) c.threads = flags.threads;
    if (flags.fine > 0) c.fine_divisions = flags.fine;
    if (flags.seed >= 0) c.dual_seed = static_cast<std::uint64_t>(flags.seed);
    slod::validate_config(c);
    slod::set_thread_count(c.threads);
    return c;
}

bool all_pass(const std::vector<slod::CellResult>& cells) {
    for (const auto& r : cells)
        if (!r.pass()) return false;
    return !cells.empty();
}

int cmd_solve(const CommonFlags& flags) {
    const auto c = resolve(flags);
    const auto cells = slod::run_sweep(c);
    std::cout << "wrote " << c.output_dir << "/experiments.csv (" << cells.size() << " cells)\n";
    return all_pass(cells) ? 0 : 1;
}

int cmd_table(const CommonFlags& flags, const std::string& csv) {
    const auto c = resolve(flags);
    std::vector<slod::CellResult> cells = csv.empty() ? slod::run_sweep(c) : slod::read_experiments_csv(csv);
    const auto rows = slod::convergence_slopes(cells);
    std::filesystem::create_directories(c.output_dir);
    std::ofstream out(std::filesystem::path(c.output_dir) / "convergence.csv");
    out << "beta,norm,slope,points\n";
    std::printf("%-10s %-7s %8s %6s\n", "beta", "norm", "slope", "points");
    for (const auto& r : rows) {
        out << r.beta << ',' << r.norm << ',' << r.slope << ',' << r.points << '\n';
        std::printf("%-10.0e %-7s %8.3f %6d\n", r.beta, r.norm.c_str(), r.slope, r.points);
    }
    return all_pass(cells) ? 0 : 1;
}

int cmd_diagnose(const CommonFlags& flags) {
    const auto c = resolve(flags);
    std::filesystem::create_directories(c.output_dir);
    int failures = 0;
    for (int nh : c.coarse_divisions)
        for (double beta : c.betas) {
            try {
                const std::string report = slod::diagnose_cell(c, nh, beta);
                std::cout << report << '\n';
                std::ofstream(std::filesystem::path(c.output_dir) / ("diagnose_" + slod::cell_tag(nh, beta) + ".txt"))
                    << report;
            } catch (const std::exception& err) {
                std::cerr << slod::cell_tag(nh, beta) << ": " << err.what() << '\n';
                ++failures;
            }
        }
    return failures == 0 ? 0 : 1;
}

int cmd_dump(const CommonFlags& flags) {
    const auto c = resolve(flags);
    int failures = 0;
    for (int nh : c.coarse_divisions)
        for (double beta : c.betas) {
            try {
                slod::dump_cell_basis(c, nh, beta);
                std::cout << "dumped " << slod::cell_tag(nh, beta) << '\n';
            } catch (const std::exception& err) {
                std::cerr << slod::cell_tag(nh, beta) << ": " << err.what() << '\n';
                ++failures;
            }
        }
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral localized orthogonal decomposition solver"};
    app.require_subcommand(1);
    CommonFlags solve_flags, table_flags, diag_flags, dump_flags;
    std::string csv;
    auto* solve = app.add_subcommand("solve", "run the (H, beta) sweep and write certificates and CSVs");
    add_common(solve, solve_flags);
    auto* table = app.add_subcommand("table", "fit convergence orders in H");
    add_common(table, table_flags);
    table->add_option("--csv", csv, "fit an existing experiments.csv instead of solving")->check(CLI::ExistingFile);
    auto* diagnose = app.add_subcommand("diagnose", "spectrum and K^T A K structure report");
    add_common(diagnose, diag_flags);
    auto* dump = app.add_subcommand("dump-basis", "write kernel and multiscale bases for offline reuse");
    add_common(dump, dump_flags);
    CLI11_PARSE(app, argc, argv);
    try {
        if (*solve) return cmd_solve(solve_flags);
        if (*table) return cmd_table(table_flags, csv);
        if (*diagnose) return cmd_diagnose(diag_flags);
        if (*dump) return cmd_dump(dump_flags);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 2;
}
