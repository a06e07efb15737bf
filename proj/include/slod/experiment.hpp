#pragma once

#include "slod/aux_space.hpp"
#include "slod/coefficient.hpp"
#include "slod/corrector.hpp"
#include "slod/dual_space.hpp"
#include "slod/kernel_basis.hpp"
#include "slod/mesh.hpp"
#include "slod/multiscale_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace slod {

/// Flat key=value configuration; lists are comma-separated.
struct ExperimentConfig {
    std::vector<int> coarse_divisions{8, 16, 32};
    int fine_divisions = 128;
    int refine_ratio = 0;  ///< alternative to fine_divisions when a single H is listed
    std::vector<double> betas{1e2, 1e4, 1e6};
    std::string coefficient = "four_channels";  ///< four_channels | constant | raster | irregular
    double coefficient_value = 1.0;             ///< constant coefficient value
    std::string raster;                         ///< mask path for coefficient=raster
    std::uint64_t irregular_seed = 7;
    std::string source = "right_half";          ///< right_half | constant | raster
    double source_value = 1.0;
    std::string source_raster;
    std::string f_norm = "auto";  ///< certificate norm: auto (1/2 for right_half, else exact) or a number
    std::uint64_t dual_seed = 1;
    std::uint64_t cond_seed = 2;
    int k_override = 0;
    int min_modes = 1;  ///< lower bound on the per-element mode count
    std::string fine_solver = "direct";  ///< direct | cg
    std::string output_dir = "out";
    std::string basis_dir;  ///< reuse dumped multiscale bases from here when hashes match
    int threads = 1;
    bool run_ideal = false;
    bool dump_basis = false;
    bool verify_structure = false;
};

/// Parses key=value text. Unknown keys and malformed values throw InvalidArgument.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key with its effective value, in a fixed order.
std::string render_config(const ExperimentConfig& config);
/// Checks cross-field constraints and resolves refine_ratio into fine_divisions.
void validate_config(ExperimentConfig& config);

/// Hash of everything the offline stage of one cell depends on.
std::uint64_t offline_hash(const ExperimentConfig& config, int coarse_divisions, double beta);

CoefficientField make_coefficient(const ExperimentConfig& config, double beta);
SourceField make_source(const ExperimentConfig& config);
/// Norm used by the certificate (see f_norm).
double certificate_f_norm(const ExperimentConfig& config, const SourceField& f);

using Timings = std::vector<std::pair<std::string, double>>;

/// Offline data of one (H, beta) cell. Members referenced by later stages are
/// held here so the whole chain shares one lifetime.
struct OfflineStage {
    explicit OfflineStage(MeshHierarchy m) : mesh(std::move(m)) {}

    MeshHierarchy mesh;
    NodeClassification classes;
    CoefficientField kappa;
    SparseOperator a;
    AuxSpace aux;
    DualNodeSet dual;
    DualFunctions functions;
    BlockKernelBasis k;
    KernelBuildStats kernel_stats;
    CorrectorPlan plan;
};

/// Builds everything up to the corrector plan.
std::unique_ptr<OfflineStage> build_offline(const ExperimentConfig& config, int coarse_divisions, double beta, Timings& timings);

struct CellResult {
    int coarse_divisions = 0;
    double beta = 0.0;
    bool ok = false;
    std::string error;
    Certificate certificate;
    ErrorReport errors;
    std::optional<ErrorReport> ideal_errors;
    std::vector<int> cg_iterations;
    std::vector<int> owner;
    std::vector<double> cg_residuals;
    std::vector<double> cond_history;  ///< residual history of the condition-estimation run
    Timings timings;
    bool reused_basis = false;

    bool pass() const { return ok && errors.estimate_satisfied; }
};

/// Runs one cell end to end. Module errors are caught and reported in the result.
CellResult run_cell(const ExperimentConfig& config, int coarse_divisions, double beta);

/// Runs every (H, beta) cell and writes experiments.csv, per-cell
/// certificates and CG logs, timing.csv, failures.csv and config_used.txt
/// into the output directory.
std::vector<CellResult> run_sweep(const ExperimentConfig& config);

/// Writes experiments.csv for the given cells (used by run_sweep).
void write_experiments_csv(const std::filesystem::path& path, const std::vector<CellResult>& cells);

/// Least-squares slope of log(y) against log(x). Needs two or more points.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct SlopeRow {
    double beta = 0.0;
    std::string norm;
    double slope = 0.0;
    int points = 0;
};
/// Energy and L2 slopes per beta over the cells that completed.
std::vector<SlopeRow> convergence_slopes(const std::vector<CellResult>& cells);

/// Loads the cells of an experiments.csv (the columns needed for slope fits).
std::vector<CellResult> read_experiments_csv(const std::filesystem::path& path);

/// Structure and spectrum diagnostics of one cell as key=value text.
std::string diagnose_cell(const ExperimentConfig& config, int coarse_divisions, double beta);

/// Offline stage plus the multiscale basis, written into the output directory.
void dump_cell_basis(const ExperimentConfig& config, int coarse_divisions, double beta);

/// Basis file of a cell inside a directory.
std::filesystem::path basis_file(const std::filesystem::path& dir, int coarse_divisions, double beta);
void write_multiscale_basis(const std::filesystem::path& path, const MultiscaleSpace& space, std::uint64_t hash);
/// Returns nothing when the file is missing or its hash differs.
std::optional<MultiscaleSpace> read_multiscale_basis(const std::filesystem::path& path, std::uint64_t hash);

/// File-name fragment for a cell, e.g. "H8_beta1e+02".
std::string cell_tag(int coarse_divisions, double beta);

} // namespace slod
