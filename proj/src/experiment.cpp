#include "slod/experiment.hpp"

#include "slod/assembly.hpp"
#include "slod/error.hpp"
#include "slod/krylov.hpp"
#include "slod/parallel.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace slod {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument("config: " + key + " expects an integer, got '" + v + "'");
    }
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long d = std::stoull(v, &used);
        if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw InvalidArgument("config: " + key + " expects a boolean, got '" + v + "'");
}

/// Shortest round-trip text for a double.
std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Fixed-width scientific text used in every CSV so outputs compare byte for byte.
std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10e", v);
    return buf;
}

std::map<std::string, std::string> parse_pairs(const std::string& text) {
    std::map<std::string, std::string> pairs;
    std::stringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key=value");
        pairs[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return pairs;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    for (const auto& [key, v] : parse_pairs(text)) {
        if (key == "coarse_divisions") {
            c.coarse_divisions.clear();
            for (const auto& item : split_list(v)) c.coarse_divisions.push_back(static_cast<int>(to_int(key, item)));
        } else if (key == "fine_divisions") c.fine_divisions = static_cast<int>(to_int(key, v));
        else if (key == "refine_ratio") c.refine_ratio = static_cast<int>(to_int(key, v));
        else if (key == "betas" || key == "beta") {
            c.betas.clear();
            for (const auto& item : split_list(v)) c.betas.push_back(to_double(key, item));
        } else if (key == "coefficient") c.coefficient = v;
        else if (key == "coefficient_value") c.coefficient_value = to_double(key, v);
        else if (key == "raster") c.raster = v;
        else if (key == "irregular_seed") c.irregular_seed = to_seed(key, v);
        else if (key == "source") c.source = v;
        else if (key == "source_value") c.source_value = to_double(key, v);
        else if (key == "source_raster") c.source_raster = v;
        else if (key == "f_norm") c.f_norm = v;
        else if (key == "dual_seed") c.dual_seed = to_seed(key, v);
        else if (key == "cond_seed") c.cond_seed = to_seed(key, v);
        else if (key == "k_override") c.k_override = static_cast<int>(to_int(key, v));
        else if (key == "min_modes") c.min_modes = static_cast<int>(to_int(key, v));
        else if (key == "fine_solver") c.fine_solver = v;
        else if (key == "output_dir") c.output_dir = v;
        else if (key == "basis_dir") c.basis_dir = v;
        else if (key == "threads") c.threads = static_cast<int>(to_int(key, v));
        else if (key == "run_ideal") c.run_ideal = to_bool(key, v);
        else if (key == "dump_basis") c.dump_basis = to_bool(key, v);
        else if (key == "verify_structure") c.verify_structure = to_bool(key, v);
        else throw InvalidArgument("config: unknown key '" + key + "'");
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string render_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "coarse_divisions=";
    for (std::size_t i = 0; i < c.coarse_divisions.size(); ++i) out << (i ? "," : "") << c.coarse_divisions[i];
    out << "\nfine_divisions=" << c.fine_divisions << "\nrefine_ratio=" << c.refine_ratio << "\nbetas=";
    for (std::size_t i = 0; i < c.betas.size(); ++i) out << (i ? "," : "") << num(c.betas[i]);
    out << "\ncoefficient=" << c.coefficient << "\ncoefficient_value=" << num(c.coefficient_value)
        << "\nraster=" << c.raster << "\nirregular_seed=" << c.irregular_seed << "\nsource=" << c.source
        << "\nsource_value=" << num(c.source_value) << "\nsource_raster=" << c.source_raster
        << "\nf_norm=" << c.f_norm << "\ndual_seed=" << c.dual_seed << "\ncond_seed=" << c.cond_seed
        << "\nk_override=" << c.k_override << "\nmin_modes=" << c.min_modes << "\nfine_solver=" << c.fine_solver << "\noutput_dir=" << c.output_dir
        << "\nbasis_dir=" << c.basis_dir << "\nthreads=" << c.threads << "\nrun_ideal=" << c.run_ideal
        << "\ndump_basis=" << c.dump_basis << "\nverify_structure=" << c.verify_structure << '\n';
    return out.str();
}

void validate_config(ExperimentConfig& c) {
    SLOD_REQUIRE(!c.coarse_divisions.empty(), "config: coarse_divisions is empty");
    SLOD_REQUIRE(!c.betas.empty(), "config: betas is empty");
    if (c.refine_ratio > 0) {
        SLOD_REQUIRE(c.coarse_divisions.size() == 1,
                     "config: refine_ratio needs a single coarse_divisions value; use fine_divisions");
        c.fine_divisions = c.coarse_divisions.front() * c.refine_ratio;
    }
    for (int nh : c.coarse_divisions) {
        SLOD_REQUIRE(nh >= 2, "config: coarse_divisions must be >= 2");
        SLOD_REQUIRE(c.fine_divisions % nh == 0 && c.fine_divisions / nh >= 2,
                     "config: fine_divisions must be a multiple (>= 2x) of every coarse_divisions value");
    }
    for (double b : c.betas) SLOD_REQUIRE(b >= 1.0, "config: beta must be >= 1");
    SLOD_REQUIRE(c.threads >= 1, "config: threads must be >= 1");
    SLOD_REQUIRE(c.k_override >= 0, "config: k_override must be >= 0");
    SLOD_REQUIRE(c.min_modes >= 0, "config: min_modes must be >= 0");
    const std::set<std::string> coefficients{"four_channels", "constant", "raster", "irregular"};
    SLOD_REQUIRE(coefficients.count(c.coefficient), "config: unknown coefficient '" + c.coefficient + "'");
    if (c.coefficient == "four_channels")
        SLOD_REQUIRE(c.fine_divisions % 32 == 0, "config: four_channels needs fine_divisions divisible by 32");
    if (c.coefficient == "raster") SLOD_REQUIRE(!c.raster.empty(), "config: coefficient=raster needs raster=PATH");
    SLOD_REQUIRE(c.coefficient_value > 0.0, "config: coefficient_value must be positive");
    const std::set<std::string> sources{"right_half", "constant", "raster"};
    SLOD_REQUIRE(sources.count(c.source), "config: unknown source '" + c.source + "'");
    if (c.source == "raster") SLOD_REQUIRE(!c.source_raster.empty(), "config: source=raster needs source_raster=PATH");
    if (c.f_norm != "auto") SLOD_REQUIRE(to_double("f_norm", c.f_norm) >= 0.0, "config: f_norm must be >= 0");
    SLOD_REQUIRE(c.fine_solver == "direct" || c.fine_solver == "cg", "config: fine_solver must be direct or cg");
}

std::uint64_t offline_hash(const ExperimentConfig& c, int coarse_divisions, double beta) {
    std::ostringstream key;
    key << "H=" << coarse_divisions << ";fine=" << c.fine_divisions << ";beta=" << num(beta)
        << ";coef=" << c.coefficient << ";value=" << num(c.coefficient_value) << ";raster=" << c.raster
        << ";irregular=" << c.irregular_seed << ";dual=" << c.dual_seed << ";cond=" << c.cond_seed
        << ";k=" << c.k_override << ";min_modes=" << c.min_modes;
    return fnv1a(key.str());
}

CoefficientField make_coefficient(const ExperimentConfig& c, double beta) {
    if (c.coefficient == "four_channels") return four_channels(c.fine_divisions, beta);
    if (c.coefficient == "constant") return constant_field(c.fine_divisions, c.coefficient_value);
    if (c.coefficient == "raster") return from_raster(c.fine_divisions, c.raster, beta);
    if (c.coefficient == "irregular")
        return from_mask(c.fine_divisions, irregular_channels_mask(c.fine_divisions, c.irregular_seed), beta);
    throw InvalidArgument("unknown coefficient '" + c.coefficient + "'");
}

SourceField make_source(const ExperimentConfig& c) {
    if (c.source == "right_half") return right_half_source(c.fine_divisions);
    if (c.source == "constant") return constant_source(c.fine_divisions, c.source_value);
    if (c.source == "raster") return source_from_raster(c.fine_divisions, c.source_raster);
    throw InvalidArgument("unknown source '" + c.source + "'");
}

double certificate_f_norm(const ExperimentConfig& c, const SourceField& f) {
    if (c.f_norm != "auto") return to_double("f_norm", c.f_norm);
    // The published certificates use 1/2 for this source although its L2 norm is 2^{-1/2}.
    if (c.source == "right_half") return 0.5;
    return l2_norm(f);
}

std::unique_ptr<OfflineStage> build_offline(const ExperimentConfig& c, int coarse_divisions, double beta,
                                            Timings& timings) {
    auto t0 = std::chrono::steady_clock::now();
    auto lap = [&](const char* name) {
        timings.emplace_back(name, seconds_since(t0));
        t0 = std::chrono::steady_clock::now();
    };
    auto st = std::make_unique<OfflineStage>(build_hierarchy(coarse_divisions, c.fine_divisions / coarse_divisions));
    st->classes = classify_nodes(st->mesh);
    st->kappa = make_coefficient(c, beta);
    st->a = assemble_stiffness(st->mesh, st->kappa);
    lap("assembly");
    st->aux = build_aux_space(st->mesh, st->classes, st->kappa, AuxOptions{c.min_modes});
    lap("eigenproblems");
    st->dual = select_dual_nodes(st->mesh, st->aux, st->a, c.dual_seed);
    st->functions = build_dual_functions(st->dual, st->a);
    lap("dual_nodes");
    const KernelContext ctx{st->mesh, st->classes, st->aux, st->dual, st->functions, st->a};
    st->k = substructure_orthonormalize(ctx, &st->kernel_stats);
    lap("kernel_basis");
    const ComposedKtak ktak(st->k, st->a);
    st->plan = make_corrector_plan(ktak, st->aux.total, st->functions.m, st->kappa.beta, st->mesh.H(), c.cond_seed,
                                   c.k_override);
    lap("condition_estimate");
    return st;
}

std::string cell_tag(int coarse_divisions, double beta) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "H%d_beta%.0e", coarse_divisions, beta);
    return buf;
}

std::filesystem::path basis_file(const std::filesystem::path& dir, int coarse_divisions, double beta) {
    return dir / ("ms_" + cell_tag(coarse_divisions, beta) + ".bin");
}

namespace {

static_assert(std::endian::native == std::endian::little, "basis dumps assume a little-endian host");
constexpr char kMsMagic[8] = {'S', 'L', 'O', 'D', 'M', 'S', 'B', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InvalidArgument("truncated multiscale basis file");
    return v;
}

template <class T>
void put_array(std::ostream& out, const T* data, std::int64_t count) {
    put(out, count);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
}

template <class T>
std::vector<T> get_array(std::istream& in) {
    const auto count = get<std::int64_t>(in);
    if (count < 0) throw InvalidArgument("corrupt multiscale basis file");
    std::vector<T> v(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(T) * count));
    if (!in) throw InvalidArgument("truncated multiscale basis file");
    return v;
}

Certificate certificate_from_text(const std::string& text) {
    const auto kv = parse_pairs(text);
    auto d = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw InvalidArgument(std::string("certificate is missing ") + key);
        return to_double(key, it->second);
    };
    Certificate c;
    c.h_coarse = d("H");
    c.h_fine = d("h");
    c.beta = d("beta");
    c.l = static_cast<int>(d("L"));
    c.sqrt_m = d("sqrt_M");
    c.kappa_cond = d("kappa_cond");
    c.q = d("q");
    c.k = static_cast<int>(d("k"));
    c.c_star = d("C_star");
    c.f_norm_stated = d("f_norm_stated");
    c.f_norm_true = d("f_norm_true");
    c.energy_estimate = d("energy_estimate");
    c.l2_estimate = d("l2_estimate");
    c.l2_estimate_literal = d("l2_estimate_literal");
    c.ideal_estimate = d("ideal_estimate");
    c.energy_estimate_true = d("energy_estimate_true_norm");
    c.ideal = d("ideal_correctors") != 0.0;
    c.dropped_entries = static_cast<long long>(d("dropped_entries"));
    c.dropped_max = d("dropped_max_relative");
    return c;
}

} // namespace

void write_multiscale_basis(const std::filesystem::path& path, const MultiscaleSpace& space, std::uint64_t hash) {
    Eigen::SparseMatrix<double> b = space.basis;
    b.makeCompressed();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out.write(kMsMagic, sizeof kMsMagic);
    put<std::uint64_t>(out, hash);
    put<std::int64_t>(out, b.rows());
    put<std::int64_t>(out, b.cols());
    put_array(out, b.outerIndexPtr(), b.cols() + 1);
    put_array(out, b.innerIndexPtr(), b.nonZeros());
    put_array(out, b.valuePtr(), b.nonZeros());
    put_array(out, space.owner.data(), static_cast<std::int64_t>(space.owner.size()));
    put_array(out, space.cg_iterations.data(), static_cast<std::int64_t>(space.cg_iterations.size()));
    put_array(out, space.cg_residuals.data(), static_cast<std::int64_t>(space.cg_residuals.size()));
    const std::string cert = to_key_value(space.certificate);
    put_array(out, cert.data(), static_cast<std::int64_t>(cert.size()));
    if (!out) throw InvalidArgument("failed writing " + path.string());
}

std::optional<MultiscaleSpace> read_multiscale_basis(const std::filesystem::path& path, std::uint64_t hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kMsMagic)) throw InvalidArgument(path.string() + " is not a basis file");
    if (get<std::uint64_t>(in) != hash) return std::nullopt;
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    const auto outer = get_array<int>(in);
    const auto inner = get_array<int>(in);
    const auto values = get_array<double>(in);
    if (static_cast<std::int64_t>(outer.size()) != cols + 1 || inner.size() != values.size())
        throw InvalidArgument("corrupt multiscale basis file");
    MultiscaleSpace space;
    space.basis = Eigen::Map<const Eigen::SparseMatrix<double>>(rows, cols, static_cast<Eigen::Index>(values.size()),
                                                               outer.data(), inner.data(), values.data());
    space.owner = get_array<int>(in);
    space.cg_iterations = get_array<int>(in);
    space.cg_residuals = get_array<double>(in);
    const auto cert = get_array<char>(in);
    space.certificate = certificate_from_text(std::string(cert.begin(), cert.end()));
    return space;
}

CellResult run_cell(const ExperimentConfig& c, int coarse_divisions, double beta) {
    CellResult r;
    r.coarse_divisions = coarse_divisions;
    r.beta = beta;
    try {
        const std::uint64_t hash = offline_hash(c, coarse_divisions, beta);
        std::optional<MultiscaleSpace> space;
        if (!c.basis_dir.empty()) space = read_multiscale_basis(basis_file(c.basis_dir, coarse_divisions, beta), hash);

        const MeshHierarchy mesh = build_hierarchy(coarse_divisions, c.fine_divisions / coarse_divisions);
        const CoefficientField kappa = make_coefficient(c, beta);
        const SparseOperator a = assemble_stiffness(mesh, kappa);
        std::unique_ptr<OfflineStage> offline;
        if (space) {
            r.reused_basis = true;
        } else {
            offline = build_offline(c, coarse_divisions, beta, r.timings);
            r.cond_history = offline->plan.estimate.report.residual_history;
            const auto t0 = std::chrono::steady_clock::now();
            space = build_multiscale_space(offline->mesh, offline->dual, offline->k, offline->a, offline->plan);
            r.timings.emplace_back("correctors", seconds_since(t0));
            if (c.dump_basis) {
                std::filesystem::create_directories(c.output_dir);
                write_multiscale_basis(basis_file(c.output_dir, coarse_divisions, beta), *space, hash);
            }
        }

        const SourceField f = make_source(c);
        const Vector load = assemble_load(mesh, f);
        const SolveResult uh = solve_fine(a, load, c.fine_solver == "cg" ? FineSolver::Cg : FineSolver::Direct);
        r.timings.emplace_back("fine_solve", uh.seconds);
        const SolveResult ums = solve_galerkin(*space, a, load);
        r.timings.emplace_back("galerkin_solve", ums.seconds);

        Certificate cert = space->certificate;
        cert.f_norm_stated = certificate_f_norm(c, f);
        cert.f_norm_true = l2_norm(f);
        const double factor = (cert.c_star + 1.0) * cert.h_coarse;
        cert.energy_estimate = factor * cert.f_norm_stated;
        cert.l2_estimate = cert.energy_estimate * cert.energy_estimate;
        cert.l2_estimate_literal = factor * factor * cert.f_norm_stated;
        cert.ideal_estimate = cert.c_star * cert.h_coarse * cert.f_norm_stated;
        cert.energy_estimate_true = factor * cert.f_norm_true;
        r.certificate = cert;

        const NormOperators ops = build_norm_operators(mesh, kappa);
        r.errors = compute_errors(uh.fine, ums.fine, ops, cert);
        r.cg_iterations = space->cg_iterations;
        r.cg_residuals = space->cg_residuals;
        r.owner = space->owner;

        if (c.run_ideal) {
            if (!offline) offline = build_offline(c, coarse_divisions, beta, r.timings);
            MultiscaleOptions ideal;
            ideal.ideal = true;
            const auto t0 = std::chrono::steady_clock::now();
            const MultiscaleSpace exact =
                build_multiscale_space(offline->mesh, offline->dual, offline->k, offline->a, offline->plan, ideal);
            const SolveResult u_ideal = solve_galerkin(exact, a, load);
            r.timings.emplace_back("ideal", seconds_since(t0));
            r.ideal_errors = compute_errors(uh.fine, u_ideal.fine, ops, cert);
        }
        if (c.verify_structure) {
            if (!offline) offline = build_offline(c, coarse_divisions, beta, r.timings);
            const StructureReport rep = verify_ktak_structure(offline->k, offline->a);
            std::filesystem::create_directories(c.output_dir);
            std::ofstream out(std::filesystem::path(c.output_dir) /
                              ("structure_" + cell_tag(coarse_divisions, beta) + ".txt"));
            out << "max_diag_deviation=" << sci(rep.max_diag_deviation) << '\n'
                << "max_block_orthogonality=" << sci(rep.max_block_orthogonality) << '\n'
                << "max_orthogonalized_pairs=" << sci(rep.max_orthogonalized_pairs) << '\n'
                << "max_disjoint=" << sci(rep.max_disjoint) << '\n'
                << "max_asymmetry=" << sci(rep.max_asymmetry) << '\n';
            for (const auto& [name, cls] : rep.classes)
                out << "class[" << name << "]=" << cls.count << " entries, max " << sci(cls.max_abs) << '\n';
        }
        r.ok = true;
    } catch (const std::exception& err) {
        r.ok = false;
        r.error = err.what();
    }
    return r;
}

void write_experiments_csv(const std::filesystem::path& path, const std::vector<CellResult>& cells) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << "H,h,beta,L,sqrt_M,cond,q,k,e_energy_abs,e_energy_rel,e_l2_abs,e_l2_rel,e_l2k_abs,est_energy,est_l2,"
           "ideal_est,pass\n";
    for (const CellResult& r : cells) {
        if (!r.ok) continue;
        const Certificate& c = r.certificate;
        const ErrorReport& e = r.errors;
        out << sci(c.h_coarse) << ',' << sci(c.h_fine) << ',' << sci(c.beta) << ',' << c.l << ',' << sci(c.sqrt_m)
            << ',' << sci(c.kappa_cond) << ',' << sci(c.q) << ',' << c.k << ',' << sci(e.energy_abs) << ','
            << sci(e.energy_rel) << ',' << sci(e.l2_abs) << ',' << sci(e.l2_rel) << ',' << sci(e.l2k_abs) << ','
            << sci(c.energy_estimate) << ',' << sci(c.l2_estimate) << ',' << sci(c.ideal_estimate) << ','
            << (r.pass() ? 1 : 0) << '\n';
    }
}

std::vector<CellResult> read_experiments_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
    const auto header = split_list(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidArgument(path.string() + " has no column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ch = column("H"), cb = column("beta"), ce = column("e_energy_abs"), cl = column("e_l2_abs"),
                      cest = column("est_energy"), cp = column("pass");
    std::vector<CellResult> cells;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto f = split_list(line);
        if (f.size() != header.size()) throw InvalidArgument(path.string() + ": ragged row");
        CellResult r;
        r.ok = true;
        r.certificate.h_coarse = to_double("H", f[ch]);
        r.coarse_divisions = static_cast<int>(std::lround(1.0 / r.certificate.h_coarse));
        r.beta = r.certificate.beta = to_double("beta", f[cb]);
        r.errors.energy_abs = to_double("e_energy_abs", f[ce]);
        r.errors.l2_abs = to_double("e_l2_abs", f[cl]);
        r.errors.energy_estimate = r.certificate.energy_estimate = to_double("est_energy", f[cest]);
        r.errors.estimate_satisfied = f[cp] == "1";
        cells.push_back(r);
    }
    return cells;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    SLOD_REQUIRE(x.size() == y.size(), "loglog_slope: size mismatch");
    SLOD_REQUIRE(x.size() >= 2, "loglog_slope: need at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        SLOD_REQUIRE(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    SLOD_REQUIRE(sxx > 0.0, "loglog_slope: need at least 2 distinct x values");
    return sxy / sxx;
}

std::vector<SlopeRow> convergence_slopes(const std::vector<CellResult>& cells) {
    std::map<double, std::vector<const CellResult*>> by_beta;
    for (const CellResult& r : cells)
        if (r.ok) by_beta[r.beta].push_back(&r);
    std::vector<SlopeRow> rows;
    for (const auto& [beta, group] : by_beta) {
        std::vector<double> h, ee, el;
        for (const CellResult* r : group) {
            h.push_back(r->certificate.h_coarse);
            ee.push_back(r->errors.energy_abs);
            el.push_back(r->errors.l2_abs);
        }
        const int points = static_cast<int>(h.size());
        rows.push_back({beta, "energy", loglog_slope(h, ee), points});
        rows.push_back({beta, "l2", loglog_slope(h, el), points});
    }
    return rows;
}

std::vector<CellResult> run_sweep(const ExperimentConfig& c) {
    const std::filesystem::path dir = c.output_dir;
    std::filesystem::create_directories(dir);
    {
        std::ofstream cfg(dir / "config_used.txt");
        cfg << render_config(c);
    }
    std::vector<CellResult> cells;
    // Cells run one after another; the thread budget goes to the parallel
    // loops inside each cell.
    for (int nh : c.coarse_divisions)
        for (double beta : c.betas) {
            std::cerr << "cell " << cell_tag(nh, beta) << " ..." << std::flush;
            cells.push_back(run_cell(c, nh, beta));
            const CellResult& r = cells.back();
            if (r.ok)
                std::cerr << " k=" << r.certificate.k << " energy error " << r.errors.energy_abs << " (bound "
                          << r.certificate.energy_estimate << ")" << (r.pass() ? "" : " FAIL") << '\n';
            else
                std::cerr << " error: " << r.error << '\n';
        }

    write_experiments_csv(dir / "experiments.csv", cells);
    std::ofstream timing(dir / "timing.csv");
    timing << "H,beta,phase,seconds\n";
    std::ofstream failures(dir / "failures.csv");
    failures << "H,beta,error\n";
    for (const CellResult& r : cells) {
        const std::string tag = cell_tag(r.coarse_divisions, r.beta);
        for (const auto& [phase, secs] : r.timings)
            timing << sci(1.0 / r.coarse_divisions) << ',' << sci(r.beta) << ',' << phase << ',' << secs << '\n';
        if (!r.ok) {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            failures << sci(1.0 / r.coarse_divisions) << ',' << sci(r.beta) << ",\"" << msg << "\"\n";
            continue;
        }
        std::ofstream cert(dir / ("certificate_" + tag + ".txt"));
        cert << to_key_value(r.certificate);
        cert << "energy_error=" << sci(r.errors.energy_abs) << "\nl2_error=" << sci(r.errors.l2_abs)
             << "\nestimate_satisfied=" << r.errors.estimate_satisfied
             << "\nl2_estimate_satisfied=" << r.errors.l2_estimate_satisfied
             << "\nreused_basis=" << r.reused_basis << '\n';
        if (r.ideal_errors)
            cert << "ideal_energy_error=" << sci(r.ideal_errors->energy_abs)
                 << "\nideal_l2_error=" << sci(r.ideal_errors->l2_abs)
                 << "\nideal_within_ideal_estimate=" << (r.ideal_errors->energy_abs <= r.certificate.ideal_estimate)
                 << '\n';
        std::ofstream cg(dir / ("cg_" + tag + ".csv"));
        cg << "dual_index,element,iterations,final_relative_residual\n";
        for (std::size_t j = 0; j < r.cg_iterations.size(); ++j)
            cg << j << ',' << r.owner[j] << ',' << r.cg_iterations[j] << ',' << sci(r.cg_residuals[j]) << '\n';
        if (!r.cond_history.empty()) {
            std::ofstream cond(dir / ("cond_" + tag + ".csv"));
            cond << "iteration,relative_residual\n";
            for (std::size_t j = 0; j < r.cond_history.size(); ++j) cond << j << ',' << sci(r.cond_history[j]) << '\n';
        }
    }
    return cells;
}

std::string diagnose_cell(const ExperimentConfig& c, int coarse_divisions, double beta) {
    Timings timings;
    const auto st = build_offline(c, coarse_divisions, beta, timings);
    std::ostringstream out;
    out << "cell=" << cell_tag(coarse_divisions, beta) << "\nn=" << st->mesh.n() << "\nm=" << st->mesh.m()
        << "\nL=" << st->aux.total << "\nell=" << st->k.ell << '\n';
    std::map<int, int> hist;
    int l_sum = 0;
    for (const AuxElement& e : st->aux.elements) {
        ++hist[e.basis.count];
        l_sum += e.basis.count;
    }
    out << "L_i_histogram=";
    bool first = true;
    for (const auto& [li, count] : hist) {
        out << (first ? "" : ",") << li << ':' << count;
        first = false;
    }
    out << "\nsum_L_i=" << l_sum << '\n';

    // kappa = 1 check of the analytic lower bounds, one representative element per class.
    std::map<BoundaryClass, int> representative;
    for (int e = 0; e < st->mesh.m(); ++e) representative.emplace(st->classes.element_class[e], e);
    for (const auto& [cls, e] : representative) {
        const double lambda = first_nonzero_laplace_eigenvalue(st->mesh, e);
        const double bound = mu_lower_bound(cls);
        out << "mu_check[" << to_string(cls) << "]=" << num(lambda) << " bound " << num(bound)
            << (lambda >= bound ? " ok" : " VIOLATED") << '\n';
    }

    const StructureReport rep = verify_ktak_structure(st->k, st->a);
    out << "max_diag_deviation=" << sci(rep.max_diag_deviation)
        << "\nmax_block_orthogonality=" << sci(rep.max_block_orthogonality)
        << "\nmax_orthogonalized_pairs=" << sci(rep.max_orthogonalized_pairs)
        << "\nmax_disjoint=" << sci(rep.max_disjoint) << "\nmax_asymmetry=" << sci(rep.max_asymmetry) << '\n';
    for (const auto& [name, cls] : rep.classes)
        out << "B_class[" << name << "]=" << cls.count << " entries, max " << sci(cls.max_abs) << '\n';
    out << "reorthogonalized_blocks=" << st->kernel_stats.element_reorthogonalized << ','
        << st->kernel_stats.edge_reorthogonalized << ',' << st->kernel_stats.vertex_reorthogonalized
        << "\nworst_orthogonality=" << sci(st->kernel_stats.worst_orthogonality)
        << "\nsqrt_M=" << num(std::sqrt(st->functions.m)) << "\nkappa_cond=" << num(st->plan.estimate.condition)
        << "\nq=" << num(st->plan.estimate.q) << "\nk=" << st->plan.k << '\n';
    return out.str();
}

void dump_cell_basis(const ExperimentConfig& c, int coarse_divisions, double beta) {
    Timings timings;
    const auto st = build_offline(c, coarse_divisions, beta, timings);
    const std::filesystem::path dir = c.output_dir;
    std::filesystem::create_directories(dir);
    const std::uint64_t hash = offline_hash(c, coarse_divisions, beta);
    KernelDumpHeader header;
    header.coarse_divisions = coarse_divisions;
    header.refine_ratio = c.fine_divisions / coarse_divisions;
    header.dual_seed = c.dual_seed;
    header.config_hash = hash;
    write_kernel_basis(dir / ("kernel_" + cell_tag(coarse_divisions, beta) + ".bin"), st->k, header);
    const MultiscaleSpace space = build_multiscale_space(st->mesh, st->dual, st->k, st->a, st->plan);
    write_multiscale_basis(basis_file(dir, coarse_divisions, beta), space, hash);
}

} // namespace slod
