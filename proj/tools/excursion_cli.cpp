// excursion: command-line driver for field generation, posterior
// conditioning, MVN probabilities, confidence regions and validation.

#include "excursion/crd.hpp"
#include "excursion/error.hpp"
#include "excursion/field.hpp"
#include "excursion/io.hpp"
#include "excursion/mcval.hpp"
#include "excursion/pmvn.hpp"
#include "excursion/rng.hpp"
#include "excursion/runtime.hpp"
#include "excursion/tiles.hpp"
#include "excursion/tlr.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace excursion;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* version = "1.0.0";

enum Exit { ok = 0, usage = 1, numeric = 2, io = 3 };

class UsageError : public Error {
public:
    using Error::Error;
};

struct Common {
    fs::path out = ".";
    std::uint64_t seed = 1;
    std::size_t workers = 0;
};

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::vector<std::string> g_argv;

void write_manifest(const Common& c, const std::string& command, json extra) {
    json m;
    m["command"] = command;
    m["version"] = version;
    m["argv"] = g_argv;
    m["seed"] = c.seed;
    ExecutionPolicy p{c.workers, false};
    m["workers"] = p.resolved_workers();
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
    for (auto& [k, v] : extra.items())
        m[k] = v;
    std::ofstream f(c.out / "manifest.json");
    if (!f)
        throw IoError("cannot write " + (c.out / "manifest.json").string());
    f << m.dump(2) << '\n';
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec)
        throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
}

void add_common(CLI::App* app, Common& c, bool with_workers = true) {
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    if (with_workers)
        app->add_option("--workers", c.workers,
                        "Worker threads (0 = all cores; EXCURSION_WORKERS overrides)");
}

ExecutionPolicy policy_of(const Common& c) { return ExecutionPolicy{c.workers, false}; }

GeometryKind parse_kind(const std::string& s) {
    if (s == "grid")
        return GeometryKind::Grid;
    if (s == "random")
        return GeometryKind::UniformRandom;
    throw UsageError("unknown geometry kind '" + s + "' (grid|random)");
}

Backend parse_backend(const std::string& s) {
    if (s == "dense")
        return Backend::Dense;
    if (s == "tlr")
        return Backend::Tlr;
    throw UsageError("unknown backend '" + s + "' (dense|tlr)");
}

PointSet parse_point_set(const std::string& s) {
    if (s == "pseudo" || s == "random")
        return PointSet::PseudoRandom;
    if (s == "lattice")
        return PointSet::Lattice;
    throw UsageError("unknown point set '" + s + "' (pseudo|lattice)");
}

const char* backend_name(Backend b) { return b == Backend::Dense ? "dense" : "tlr"; }

// A scalar ("-inf", "0.5") broadcast to n entries, or a one-column CSV.
Eigen::VectorXd scalar_or_file(const std::string& arg, std::size_t n, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(arg, &used);
        if (used == arg.size())
            return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), v);
    } catch (const std::exception&) {
    }
    if (!fs::exists(arg))
        throw IoError(std::string(what) + ": '" + arg + "' is neither a number nor a file");
    Eigen::VectorXd v = read_vector_csv(arg);
    if (static_cast<std::size_t>(v.size()) != n)
        throw UsageError(std::string(what) + ": file has " + std::to_string(v.size()) +
                         " entries, expected " + std::to_string(n));
    return v;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& cell : split_csv_line(s)) {
        try {
            out.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw UsageError("bad number in list: '" + cell + "'");
        }
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (double v : parse_list(s)) {
        if (!(v >= 1.0) || v != std::floor(v))
            throw UsageError("expected positive integers in '" + s + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string alpha_tag(double a) {
    std::ostringstream s;
    s << a;
    return s.str();
}

Eigen::MatrixXd add_nugget(Eigen::MatrixXd m, double nugget) {
    if (nugget < 0.0 || !std::isfinite(nugget))
        throw UsageError("--nugget must be finite and non-negative");
    m.diagonal().array() += nugget;
    return m;
}

// ---- gen -----------------------------------------------------------------

struct GenArgs {
    Common c;
    std::string kind = "grid";
    std::size_t n = 400;
    MaternParams p;
    double nugget = 0.0;
    bool morton = false;
};

void cmd_gen(const GenArgs& a) {
    ensure_dir(a.c.out);
    a.p.validate();
    Geometry g = gen_geometry(parse_kind(a.kind), a.n, a.c.seed);
    if (a.morton)
        g = permuted(g, morton_order(g));
    const Eigen::MatrixXd sigma = assemble_cov(g, a.p, a.nugget);
    const Eigen::MatrixXd l = dense_cholesky(sigma, 256, policy_of(a.c));
    const Eigen::VectorXd field =
        sample_field(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(a.n)), l, a.c.seed);
    write_geometry_csv(a.c.out / "geometry.csv", g);
    write_field_csv(a.c.out / "field.csv", g, field);
    write_matrix(a.c.out / "cov.bin", sigma);
    write_manifest(a.c, "gen",
                   {{"kind", a.kind},
                    {"n", a.n},
                    {"sigma2", a.p.sigma2},
                    {"range", a.p.range},
                    {"nu", a.p.nu},
                    {"nugget", a.nugget},
                    {"morton", a.morton},
                    {"outputs", {"geometry.csv", "field.csv", "cov.bin"}}});
}

// ---- posterior -------------------------------------------------------------

struct PosteriorArgs {
    Common c;
    fs::path field;
    fs::path cov;
    std::size_t obs_count = 0;
    double noise_sd = 0.5;
    double nugget = 0.0;
};

void cmd_posterior(const PosteriorArgs& a) {
    ensure_dir(a.c.out);
    FieldModel model;
    const Eigen::VectorXd truth = read_field_csv(a.field, model.geometry);
    const fs::path cov_path = a.cov.empty() ? a.field.parent_path() / "cov.bin" : a.cov;
    model.cov = add_nugget(read_matrix(cov_path), a.nugget);
    const std::size_t n = model.geometry.size();
    if (static_cast<std::size_t>(model.cov.rows()) != n || model.cov.cols() != model.cov.rows())
        throw UsageError("covariance is " + std::to_string(model.cov.rows()) + "x" +
                         std::to_string(model.cov.cols()) + ", field has " + std::to_string(n) +
                         " points");
    if (a.obs_count == 0 || a.obs_count > n)
        throw UsageError("--obs-count must lie in [1, " + std::to_string(n) + "]");
    if (!(a.noise_sd > 0.0))
        throw UsageError("--noise-sd must be positive");
    model.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

    // Seeded partial Fisher-Yates; the observed set is reported sorted.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < a.obs_count; ++i) {
        const double u = keyed_uniform(a.c.seed, 10, i, 0);
        const std::size_t j = i + std::min(n - i - 1, static_cast<std::size_t>(u * double(n - i)));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> obs(idx.begin(), idx.begin() + static_cast<long>(a.obs_count));
    std::sort(obs.begin(), obs.end());
    Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k)
        y(static_cast<Eigen::Index>(k)) = truth(static_cast<Eigen::Index>(obs[k])) +
                                          a.noise_sd * keyed_normal(a.c.seed, 11, k, 0);

    const PosteriorModel post = posterior_condition(model, obs, y, a.noise_sd);
    write_matrix(a.c.out / "cov_post.bin", post.cov_post);
    write_vector_csv(a.c.out / "mean_post.csv", "mean_post", post.mean_post);
    write_geometry_csv(a.c.out / "geometry.csv", model.geometry);
    {
        std::ofstream f(a.c.out / "observations.csv");
        f.precision(17);
        f << "index,value\n";
        for (std::size_t k = 0; k < obs.size(); ++k)
            f << obs[k] << ',' << y(static_cast<Eigen::Index>(k)) << '\n';
        if (!f)
            throw IoError("cannot write observations.csv");
    }
    write_manifest(a.c, "posterior",
                   {{"field", a.field.string()},
                    {"cov", cov_path.string()},
                    {"obs_count", a.obs_count},
                    {"noise_sd", a.noise_sd},
                    {"nugget", a.nugget},
                    {"outputs", {"cov_post.bin", "mean_post.csv", "geometry.csv",
                                 "observations.csv"}}});
}

// ---- pmvn ------------------------------------------------------------------

struct PmvnArgs {
    Common c;
    fs::path cov;
    fs::path cov_tlr;
    fs::path mean;
    std::string a = "-inf";
    std::string b = "inf";
    std::size_t samples = 10000;
    std::size_t tile = 256;
    std::string backend = "dense";
    double tlr_eps = 1e-3;
    std::size_t maxrank = 0;
    std::string point_set = "pseudo";
    double nugget = 0.0;
    bool trace = false;
};

void cmd_pmvn(const PmvnArgs& a) {
    ensure_dir(a.c.out);
    Backend backend = parse_backend(a.backend);
    fs::path cov_path = a.cov;
    if (!a.cov_tlr.empty()) {
        cov_path = a.cov_tlr;
        backend = Backend::Tlr;
    }
    if (cov_path.empty())
        throw UsageError("one of --cov or --cov-tlr is required");
    const Eigen::MatrixXd sigma = add_nugget(read_matrix(cov_path), a.nugget);
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
        throw UsageError("covariance must be a non-empty square matrix");
    const auto n = static_cast<std::size_t>(sigma.rows());
    IntegrationLimits lim{scalar_or_file(a.a, n, "--a"), scalar_or_file(a.b, n, "--b")};
    if (!a.mean.empty())
        lim = lim.centered(scalar_or_file(a.mean.string(), n, "--mean"));
    QmcPlan plan;
    plan.samples = a.samples;
    plan.seed = a.c.seed;
    plan.point_set = parse_point_set(a.point_set);
    const ExecutionPolicy pol{a.c.workers, a.trace};

    const double t0 = now_ms();
    TaskTrace trace;
    ProbEstimate est;
    double chol_ms = 0.0;
    if (backend == Backend::Dense) {
        const CholeskyFactor f = tiled_cholesky(
            DenseTileMatrix::from_dense(sigma, a.tile, Storage::SymmetricLower), pol, &trace);
        chol_ms = now_ms() - t0;
        est = pmvn(lim, f, plan, pol);
    } else {
        TlrConfig cfg;
        cfg.epsilon = a.tlr_eps;
        cfg.tile = std::min(a.tile, n);
        cfg.maxrank = a.maxrank;
        cfg.validate();
        const TlrMatrix f = tlr_cholesky(tlr_from_dense(sigma, cfg, pol), pol, &trace);
        chol_ms = now_ms() - t0;
        if (f.capped_tiles() > 0)
            warn(std::to_string(f.capped_tiles()) + " tile(s) hit the rank cap");
        est = pmvn(lim, f, plan, pol);
    }
    const double wall = now_ms() - t0;
    if (a.trace) {
        std::ofstream f(a.c.out / "trace.csv");
        write_trace_csv(f, trace);
        if (!f)
            throw IoError("cannot write trace.csv");
    }
    json r;
    r["value"] = est.value;
    r["stderr"] = est.std_error;
    r["log_value"] = est.log_value;
    r["N"] = est.samples;
    r["backend"] = backend_name(backend);
    r["wall_ms"] = wall;
    r["chol_ms"] = chol_ms;
    std::cout << r.dump() << '\n';
    write_manifest(a.c, "pmvn",
                   {{"cov", cov_path.string()},
                    {"a", a.a},
                    {"b", a.b},
                    {"mean", a.mean.string()},
                    {"samples", a.samples},
                    {"tile", a.tile},
                    {"backend", backend_name(backend)},
                    {"tlr_eps", a.tlr_eps},
                    {"maxrank", a.maxrank},
                    {"point_set", a.point_set},
                    {"nugget", a.nugget},
                    {"result", r}});
}

// ---- crd -------------------------------------------------------------------

struct CrdArgs {
    Common c;
    fs::path field;
    fs::path cov;
    fs::path posterior;
    bool add_field = false;
    double u = 0.0;
    std::string alphas = "0.05";
    std::size_t stride = 1;
    std::string backend = "dense";
    std::size_t samples = 10000;
    std::size_t tile = 256;
    double tlr_eps = 1e-3;
    std::string point_set = "pseudo";
};

void cmd_crd(const CrdArgs& a) {
    ensure_dir(a.c.out);
    Geometry g;
    Eigen::VectorXd mean_eff;
    fs::path cov_path, mean_path;
    if (!a.posterior.empty()) {
        cov_path = a.posterior / "cov_post.bin";
        mean_path = a.posterior / "mean_post.csv";
        g = read_geometry_csv(a.posterior / "geometry.csv");
        mean_eff = read_vector_csv(mean_path);
        if (a.add_field) {
            if (a.field.empty())
                throw UsageError("--add-field needs --field");
            Geometry gf;
            const Eigen::VectorXd y = read_field_csv(a.field, gf);
            if (y.size() != mean_eff.size())
                throw UsageError("--field length differs from the posterior mean");
            mean_eff += y;
        }
    } else {
        if (a.field.empty())
            throw UsageError("one of --posterior or --field is required");
        mean_eff = read_field_csv(a.field, g);
        mean_path = a.field;
        cov_path = a.cov.empty() ? a.field.parent_path() / "cov.bin" : a.cov;
    }
    const Eigen::MatrixXd sigma = read_matrix(cov_path);
    if (sigma.rows() != mean_eff.size() || sigma.cols() != sigma.rows() ||
        g.size() != static_cast<std::size_t>(mean_eff.size()))
        throw UsageError("covariance, mean and geometry sizes disagree");

    CrdConfig cfg;
    cfg.u = a.u;
    cfg.alphas = parse_list(a.alphas);
    cfg.prefix_stride = a.stride;
    cfg.backend = parse_backend(a.backend);
    cfg.tile = a.tile;
    cfg.plan.samples = a.samples;
    cfg.plan.seed = a.c.seed;
    cfg.plan.point_set = parse_point_set(a.point_set);
    cfg.tlr.epsilon = a.tlr_eps;
    cfg.tlr.tile = std::min(a.tile, static_cast<std::size_t>(sigma.rows()));
    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw UsageError(e.what());
    }

    const double t0 = now_ms();
    const ConfidenceFunction f = confidence_function(mean_eff, sigma, cfg, policy_of(a.c));
    const double wall = now_ms() - t0;

    write_confidence_csv(a.c.out / "confidence.csv", g, f);
    write_vector_csv(a.c.out / "marginal.csv", "marginal_p", f.marginal);
    write_vector_csv(a.c.out / "mean_eff.csv", "mean_eff", mean_eff);
    json regions = json::array();
    for (double alpha : cfg.alphas) {
        const std::string tag = alpha_tag(alpha);
        const ExcursionRegion r = extract_region(f, alpha, cfg.u);
        const ExcursionRegion m = marginal_region(f.marginal, alpha, cfg.u);
        write_region_csv(a.c.out / ("region_" + tag + ".csv"), g, r);
        write_region_csv(a.c.out / ("marginal_region_" + tag + ".csv"), g, m);
        regions.push_back({{"alpha", alpha},
                           {"file", "region_" + tag + ".csv"},
                           {"size", r.count()},
                           {"marginal_size", m.count()}});
    }
    std::vector<double> se(f.std_error.data(), f.std_error.data() + f.std_error.size());
    json crd;
    crd["cov"] = fs::absolute(cov_path).string();
    crd["mean_eff"] = "mean_eff.csv";
    crd["u"] = cfg.u;
    crd["alphas"] = cfg.alphas;
    crd["backend"] = a.backend;
    crd["samples"] = a.samples;
    crd["stride"] = a.stride;
    crd["regions"] = regions;
    crd["f_std_error"] = se;
    crd["wall_ms"] = wall;
    {
        std::ofstream out(a.c.out / "crd.json");
        out << crd.dump(2) << '\n';
        if (!out)
            throw IoError("cannot write crd.json");
    }
    std::cout << json{{"regions", regions}, {"wall_ms", wall}}.dump() << '\n';
    write_manifest(a.c, "crd",
                   {{"mean", mean_path.string()},
                    {"cov", cov_path.string()},
                    {"add_field", a.add_field},
                    {"u", a.u},
                    {"alphas", a.alphas},
                    {"stride", a.stride},
                    {"backend", a.backend},
                    {"samples", a.samples},
                    {"tile", a.tile},
                    {"tlr_eps", a.tlr_eps},
                    {"point_set", a.point_set}});
}

// ---- validate --------------------------------------------------------------

struct ValidateArgs {
    Common c;
    fs::path crd_out;
    std::size_t samples = 50000;
};

void cmd_validate(ValidateArgs a) {
    const fs::path meta = a.crd_out / "crd.json";
    if (!fs::exists(meta))
        throw IoError("missing " + meta.string() + " (run crd first)");
    json crd;
    try {
        std::ifstream in(meta);
        in >> crd;
    } catch (const json::exception& e) {
        throw IoError(meta.string() + ": " + e.what());
    }
    if (a.c.out == ".")
        a.c.out = a.crd_out;
    ensure_dir(a.c.out);
    const Eigen::MatrixXd sigma = read_matrix(crd.at("cov").get<std::string>());
    const Eigen::VectorXd mu = read_vector_csv(a.crd_out / crd.at("mean_eff").get<std::string>());
    Geometry g;
    ConfidenceFunction f;
    {
        std::ifstream in(a.crd_out / "confidence.csv");
        if (!in)
            throw IoError("missing confidence.csv in " + a.crd_out.string());
        std::string line;
        std::getline(in, line);
        std::vector<double> fv, mv;
        while (std::getline(in, line)) {
            const auto cells = split_csv_line(line);
            if (cells.size() != 4)
                throw IoError("confidence.csv: expected 4 columns");
            mv.push_back(std::stod(cells[2]));
            fv.push_back(std::stod(cells[3]));
        }
        f.f = Eigen::Map<Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(fv.size()));
        f.marginal = Eigen::Map<Eigen::VectorXd>(mv.data(), static_cast<Eigen::Index>(mv.size()));
        const auto se = crd.at("f_std_error").get<std::vector<double>>();
        f.std_error = Eigen::Map<const Eigen::VectorXd>(se.data(),
                                                        static_cast<Eigen::Index>(se.size()));
    }
    if (f.f.size() != mu.size() || sigma.rows() != mu.size())
        throw IoError("CRD outputs in " + a.crd_out.string() + " are inconsistent");
    const double u = crd.at("u").get<double>();
    const auto alphas = crd.at("alphas").get<std::vector<double>>();
    const ExecutionPolicy pol = policy_of(a.c);
    const Eigen::MatrixXd l = dense_cholesky(sigma, 256, pol);
    const ValidationReport rep = validation_curve(l, mu, f, alphas, u, a.samples, a.c.seed, pol);
    {
        std::ofstream out(a.c.out / "validation.csv");
        write_validation_csv(out, rep);
        if (!out)
            throw IoError("cannot write validation.csv");
    }
    json rows = json::array();
    for (std::size_t i = 0; i < rep.alphas.size(); ++i)
        rows.push_back({{"alpha", rep.alphas[i]},
                        {"p_hat", rep.p_hat[i]},
                        {"diff", rep.diff[i]},
                        {"bound", rep.mc_err_bound[i]},
                        {"region_size", rep.region_size[i]},
                        {"empty", rep.empty[i] != 0}});
    std::cout << rows.dump() << '\n';
    write_manifest(a.c, "validate",
                   {{"crd_out", a.crd_out.string()}, {"N", a.samples}, {"report", rows}});
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
    Common c;
    std::string dims = "1024";
    std::string samples = "1000";
    std::string backends = "dense,tlr";
    std::string workers = "1";
    std::size_t repeat = 3;
    std::size_t tile = 256;
    double tlr_eps = 1e-3;
    MaternParams p{1.0, 0.234, 0.5};
};

void cmd_bench(const BenchArgs& a) {
    ensure_dir(a.c.out);
    const auto dims = parse_size_list(a.dims);
    const auto samples = parse_size_list(a.samples);
    const auto workers = parse_size_list(a.workers);
    std::vector<Backend> backends;
    for (const auto& b : split_csv_line(a.backends))
        backends.push_back(parse_backend(b));
    if (a.repeat == 0)
        throw UsageError("--repeat must be at least 1");

    std::ofstream csv(a.c.out / "bench.csv");
    if (!csv)
        throw IoError("cannot write bench.csv");
    csv << "n,N,backend,workers,run,wall_ms,chol_ms,median_wall_ms\n";
    json summary = json::array();
    for (std::size_t n : dims) {
        Geometry g = gen_geometry(GeometryKind::UniformRandom, n, a.c.seed);
        g = permuted(g, morton_order(g));
        const Eigen::MatrixXd sigma = assemble_cov(g, a.p);
        IntegrationLimits lim{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -HUGE_VAL),
                              Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0)};
        double chol_med[2] = {0.0, 0.0};
        for (std::size_t N : samples)
            for (Backend be : backends)
                for (std::size_t w : workers) {
                    std::vector<double> walls, chols;
                    for (std::size_t run = 0; run < a.repeat; ++run) {
                        const ExecutionPolicy pol{w, false};
                        QmcPlan plan;
                        plan.samples = N;
                        plan.seed = a.c.seed;
                        const double t0 = now_ms();
                        double t1;
                        if (be == Backend::Dense) {
                            const CholeskyFactor f = tiled_cholesky(
                                DenseTileMatrix::from_dense(sigma, a.tile, Storage::SymmetricLower),
                                pol);
                            t1 = now_ms();
                            pmvn(lim, f, plan, pol);
                        } else {
                            TlrConfig cfg;
                            cfg.epsilon = a.tlr_eps;
                            cfg.tile = std::min(a.tile, n);
                            const TlrMatrix f = tlr_cholesky(tlr_from_dense(sigma, cfg, pol), pol);
                            t1 = now_ms();
                            pmvn(lim, f, plan, pol);
                        }
                        walls.push_back(now_ms() - t0);
                        chols.push_back(t1 - t0);
                    }
                    std::vector<double> sorted = walls, csorted = chols;
                    std::sort(sorted.begin(), sorted.end());
                    std::sort(csorted.begin(), csorted.end());
                    const double med = sorted[sorted.size() / 2];
                    chol_med[be == Backend::Dense ? 0 : 1] = csorted[csorted.size() / 2];
                    for (std::size_t run = 0; run < walls.size(); ++run)
                        csv << n << ',' << N << ',' << backend_name(be) << ',' << w << ','
                            << run << ',' << walls[run] << ',' << chols[run] << ',' << med
                            << '\n';
                }
        if (chol_med[0] > 0.0 && chol_med[1] > 0.0) {
            const double ratio = chol_med[0] / chol_med[1];
            std::cout << "n=" << n << " dense/tlr cholesky time ratio " << ratio << '\n';
            summary.push_back({{"n", n}, {"dense_over_tlr_cholesky", ratio}});
        }
    }
    write_manifest(a.c, "bench",
                   {{"dims", a.dims},
                    {"samples", a.samples},
                    {"backends", a.backends},
                    {"workers_list", a.workers},
                    {"repeat", a.repeat},
                    {"tile", a.tile},
                    {"tlr_eps", a.tlr_eps},
                    {"range", a.p.range},
                    {"summary", summary}});
}

// ---- rankmap ---------------------------------------------------------------

struct RankArgs {
    Common c;
    fs::path cov;
    std::size_t tile = 256;
    double eps = 1e-3;
    std::size_t maxrank = 0;
};

void cmd_rankmap(const RankArgs& a) {
    ensure_dir(a.c.out);
    const Eigen::MatrixXd sigma = read_matrix(a.cov);
    TlrConfig cfg;
    cfg.epsilon = a.eps;
    cfg.tile = std::min<std::size_t>(a.tile, static_cast<std::size_t>(sigma.rows()));
    cfg.maxrank = a.maxrank;
    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw UsageError(e.what());
    }
    const TlrMatrix t = tlr_from_dense(sigma, cfg, policy_of(a.c));
    const RankStats s = rank_stats(t);
    write_rank_csv(a.c.out / "ranks.csv", s);
    std::cout << "ranks: tiles " << s.tiles.size() << " min " << s.min << " mean " << s.mean
              << " max " << s.max << " capped " << s.capped << '\n';
    write_manifest(a.c, "rankmap",
                   {{"cov", a.cov.string()},
                    {"tile", cfg.tile},
                    {"eps", a.eps},
                    {"maxrank", a.maxrank},
                    {"summary",
                     {{"min", s.min}, {"mean", s.mean}, {"max", s.max}, {"capped", s.capped}}}});
}

} // namespace

int main(int argc, char** argv) {
    g_argv.assign(argv, argv + argc);
    CLI::App app{"Excursion sets and MVN probabilities for Gaussian random fields"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen", "Generate geometry, covariance and a sampled field");
    add_common(c_gen, gen.c);
    c_gen->add_option("--kind", gen.kind, "grid|random")->capture_default_str();
    c_gen->add_option("--n", gen.n, "Number of locations")->capture_default_str();
    c_gen->add_option("--sigma2", gen.p.sigma2)->capture_default_str();
    c_gen->add_option("--range", gen.p.range)->capture_default_str();
    c_gen->add_option("--nu", gen.p.nu)->capture_default_str();
    c_gen->add_option("--nugget", gen.nugget, "Added to the covariance diagonal");
    c_gen->add_flag("--morton", gen.morton, "Sort points along a Z-order curve");

    PosteriorArgs post;
    auto* c_post = app.add_subcommand("posterior", "Condition on noisy observations");
    add_common(c_post, post.c);
    c_post->add_option("--field", post.field, "Field CSV (x,y,value)")->required();
    c_post->add_option("--cov", post.cov, "Prior covariance (default: cov.bin next to --field)");
    c_post->add_option("--obs-count", post.obs_count)->required();
    c_post->add_option("--noise-sd", post.noise_sd)->capture_default_str();
    c_post->add_option("--nugget", post.nugget);

    PmvnArgs pm;
    auto* c_pm = app.add_subcommand("pmvn", "MVN probability of a box");
    add_common(c_pm, pm.c);
    c_pm->add_option("--cov", pm.cov, "Covariance matrix (TLMX)");
    c_pm->add_option("--cov-tlr", pm.cov_tlr, "Covariance matrix, TLR backend");
    c_pm->add_option("--mean", pm.mean, "Mean (scalar or one-column CSV)");
    c_pm->add_option("--a", pm.a, "Lower limits (scalar or CSV)")->capture_default_str();
    c_pm->add_option("--b", pm.b, "Upper limits (scalar or CSV)")->capture_default_str();
    c_pm->add_option("--samples", pm.samples)->capture_default_str();
    c_pm->add_option("--tile", pm.tile)->capture_default_str();
    c_pm->add_option("--backend", pm.backend, "dense|tlr")->capture_default_str();
    c_pm->add_option("--tlr-eps", pm.tlr_eps)->capture_default_str();
    c_pm->add_option("--maxrank", pm.maxrank);
    c_pm->add_option("--point-set", pm.point_set, "pseudo|lattice")->capture_default_str();
    c_pm->add_option("--nugget", pm.nugget);
    c_pm->add_flag("--trace", pm.trace, "Write the factorization trace to trace.csv");

    CrdArgs crd;
    auto* c_crd = app.add_subcommand("crd", "Confidence regions and confidence function");
    add_common(c_crd, crd.c);
    c_crd->add_option("--field", crd.field, "Field CSV: mean input, or Y with --add-field");
    c_crd->add_option("--cov", crd.cov, "Covariance for --field input");
    c_crd->add_option("--posterior", crd.posterior, "Directory written by `posterior`");
    c_crd->add_flag("--add-field", crd.add_field, "Use mean_post + field values as the mean");
    c_crd->add_option("--u", crd.u, "Threshold")->required();
    c_crd->add_option("--alphas", crd.alphas, "Comma-separated alphas")->capture_default_str();
    c_crd->add_option("--stride", crd.stride, "Evaluate every s-th prefix")->capture_default_str();
    c_crd->add_option("--backend", crd.backend)->capture_default_str();
    c_crd->add_option("--samples", crd.samples)->capture_default_str();
    c_crd->add_option("--tile", crd.tile)->capture_default_str();
    c_crd->add_option("--tlr-eps", crd.tlr_eps)->capture_default_str();
    c_crd->add_option("--point-set", crd.point_set)->capture_default_str();

    ValidateArgs val;
    auto* c_val = app.add_subcommand("validate", "Monte Carlo check of detected regions");
    add_common(c_val, val.c);
    c_val->add_option("--crd-out", val.crd_out, "Output directory of `crd`")->required();
    c_val->add_option("--N", val.samples, "Monte Carlo samples")->capture_default_str();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "Timing of Cholesky + PMVN");
    add_common(c_bench, bench.c, false);
    c_bench->add_option("--dims", bench.dims)->capture_default_str();
    c_bench->add_option("--samples", bench.samples)->capture_default_str();
    c_bench->add_option("--backends", bench.backends)->capture_default_str();
    c_bench->add_option("--workers", bench.workers, "Comma-separated worker counts")
        ->capture_default_str();
    c_bench->add_option("--repeat", bench.repeat)->capture_default_str();
    c_bench->add_option("--tile", bench.tile)->capture_default_str();
    c_bench->add_option("--tlr-eps", bench.tlr_eps)->capture_default_str();
    c_bench->add_option("--range", bench.p.range)->capture_default_str();

    RankArgs rk;
    auto* c_rk = app.add_subcommand("rankmap", "Per-tile ranks of a TLR compression");
    add_common(c_rk, rk.c);
    c_rk->add_option("--cov", rk.cov)->required();
    c_rk->add_option("--tile", rk.tile)->capture_default_str();
    c_rk->add_option("--eps", rk.eps)->capture_default_str();
    c_rk->add_option("--maxrank", rk.maxrank);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (c_gen->parsed())
            cmd_gen(gen);
        else if (c_post->parsed())
            cmd_posterior(post);
        else if (c_pm->parsed())
            cmd_pmvn(pm);
        else if (c_crd->parsed())
            cmd_crd(crd);
        else if (c_val->parsed())
            cmd_validate(val);
        else if (c_bench->parsed())
            cmd_bench(bench);
        else if (c_rk->parsed())
            cmd_rankmap(rk);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return io;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return numeric;
    }
    return ok;
}
