// catmap: batch front end for the quantized cat map library.
//
//   catmap analyze-matrix --matrix "2,1;1,1"
//   catmap propagator --matrix "2,1;1,1" --N 32,64 --kappa auto --out-dir runs
//   catmap eigenstates --matrix "2,1;1,1" --N 64
//   catmap husimi --matrix "2,1;1,1" --N 64 --eigvec-policy all --resolution 64
//   catmap measure --matrix "2,1;1,1" --N 64 --observable cos_x1 --quantizer anti_wick
//   catmap entropy --matrix "2,1;1,1" --N 64 --K 2 --m 2 --m0 1
//   catmap eup-check --N 16 --trials 200
//   catmap c-bound --matrix "2,1;1,1" --N 32,64,128 --samples 64
//   catmap egorov --matrix "2,1;1,1" --N 32,64 --observable cos_x1
//   catmap certify --matrix "2,1;1,1" --N 32 --K 2 --m 1
//
// Every flag may also be given as a key of a flat JSON file passed with --config; flags win.

#include "catmap/entropy.hpp"
#include "catmap/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <future>
#include <iostream>

namespace fs = std::filesystem;
using namespace catmap;

namespace {

// Flat key set with defaults. Keys use underscores; flags use dashes.
json default_config() {
    return json{{"matrix", "2,1;1,1"},
                {"N", json::array({32})},
                {"kappa", "auto"},
                {"quantizer", "op_plus"},
                {"observable", "cos_x1"},
                {"K", 2},
                {"delta0", 0.1},
                {"G", 256},
                {"m", 1},
                {"m0", 0},
                {"n", -1},
                {"epsilon", 0.1},
                {"epsilon0", 0.05},
                {"delta", 0.01},
                {"samples", 64},
                {"refine_rounds", 0},
                {"seed", 1},
                {"trials", 200},
                {"partition_size", 2},
                {"resolution", 64},
                {"t_max", -1},
                {"eigvec_policy", "first"},
                {"index", 0},
                {"cluster_tol", 1e-9},
                {"residual_tol", 1e-8},
                {"rho_grid", 2},
                {"rho0_grid", 12},
                {"tolerance", 1e-6},
                {"out_dir", ""},
                {"jobs", 1}};
}

struct Config {
    json resolved;
    std::string source = "command line";

    IntMatrix A;
    std::vector<int> Ns;
    std::optional<std::vector<double>> kappa;  // nullopt means auto
    Quantizer quantizer = Quantizer::op_plus;
    std::string observable;
    int K = 2, G = 256, m = 1, m0 = 0, n = -1;
    double delta0 = 0.1, epsilon = 0.1, epsilon0 = 0.05, delta = 0.01;
    int samples = 64, refine_rounds = 0, trials = 200, partition_size = 2, resolution = 64, t_max = -1, index = 0;
    std::uint64_t seed = 1;
    std::string eigvec_policy = "first";
    double cluster_tol = 1e-9, residual_tol = 1e-8;
    int rho_grid = 2, rho0_grid = 12;
    double tolerance = 1e-6;
    std::string out_dir;
    int jobs = 1;
};

[[noreturn]] void field_error(const std::string& key, const std::string& what) {
    throw ValidationError("config field '" + key + "': " + what);
}

template <class T>
T field(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        field_error(key, "has the wrong type");
    }
}

int positive(const json& j, const std::string& key, int min = 1) {
    const int v = field<int>(j, key);
    if (v < min) field_error(key, "must be >= " + std::to_string(min));
    return v;
}

std::vector<int> parse_int_list(const std::string& key, const json& v) {
    std::vector<int> out;
    if (v.is_number_integer()) out.push_back(v.get<int>());
    else if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_number_integer()) field_error(key, "entries must be integers");
            out.push_back(e.get<int>());
        }
    } else if (v.is_string()) {
        std::stringstream ss(v.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                size_t pos = 0;
                out.push_back(std::stoi(item, &pos));
                if (pos != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                field_error(key, "'" + item + "' is not an integer");
            }
        }
    } else field_error(key, "must be an integer or a list of integers");
    if (out.empty()) field_error(key, "is empty");
    return out;
}

Config validate(const json& j, const std::string& source) {
    Config c;
    c.resolved = j;
    c.source = source;
    try {
        c.A = parse_int_matrix(field<std::string>(j, "matrix"));
    } catch (const Error& e) {
        field_error("matrix", e.what());
    }
    c.Ns = parse_int_list("N", j.at("N"));
    for (int N : c.Ns)
        if (N < 1 || N > 4096) field_error("N", "values must lie in [1, 4096]");
    const json& k = j.at("kappa");
    if (k.is_string()) {
        if (k.get<std::string>() != "auto") {
            std::vector<double> v;
            std::stringstream ss(k.get<std::string>());
            std::string item;
            while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
            c.kappa = v;
        }
    } else if (k.is_array()) c.kappa = field<std::vector<double>>(j, "kappa");
    else field_error("kappa", "must be \"auto\" or a list of 2d angles");
    try {
        c.quantizer = parse_quantizer(field<std::string>(j, "quantizer"));
    } catch (const Error& e) {
        field_error("quantizer", e.what());
    }
    c.observable = field<std::string>(j, "observable");
    c.K = positive(j, "K");
    c.G = positive(j, "G", 4);
    c.m = positive(j, "m", 0);
    c.m0 = positive(j, "m0", 0);
    c.n = field<int>(j, "n");
    c.delta0 = field<double>(j, "delta0");
    if (!(c.delta0 > 0 && c.delta0 < 1)) field_error("delta0", "must lie in (0, 1)");
    c.epsilon = field<double>(j, "epsilon");
    if (!(c.epsilon > 0 && c.epsilon < 1)) field_error("epsilon", "must lie in (0, 1)");
    c.epsilon0 = field<double>(j, "epsilon0");
    if (!(c.epsilon0 > 0 && c.epsilon0 < 1)) field_error("epsilon0", "must lie in (0, 1)");
    c.delta = field<double>(j, "delta");
    if (!(c.delta > 0)) field_error("delta", "must be positive");
    c.samples = positive(j, "samples");
    c.refine_rounds = positive(j, "refine_rounds", 0);
    c.seed = field<std::uint64_t>(j, "seed");
    c.trials = positive(j, "trials");
    c.partition_size = positive(j, "partition_size");
    c.resolution = positive(j, "resolution");
    c.t_max = field<int>(j, "t_max");
    c.eigvec_policy = field<std::string>(j, "eigvec_policy");
    if (c.eigvec_policy != "first" && c.eigvec_policy != "random-seeded" && c.eigvec_policy != "all")
        field_error("eigvec_policy", "must be first, random-seeded or all");
    c.index = positive(j, "index", 0);
    c.cluster_tol = field<double>(j, "cluster_tol");
    c.residual_tol = field<double>(j, "residual_tol");
    c.rho_grid = positive(j, "rho_grid");
    c.rho0_grid = positive(j, "rho0_grid");
    c.tolerance = field<double>(j, "tolerance");
    c.out_dir = field<std::string>(j, "out_dir");
    c.jobs = positive(j, "jobs");
    return c;
}

// ---------------------------------------------------------------------------------------------

QuantumTorus torus_for(const Config& c, int N) {
    const int d = half_dim(c.A);
    if (c.kappa) return QuantumTorus(N, d, *c.kappa);
    return QuantumTorus(N, d, default_kappa(c.A, N));
}

json envelope(const Config& c, const std::string& command) {
    return json{{"command", command}, {"library_version", library_version}, {"config", c.resolved}};
}

std::string out_path(const Config& c, const std::string& name) {
    if (c.out_dir.empty()) return name;
    fs::create_directories(c.out_dir);
    return (fs::path(c.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open " + path + " for writing");
    os << text;
}

std::vector<Eigen::Index> selected_vectors(const Config& c, Eigen::Index dim) {
    if (c.eigvec_policy == "all") {
        std::vector<Eigen::Index> v(static_cast<size_t>(dim));
        std::iota(v.begin(), v.end(), 0);
        return v;
    }
    if (c.eigvec_policy == "random-seeded") return {static_cast<Eigen::Index>(splitmix64(c.seed) % static_cast<std::uint64_t>(dim))};
    if (c.index >= dim) field_error("index", "exceeds the Hilbert space dimension " + std::to_string(dim));
    return {c.index};
}

std::optional<AdaptedFrame> frame_if_needed(const Config& c) {
    if (c.quantizer != Quantizer::op_plus) return std::nullopt;
    return adapted_frame(c.A, c.epsilon0);
}

// Runs fn for every N, optionally in parallel; results keep the order of the N list.
json sweep(const Config& c, const std::function<json(int)>& fn) {
    json runs = json::array();
    if (c.jobs <= 1 || c.Ns.size() < 2) {
        for (int N : c.Ns) runs.push_back(fn(N));
        return runs;
    }
    std::vector<json> slots(c.Ns.size());
    for (size_t start = 0; start < c.Ns.size(); start += static_cast<size_t>(c.jobs)) {
        std::vector<std::future<json>> fut;
        for (size_t i = start; i < std::min(c.Ns.size(), start + static_cast<size_t>(c.jobs)); ++i)
            fut.push_back(std::async(std::launch::async, fn, c.Ns[i]));
        for (size_t i = 0; i < fut.size(); ++i) slots[start + i] = fut[i].get();
    }
    for (auto& s : slots) runs.push_back(std::move(s));
    return runs;
}

// ---------------------------------------------------------------------------------------------
// Subcommands. Each returns the JSON report and an exit status.

int cmd_analyze(const Config& c, json& out) {
    const IntMatrix& A = c.A;
    out["matrix"] = to_json(A);
    out["d"] = half_dim(A);
    out["determinant"] = int_determinant(A);
    const bool symp = check_symplectic(A);
    out["symplectic"] = symp;
    out["quantizable"] = symp && check_quantizable(A);
    if (!symp) return 3;
    const LyapunovData L = lyapunov_data(A);
    out["lyapunov"] = to_json(L);
    const EntropyBounds b = entropy_bounds(L);
    out["bounds"] = {{"lower", b.lower}, {"ruelle_upper", b.ruelle_upper}};
    try {
        const AdaptedFrame F = adapted_frame(A, c.epsilon0);
        json blocks = json::array();
        for (const auto& blk : F.blocks) blocks.push_back({{"halfdim", blk.halfdim}, {"exponent", blk.exponent}});
        out["adapted_frame"] = {{"epsilon0", F.epsilon0}, {"blocks", blocks}, {"symplectic_defect", symplectic_defect(F.Q)}};
    } catch (const UnsupportedFrameError& e) {
        out["adapted_frame"] = {{"error", e.what()}};
    }
    if (L.lambda_max > 0) {
        json times = json::array();
        for (int N : c.Ns) {
            const EhrenfestTimes t = ehrenfest_times(N, c.epsilon, L);
            times.push_back({{"N", N}, {"m_E", t.m_E}, {"n_E", t.n_E}, {"classical_period", classical_period(A, N)}});
        }
        out["ehrenfest"] = times;
    }
    return out["quantizable"].get<bool>() ? 0 : 3;
}

int cmd_propagator(const Config& c, json& out) {
    require_quantizable(c.A);
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const CMatrix M = propagator(c.A, qt);
        const IntertwiningReport rep = check_intertwining_report(M, c.A, qt);
        const std::string file = out_path(c, "propagator_N" + std::to_string(N) + ".bin");
        write_container(file, {ContainerKind::op, qt, M});
        json r{{"torus", to_json(qt)},
               {"file", file},
               {"dimension", qt.dim()},
               {"intertwining_defect", rep.max_defect},
               {"worst_generator", rep.worst_generator},
               {"unitarity_defect", unitarity_defect(M)},
               {"tolerance", 1e-8}};
        return r;
    });
    return 0;
}

EigenData eigen_for(const Config& c, const QuantumTorus& qt, CMatrix* M_out = nullptr) {
    CMatrix M = propagator(c.A, qt);
    EigenData E = eigensystem(M, c.cluster_tol, c.residual_tol);
    if (M_out) *M_out = std::move(M);
    return E;
}

int cmd_eigenstates(const Config& c, json& out) {
    require_quantizable(c.A);
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const EigenData E = eigen_for(c, qt);
        const std::string file = out_path(c, "eigenvectors_N" + std::to_string(N) + ".bin");
        write_container(file, {ContainerKind::eigenvectors, qt, E.eigenvectors});
        std::vector<double> phases(E.eigenphases.data(), E.eigenphases.data() + E.eigenphases.size());
        std::vector<double> res(E.residuals.data(), E.residuals.data() + E.residuals.size());
        int clusters = E.cluster.empty() ? 0 : E.cluster.back() + 1;
        return json{{"torus", to_json(qt)}, {"file", file},         {"eigenphases", phases}, {"residuals", res},
                    {"cluster", E.cluster}, {"clusters", clusters}, {"max_residual", E.max_residual()},
                    {"cluster_tol", c.cluster_tol}, {"residual_tol", c.residual_tol}};
    });
    return 0;
}

int cmd_husimi(const Config& c, json& out) {
    require_quantizable(c.A);
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const EigenData E = eigen_for(c, qt);
        json vecs = json::array();
        for (Eigen::Index j : selected_vectors(c, qt.dim())) {
            const MeasureGrid H = husimi_grid(qt, E.eigenvectors.col(j), c.resolution);
            const std::string file = out_path(c, "husimi_N" + std::to_string(N) + "_v" + std::to_string(j) + ".csv");
            write_husimi_csv(file, H);
            {
                std::ofstream os(file, std::ios::app);
                os << "# config=" << c.resolved.dump() << ",library_version=" << library_version << "\n";
            }
            vecs.push_back({{"index", j}, {"eigenphase", E.eigenphases(j)}, {"file", file}, {"raw_mass", H.total}});
        }
        return json{{"torus", to_json(qt)}, {"resolution", c.resolution}, {"vectors", vecs}};
    });
    return 0;
}

double lebesgue_mean(const TrigObservable& a) {
    const auto it = a.coeffs().find(Lattice(2 * a.d(), 0));
    return it == a.coeffs().end() ? 0.0 : it->second.real();
}

int cmd_measure(const Config& c, json& out) {
    require_quantizable(c.A);
    const int d = half_dim(c.A);
    const TrigObservable a = parse_observable(c.observable, d);
    const auto frame = frame_if_needed(c);
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const EigenData E = eigen_for(c, qt);
        json rows = json::array();
        for (Eigen::Index j : selected_vectors(c, qt.dim())) {
            const cplx v = measure_of_state(qt, E.eigenvectors.col(j), c.quantizer, a, frame ? &*frame : nullptr);
            rows.push_back({{"index", j}, {"eigenphase", E.eigenphases(j)}, {"value_re", v.real()}, {"value_im", v.imag()},
                            {"cluster", E.cluster[j]}});
        }
        return json{{"torus", to_json(qt)}, {"quantizer", to_string(c.quantizer)}, {"lebesgue_mean", lebesgue_mean(a)},
                    {"vectors", rows}};
    });
    return 0;
}

int cmd_entropy(const Config& c, json& out) {
    require_quantizable(c.A);
    const int d = half_dim(c.A);
    const auto frame = frame_if_needed(c);
    const SmoothPartition P = build_partition(c.K, c.delta0, c.G, d);
    const LyapunovData L = lyapunov_data(c.A);
    out["bounds"] = {{"lower", L.Lambda_zero}, {"ruelle_upper", L.Lambda_plus}};
    out["partition"] = {{"K", P.K}, {"delta0", P.delta0}, {"G", P.G}, {"max_partition_defect", P.max_partition_defect()}};
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const EigenData E = eigen_for(c, qt);
        json rows = json::array();
        for (Eigen::Index j : selected_vectors(c, qt.dim())) {
            EntropyContext ctx(qt, c.A, P, E.eigenvectors.col(j), c.quantizer, frame);
            const double h = ctx.translated(c.m, 0);
            json row{{"index", j}, {"eigenphase", E.eigenphases(j)}, {"h", h}, {"per_step", c.m > 0 ? h / (2.0 * c.m) : 0.0}};
            if (c.m0 > 0) {
                const SubadditivityReport S = subadditivity_check(ctx, c.m0, c.m);
                row["subadditivity"] = {{"m0", S.m0},
                                        {"q", S.q},
                                        {"r", S.r},
                                        {"triples", S.triples.size()},
                                        {"worst_triple_margin", S.worst_triple_margin},
                                        {"chain_lhs", S.chain_lhs},
                                        {"chain_rhs", S.chain_rhs},
                                        {"drift", S.drift},
                                        {"lemma_rhs", S.lemma_rhs}};
            }
            rows.push_back(row);
        }
        return json{{"torus", to_json(qt)}, {"quantizer", to_string(c.quantizer)}, {"m", c.m}, {"vectors", rows}};
    });
    return 0;
}

int cmd_eup(const Config& c, json& out) {
    out["runs"] = sweep(c, [&](int N) {
        std::mt19937_64 rng(splitmix64(c.seed ^ static_cast<std::uint64_t>(N)));
        double worst = std::numeric_limits<double>::infinity();
        int worst_trial = -1;
        for (int t = 0; t < c.trials; ++t) {
            const CMatrix U = random_unitary(N, rng);
            const CVector psi = random_state(N, rng);
            const EupResult r = t % 2 == 0 ? eup_check(random_projective_partition(N, std::min(c.partition_size, N), rng), U, psi)
                                           : eup_check_effects(random_effects(N, c.partition_size, rng), U, psi);
            if (r.margin < worst) {
                worst = r.margin;
                worst_trial = t;
            }
        }
        // Standard basis projectors with the unitary DFT and a basis vector: equality case.
        std::vector<CMatrix> basis;
        for (int i = 0; i < N; ++i) {
            CMatrix p = CMatrix::Zero(N, N);
            p(i, i) = 1;
            basis.push_back(p);
        }
        const EupResult eq = eup_check(basis, dft_matrix(N), CVector::Unit(N, 0));
        return json{{"N", N},
                    {"trials", c.trials},
                    {"worst_margin", worst},
                    {"worst_trial", worst_trial},
                    {"equality_case", {{"lhs", eq.lhs}, {"rhs", eq.rhs}, {"margin", eq.margin}, {"log_N", std::log(N)}}},
                    {"tolerance", 1e-8}};
    });
    return 0;
}

int cmd_cbound(const Config& c, json& out) {
    require_quantizable(c.A);
    const AdaptedFrame F = adapted_frame(c.A, c.epsilon0);
    const LyapunovData L = lyapunov_data(c.A);
    CBoundSettings s{c.delta, c.epsilon, c.samples, c.refine_rounds, c.seed};
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const int n = c.n >= 0 ? c.n : ehrenfest_times(N, c.epsilon, L).n_E;
        const CBoundResult r = c_bound_estimate(qt, F, c.A, n, s);
        return json{{"torus", to_json(qt)}, {"n", r.n}, {"samples", r.samples}, {"c_hat", r.c_hat}, {"theorem_rhs", r.theorem_rhs},
                    {"log_gap", r.log_gap}, {"argmax", r.argmax}};
    });
    double fitted = -std::numeric_limits<double>::infinity();
    for (const auto& r : out["runs"]) fitted = std::max(fitted, r["log_gap"].get<double>());
    out["fitted_constant"] = fitted;
    return 0;
}

int cmd_egorov(const Config& c, json& out) {
    require_quantizable(c.A);
    const int d = half_dim(c.A);
    const TrigObservable a = parse_observable(c.observable, d);
    const LyapunovData L = lyapunov_data(c.A);
    const AdaptedFrame F = adapted_frame(c.A, c.epsilon0);
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const int t_max = c.t_max >= 0 ? c.t_max : ehrenfest_times(N, c.epsilon, L).m_E;
        CMatrix M;
        const EigenData E = eigen_for(c, qt, &M);
        json vecs = json::array();
        for (Eigen::Index j : selected_vectors(c, qt.dim())) {
            const CVector psi = E.eigenvectors.col(j);
            vecs.push_back({{"index", j},
                            {"weyl", egorov_drift(qt, psi, a, c.A, Quantizer::weyl, t_max, nullptr, true)},
                            {"op_plus", egorov_drift(qt, psi, a, c.A, Quantizer::op_plus, t_max, &F, true)}});
        }
        json ops = json::array();
        for (const auto& row : egorov_plus_drift(qt, a, F, c.A, t_max, &M))
            ops.push_back({{"t", row.t}, {"defect", row.defect}, {"predictor", row.predictor}, {"ratio", row.ratio}});
        return json{{"torus", to_json(qt)}, {"t_max", t_max}, {"vectors", vecs}, {"operator_drift", ops}};
    });
    return 0;
}

int cmd_certify(const Config& c, json& out) {
    require_quantizable(c.A);
    const int d = half_dim(c.A);
    const AdaptedFrame F = adapted_frame(c.A, c.epsilon0);
    const LyapunovData L = lyapunov_data(c.A);
    const SmoothPartition P = build_partition(c.K, c.delta0, c.G, d);
    CertificateSettings s{c.rho_grid, c.rho0_grid, c.tolerance};
    out["runs"] = sweep(c, [&](int N) {
        const QuantumTorus qt = torus_for(c, N);
        const int n = c.n >= 0 ? c.n : ehrenfest_times(N, c.epsilon, L).n_E;
        CMatrix M;
        const EigenData E = eigen_for(c, qt, &M);
        json vecs = json::array();
        for (Eigen::Index j : selected_vectors(c, qt.dim())) {
            const CertificateResult r = entropy_certificate(qt, E.eigenvectors.col(j), P, c.A, c.m, n, F, s, &M);
            vecs.push_back({{"index", j},         {"eigenphase", E.eigenphases(j)}, {"family_size", r.family_size},
                            {"frame_defect", r.frame_defect}, {"h_disc", r.h_disc},     {"h_disc_image", r.h_disc_image},
                            {"sup_leb", r.sup_leb},   {"c_disc", r.c_disc},         {"lower_bound", r.lower_bound},
                            {"margin", r.margin},     {"passed", r.passed}});
        }
        return json{{"torus", to_json(qt)}, {"m", c.m}, {"n", n}, {"tolerance", c.tolerance}, {"vectors", vecs}};
    });
    return 0;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::validation: return 2;
        case ErrorKind::invariant: return 3;
        case ErrorKind::budget: return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantized cat maps: propagators, eigenstates, measures and entropy bounds"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    using Handler = int (*)(const Config&, json&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
        {"analyze-matrix", "symplectic check, Lyapunov data and entropy bounds", cmd_analyze},
        {"propagator", "quantum propagator file and intertwining report", cmd_propagator},
        {"eigenstates", "eigenphases and eigenvector file", cmd_eigenstates},
        {"husimi", "Husimi density grids of eigenstates (CSV)", cmd_husimi},
        {"measure", "eigenstate measures of an observable", cmd_measure},
        {"entropy", "quantum entropy of eigenstates and subadditivity", cmd_entropy},
        {"eup-check", "randomized entropic uncertainty suite", cmd_eup},
        {"c-bound", "sampled cross-term norm vs the theoretical rate", cmd_cbound},
        {"egorov", "Egorov drift tables", cmd_egorov},
        {"certify", "finite-N entropy certificate", cmd_certify},
    };

    // Every flag is collected as text and typed by validate() against the defaults.
    const json defaults = default_config();
    std::map<std::string, std::string> flag_values;
    std::string config_file;
    std::vector<std::pair<CLI::App*, Handler>> subs;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_file, "flat JSON config file");
        for (auto it = defaults.begin(); it != defaults.end(); ++it) {
            std::string flag = it.key();
            std::replace(flag.begin(), flag.end(), '_', '-');
            sub->add_option("--" + flag, flag_values[it.key()], "default " + it.value().dump());
        }
        subs.emplace_back(sub, fn);
    }
    CLI11_PARSE(app, argc, argv);

    std::string command;
    Handler handler = nullptr;
    CLI::App* active = nullptr;
    for (const auto& [sub, fn] : subs)
        if (sub->parsed()) {
            command = sub->get_name();
            handler = fn;
            active = sub;
        }

    std::string source = "command line";
    try {
        json cfg = defaults;
        if (!config_file.empty()) {
            source = config_file;
            std::ifstream is(config_file);
            if (!is) throw ValidationError("cannot open config file " + config_file);
            json file;
            try {
                file = json::parse(is);
            } catch (const json::exception& e) {
                throw ValidationError(std::string("config parse error: ") + e.what());
            }
            if (!file.is_object()) throw ValidationError("config file must hold a flat JSON object");
            for (auto it = file.begin(); it != file.end(); ++it) {
                if (!cfg.contains(it.key())) field_error(it.key(), "unknown key");
                cfg[it.key()] = it.value();
            }
        }
        for (auto it = defaults.begin(); it != defaults.end(); ++it) {
            std::string flag = it.key();
            std::replace(flag.begin(), flag.end(), '_', '-');
            if (active->count("--" + flag) == 0) continue;
            const std::string& text = flag_values[it.key()];
            const json& def = it.value();
            try {
                if (it.key() == "N" || it.key() == "kappa" || def.is_string()) cfg[it.key()] = text;
                else if (def.is_number_integer()) cfg[it.key()] = std::stoll(text);
                else if (def.is_number_float()) cfg[it.key()] = std::stod(text);
            } catch (const std::exception&) {
                field_error(it.key(), "'" + text + "' is not a number");
            }
        }
        // N is stored resolved so the echoed config is unambiguous.
        cfg["N"] = parse_int_list("N", cfg["N"]);
        const Config c = validate(cfg, source);
        json out = envelope(c, command);
        const int status = handler(c, out);
        const std::string text = to_json_text(out);
        std::cout << text;
        if (!c.out_dir.empty()) write_text(out_path(c, command + ".json"), text);
        return status;
    } catch (const Error& e) {
        std::cerr << "error [" << e.name() << "] in '" << command << "' (config: " << source << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error in '" << command << "' (config: " << source << "): " << e.what() << "\n";
        return 2;
    }
}
