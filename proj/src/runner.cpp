#include "klora/runner.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "klora/csv.hpp"
#include "klora/errors.hpp"
#include "klora/groundtruth.hpp"
#include "klora/metrics.hpp"
#include "klora/runner_detail.hpp"
#include "klora/trainer.hpp"

namespace klora {

namespace detail {

int env_threads() {
    const char* v = std::getenv("KLORA_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n > 0 ? n : 1;
}

SystemSpec system_from_config(const Config& cfg) {
    SystemSpec spec;
    const std::string kind = cfg.get("system.kind");
    if (kind == "logistic") {
        spec.kind = SystemKind::logistic;
        spec.r = cfg.get_double_or("system.r", 4.0);
        spec.noise_order = static_cast<int>(cfg.get_int_or("system.noise_order", 20));
    } else if (kind == "langevin") {
        spec.kind = SystemKind::langevin;
        const std::string pot = cfg.get_or("system.potential", "schwantes");
        if (pot == "schwantes") {
            spec.potential = PotentialKind::schwantes;
        } else if (pot == "harmonic") {
            spec.potential = PotentialKind::harmonic;
        } else {
            throw invalid_input_error("unknown potential: " + pot);
        }
        spec.gamma = cfg.get_double_or("system.gamma", 0.1);
        spec.kbt = cfg.get_double_or("system.kbt", 1.0);
        spec.dt = cfg.get_double_or("system.dt", 1e-3);
    } else if (kind == "finite_chain") {
        spec.kind = SystemKind::finite_chain;
        const int n = static_cast<int>(cfg.get_int("system.states"));
        const std::vector<double> flat = cfg.get_doubles_or("system.transition", {});
        if (static_cast<int>(flat.size()) != n * n) {
            throw invalid_input_error("system.transition must have states^2 entries");
        }
        spec.transition = Matrix(n, n, flat);
    } else if (kind == "cyclic_gaussian") {
        spec.kind = SystemKind::cyclic_gaussian;
        spec.n_clusters = static_cast<int>(cfg.get_int_or("system.clusters", 5));
        spec.emission_dim = static_cast<int>(cfg.get_int_or("system.dim", 16));
        spec.spread = cfg.get_double_or("system.spread", 0.3);
    } else {
        throw invalid_input_error("unknown system.kind: " + kind);
    }
    spec.validate();
    return spec;
}

std::vector<double> default_x0(const SystemSpec& spec) {
    switch (spec.kind) {
        case SystemKind::logistic: return {0.5};
        case SystemKind::langevin: return {0.0};
        case SystemKind::finite_chain: return {0.0};
        case SystemKind::cyclic_gaussian: {
            const Matrix centers = cyclic_gaussian_centers(spec.n_clusters, spec.emission_dim);
            std::vector<double> x(spec.emission_dim);
            for (int j = 0; j < spec.emission_dim; ++j) x[j] = centers(0, j);
            return x;
        }
    }
    return {0.0};
}

EncoderSpec encoder_from_config(const Config& cfg, int input_dim) {
    EncoderSpec enc;
    enc.input_dim = input_dim;
    enc.hidden = cfg.get_ints_or("encoder.hidden", {});
    enc.modes = static_cast<int>(cfg.get_int_or("encoder.modes", 1));
    enc.activation = activation_from_name(cfg.get_or("encoder.activation", "leaky_relu"));
    enc.prepend_constant = cfg.get_bool_or("encoder.prepend_constant", true);
    return enc;
}

LossConfig loss_from_config(const Config& cfg) {
    LossConfig loss;
    loss.kind = loss_kind_from_name(cfg.get_or("loss.kind", "lora"));
    loss.vamp_r = static_cast<int>(cfg.get_int_or("loss.vamp_r", 2));
    loss.lambda = cfg.get_double_or("loss.lambda", 1e-6);
    loss.gamma = cfg.get_double_or("loss.gamma", 1.0);
    loss.nesting_weights = cfg.get_doubles_or("loss.nesting_weights", {});
    loss.generator_seq_nesting = cfg.get_or("loss.generator_nesting", "seq") == "seq";
    return loss;
}

TrajectoryBundle build_trajectories(const Config& cfg, const SystemSpec& spec, uint64_t seed) {
    TrajectoryBundle bundle;
    const long length = cfg.get_int_or("system.length", 16384);
    if (length < 2) throw invalid_input_error("system.length must be >= 2");
    const int n_traj = static_cast<int>(cfg.get_int_or("system.trajectories", 1));
    std::vector<double> x0 = cfg.get_doubles_or("system.x0", default_x0(spec));
    bundle.trajectories =
        simulate_many(spec, x0, static_cast<int>(length) - 1, seed, n_traj, env_threads());

    const double default_burn = spec.kind == SystemKind::langevin ? 0.1 : 0.0;
    const double burn = cfg.get_double_or("system.burn_in", default_burn);
    if (burn > 0.0) {
        for (Trajectory& t : bundle.trajectories) {
            const int drop = static_cast<int>(burn * t.states.rows());
            if (t.states.rows() - drop < 2) throw invalid_input_error("burn_in leaves no data");
            Matrix kept(t.states.rows() - drop, t.states.cols());
            for (int i = 0; i < kept.rows(); ++i)
                for (int j = 0; j < kept.cols(); ++j) kept(i, j) = t.states(i + drop, j);
            t.states = std::move(kept);
        }
    }
    bundle.pairs = make_pairs(bundle.trajectories, static_cast<int>(cfg.get_int_or("system.lag", 1)));
    return bundle;
}

void write_trajectory_csv(const std::string& dir, const Trajectory& traj, const SystemSpec& spec,
                          uint64_t seed) {
    CsvTable t;
    t.header.push_back("t");
    for (int j = 0; j < traj.states.cols(); ++j) t.header.push_back("x_" + std::to_string(j));
    t.rows.reserve(traj.states.rows());
    for (int i = 0; i < traj.states.rows(); ++i) {
        std::vector<std::string> row;
        row.push_back(std::to_string(i));
        for (int j = 0; j < traj.states.cols(); ++j) row.push_back(format_double(traj.states(i, j)));
        t.rows.push_back(std::move(row));
    }
    write_csv(dir + "/trajectory.csv", t);
    std::string meta = "system " + traj.system + "\n";
    meta += "seed " + std::to_string(seed) + "\n";
    meta += "dt " + format_double(traj.dt) + "\n";
    if (spec.kind == SystemKind::logistic) {
        meta += "r " + format_double(spec.r) + "\n";
        meta += "noise_order " + std::to_string(spec.noise_order) + "\n";
    }
    write_text_file(dir + "/trajectory.meta", meta);
}

} // namespace detail

namespace {

using namespace detail;

namespace fs = std::filesystem;

std::vector<std::complex<double>> read_eig_fixture(const std::string& path) {
    CsvTable t = read_csv(path);
    std::vector<std::complex<double>> out;
    for (const auto& row : t.rows) {
        out.emplace_back(std::stod(row[1]), std::stod(row[2]));
    }
    return out;
}

std::vector<double> read_sigma_fixture(const std::string& path) {
    CsvTable t = read_csv(path);
    std::vector<double> out;
    for (const auto& row : t.rows) out.push_back(std::stod(row[1]));
    return out;
}

int oracle_logistic(const Config& cfg, const std::string& out_dir) {
    FiniteRankKernel kernel;
    kernel.r = cfg.get_double_or("system.r", 4.0);
    kernel.order = static_cast<int>(cfg.get_int_or("system.noise_order", 20));
    const int grid_n = static_cast<int>(cfg.get_int_or("oracle.grid", 4096));
    const QuadratureGrid grid = stationary_grid(kernel, grid_n);
    const FiniteRankSvd s = finite_rank_svd(kernel, grid);
    CsvTable sig;
    sig.header = {"index", "sigma"};
    for (size_t i = 0; i < s.factors.sigma.size(); ++i) {
        sig.rows.push_back({std::to_string(i + 1), format_double(s.factors.sigma[i])});
    }
    write_csv(out_dir + "/sigma_true.csv", sig);

    const FiniteRankSpectrum spec = finite_rank_spectrum(kernel, grid);
    CsvTable eig;
    eig.header = {"index", "re", "im"};
    for (size_t i = 0; i < spec.right.eigenvalues.size(); ++i) {
        eig.rows.push_back({std::to_string(i + 1), format_double(spec.right.eigenvalues[i].real()),
                            format_double(spec.right.eigenvalues[i].imag())});
    }
    write_csv(out_dir + "/eig_true.csv", eig);
    return kExitOk;
}

int oracle_finite_chain(const Config& cfg, const std::string& out_dir) {
    const SystemSpec spec = system_from_config(cfg);
    const Matrix& p = spec.transition;
    ComplexSpectrum eig = eig_general(p);
    CsvTable t;
    t.header = {"index", "re", "im"};
    for (size_t i = 0; i < eig.eigenvalues.size(); ++i) {
        t.rows.push_back({std::to_string(i + 1), format_double(eig.eigenvalues[i].real()),
                          format_double(eig.eigenvalues[i].imag())});
    }
    write_csv(out_dir + "/eig_true.csv", t);

    // stationary distribution by power iteration, then operator singular
    // values from diag(pi)^{1/2} P diag(pi)^{-1/2}
    const int n = p.rows();
    std::vector<double> pi(n, 1.0 / n);
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> nxt(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) nxt[j] += pi[i] * p(i, j);
        double resid = 0.0;
        for (int i = 0; i < n; ++i) resid = std::max(resid, std::fabs(nxt[i] - pi[i]));
        pi = std::move(nxt);
        if (resid < 1e-14) break;
    }
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m(i, j) = std::sqrt(pi[i]) * p(i, j) / std::sqrt(std::max(pi[j], 1e-300));
    SvdFactors s = svd(m);
    CsvTable sig;
    sig.header = {"index", "sigma"};
    for (size_t i = 0; i < s.sigma.size(); ++i) {
        sig.rows.push_back({std::to_string(i + 1), format_double(s.sigma[i])});
    }
    write_csv(out_dir + "/sigma_true.csv", sig);
    return kExitOk;
}

int oracle_langevin(const Config& cfg, const std::string& out_dir) {
    const SystemSpec spec = system_from_config(cfg);
    const std::vector<double> interval = cfg.get_doubles_or(
        "oracle.interval", spec.potential == PotentialKind::schwantes
                               ? std::vector<double>{-1.5, 1.5}
                               : std::vector<double>{-8.0, 8.0});
    if (interval.size() != 2) throw invalid_input_error("oracle.interval must be lo,hi");
    const int grid_n = static_cast<int>(cfg.get_int_or("oracle.grid", 2048));
    const int modes = static_cast<int>(cfg.get_int_or("oracle.modes", 8));
    GeneratorReference ref = generator_reference(spec.potential, spec.gamma, spec.kbt, interval[0],
                                                 interval[1], grid_n, modes);
    CsvTable t;
    t.header = {"index", "lambda"};
    for (size_t i = 0; i < ref.eigenvalues.size(); ++i) {
        t.rows.push_back({std::to_string(i + 1), format_double(ref.eigenvalues[i])});
    }
    write_csv(out_dir + "/generator_eig_true.csv", t);
    return kExitOk;
}

std::vector<std::pair<std::string, std::function<double(std::span<const double>)>>>
default_observables(const SystemSpec& spec) {
    std::vector<std::pair<std::string, std::function<double(std::span<const double>)>>> obs;
    switch (spec.kind) {
        case SystemKind::logistic:
            obs.emplace_back("x", [](std::span<const double> x) { return x[0]; });
            obs.emplace_back("cos2pix", [](std::span<const double> x) {
                return std::cos(2.0 * 3.14159265358979323846 * x[0]);
            });
            break;
        case SystemKind::cyclic_gaussian: {
            const Matrix centers = cyclic_gaussian_centers(spec.n_clusters, spec.emission_dim);
            for (int c = 0; c < spec.n_clusters; ++c) {
                obs.emplace_back("indicator_" + std::to_string(c),
                                 [centers, c](std::span<const double> x) {
                                     return cyclic_gaussian_label(centers, x) == c ? 1.0 : 0.0;
                                 });
            }
            break;
        }
        case SystemKind::finite_chain:
            for (int c = 0; c < spec.transition.rows(); ++c) {
                obs.emplace_back("indicator_" + std::to_string(c),
                                 [c](std::span<const double> x) {
                                     return static_cast<int>(x[0]) == c ? 1.0 : 0.0;
                                 });
            }
            break;
        case SystemKind::langevin:
            obs.emplace_back("x", [](std::span<const double> x) { return x[0]; });
            break;
    }
    return obs;
}

// Horizon sweep shared by the EDMD and CCA routes: vectorized over anchors.
struct PredictionSweep {
    std::vector<int> horizons; // positive
    // rmse[route][(h_index, horizon, direction)] rows
    CsvTable table;
};

void eval_generator_spectrum(const Config& cfg, const SystemSpec& spec, const Checkpoint& ckpt,
                             const Matrix& states, const std::string& fixture_dir,
                             MetricReport& report, const std::string& out_dir) {
    const EncoderSpec enc = ckpt.spec_f;
    ParamVector params = ckpt.params;
    if (!ckpt.ema.empty() && cfg.get_bool_or("eval.use_ema", true)) params.values = ckpt.ema;
    const std::vector<int> blocks = encoder_blocks(params, "f");
    const double h = cfg.get_double_or("optim.jet_step", kDefaultJetStep);

    // Restriction of the generator to the learned span: solve
    // M[f]^+ M[f, Lf] for its eigenvalues.
    const int n = states.rows();
    const int k = enc.output_dim();
    Matrix fx(n, k), lfx(n, k);
    for (int i = 0; i < n; ++i) {
        const double x = states(i, 0);
        const std::vector<Jet2> jets = fd_jet(enc, params, blocks, x, h);
        const double drift = -potential_derivative(spec.potential, x) / spec.gamma;
        for (int j = 0; j < k; ++j) {
            fx(i, j) = jets[j].value;
            lfx(i, j) = drift * jets[j].d1 + spec.kbt / spec.gamma * jets[j].d2;
        }
    }
    const Matrix mf = second_moment(fx);
    const Matrix mfl = joint_moment(fx, lfx);
    const Matrix kgen = matmul(pinv_psd(mf, 1e-10), mfl);
    ComplexSpectrum eig = eig_general(kgen);
    // generator eigenvalues are real; sort by value descending
    std::vector<double> lambda;
    for (const auto& l : eig.eigenvalues) lambda.push_back(l.real());
    std::sort(lambda.rbegin(), lambda.rend());

    CsvTable t;
    t.header = {"index", "lambda"};
    for (size_t i = 0; i < lambda.size(); ++i) {
        t.rows.push_back({std::to_string(i + 1), format_double(lambda[i])});
        report.add("generator_lambda", std::to_string(i + 1), lambda[i]);
    }
    write_csv(out_dir + "/generator_eig_est.csv", t);

    const std::string fixture = fixture_dir + "/generator_eig_true.csv";
    if (fs::exists(fixture)) {
        CsvTable ref = read_csv(fixture);
        const size_t m = std::min(ref.rows.size(), lambda.size());
        for (size_t i = 1; i < m; ++i) { // skip the zero mode
            const double truth = std::stod(ref.rows[i][1]);
            if (truth != 0.0) {
                report.add("generator_lambda_rel_err", std::to_string(i + 1),
                           std::fabs((lambda[i] - truth) / truth));
            }
        }
    }
}

int eval_pair_model(const Config& cfg, const SystemSpec& spec, const Checkpoint& ckpt,
                    const TrajectoryBundle& bundle, const std::string& fixture_dir,
                    const std::string& out_dir, MetricReport& report) {
    ParamVector params = ckpt.params;
    if (!ckpt.ema.empty() && cfg.get_bool_or("eval.use_ema", true)) params.values = ckpt.ema;
    if (!ckpt.spec_g) throw invalid_input_error("eval: checkpoint has no lagged encoder");
    FeatureMap fmap = make_feature_map(ckpt.spec_f, params, "f");
    FeatureMap gmap = make_feature_map(*ckpt.spec_g, params, "g");

    const WeightedData data = weighted_from_pairs(bundle.pairs);
    const CcaModel model = cca_fit(data, fmap, gmap);
    const int k = model.rank();

    // singular values
    CsvTable svt;
    svt.header = {"index", "sigma_hat", "sigma_true", "rel_sq_err"};
    std::vector<double> sigma_true;
    const std::string sig_fixture = fixture_dir + "/sigma_true.csv";
    if (fs::exists(sig_fixture)) sigma_true = read_sigma_fixture(sig_fixture);
    for (int i = 0; i < k; ++i) {
        const double shat = model.svd.sigma[i];
        std::string st = "", re = "";
        if (i < static_cast<int>(sigma_true.size()) && sigma_true[i] > 0.0) {
            const double rel =
                (sigma_true[i] * sigma_true[i] - shat * shat) / (sigma_true[i] * sigma_true[i]);
            st = format_double(sigma_true[i]);
            re = format_double(rel);
            report.add("rel_sq_sv_err", std::to_string(i + 1), rel);
        }
        report.add("sigma_hat", std::to_string(i + 1), shat);
        svt.rows.push_back({std::to_string(i + 1), format_double(shat), st, re});
    }
    write_csv(out_dir + "/sv_relerr.csv", svt);

    // eigenvalues + relaxation times from the aligned spectrum
    const CcaSpectrum cspec = cca_spectrum(model);
    CsvTable eigt;
    eigt.header = {"index", "re", "im", "relaxation_time"};
    for (int i = 0; i < k; ++i) {
        const auto l = cspec.right.eigenvalues[i];
        const double tau = relaxation_time(l, bundle.trajectories[0].dt);
        eigt.rows.push_back({std::to_string(i + 1), format_double(l.real()),
                             format_double(l.imag()),
                             std::isfinite(tau) ? format_double(tau) : "inf"});
        if (i > 0) report.add("relaxation_time", std::to_string(i + 1), tau);
    }
    write_csv(out_dir + "/eigvals.csv", eigt);

    // directed Hausdorff against fixture eigenvalues, per aligned-basis prefix
    const std::string eig_fixture = fixture_dir + "/eig_true.csv";
    if (fs::exists(eig_fixture)) {
        std::vector<std::complex<double>> ref = read_eig_fixture(eig_fixture);
        std::sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) {
            return std::abs(a) > std::abs(b);
        });
        const int top = std::min<int>(3, static_cast<int>(ref.size()));
        std::vector<std::complex<double>> ref3(ref.begin(), ref.begin() + top);
        const std::string basis = cfg.get_or("eval.edmd_basis", "psi");
        CsvTable ht;
        ht.header = {"prefix", "hausdorff"};
        for (int prefix = 1; prefix <= k; ++prefix) {
            FeatureMap bmap = basis == "phi" ? aligned_phi_map(model, prefix)
                                             : aligned_psi_map(model, prefix);
            EdmdModel em = edmd_fit(data, bmap);
            ComplexSpectrum es = eig_general(em.k_forward);
            const double hd = directed_hausdorff(es.eigenvalues, ref3);
            ht.rows.push_back({std::to_string(prefix), format_double(hd)});
            report.add("hausdorff", std::to_string(prefix), hd);
        }
        write_csv(out_dir + "/hausdorff.csv", ht);
    }

    // vamp scores on the evaluation data
    const VampScores vs = vamp_scores(model, data);
    report.add("vamp2", "", vs.vamp2);
    report.add("vamp_e", "", vs.vamp_e);

    // multi-step prediction sweep, EDMD route on the configured basis and the
    // CCA route, forward and backward
    const int horizon = static_cast<int>(cfg.get_int_or("eval.horizons", 15));
    const int n_anchor = static_cast<int>(cfg.get_int_or("eval.anchors", 256));
    const Matrix& traj = bundle.trajectories[0].states;
    const auto observables = default_observables(spec);
    if (!observables.empty() && horizon > 0 && traj.rows() > 2 * horizon + 2 &&
        spec.kind != SystemKind::langevin) {
        const std::string basis_name = cfg.get_or("eval.edmd_basis", "g");
        FeatureMap bmap = basis_name == "f" ? fmap : gmap;
        EdmdModel em = edmd_fit(data, bmap);

        const Matrix b_rho0 = em.b(em.rho0_states);
        const Matrix b_rho1 = em.b(em.rho1_states);
        const int anchors_stride = std::max(1, (traj.rows() - 2 * horizon - 1) / n_anchor);
        std::vector<int> anchor_rows;
        for (int i = horizon; i + horizon < traj.rows(); i += anchors_stride)
            anchor_rows.push_back(i);
        Matrix anchor_states(static_cast<int>(anchor_rows.size()), traj.cols());
        for (size_t a = 0; a < anchor_rows.size(); ++a)
            for (int j = 0; j < traj.cols(); ++j)
                anchor_states(static_cast<int>(a), j) = traj(anchor_rows[a], j);
        const Matrix b_anchor = em.b(anchor_states);
        const Matrix phi_anchor = model.aligned_phi(anchor_states);
        const Matrix psi_anchor = model.aligned_psi(anchor_states);

        CsvTable pt;
        pt.header = {"t", "observable", "route", "rmse"};
        for (const auto& [hname, hfun] : observables) {
            std::vector<double> h0(em.rho0_states.rows()), h1(em.rho1_states.rows());
            for (int i = 0; i < em.rho0_states.rows(); ++i) h0[i] = hfun(em.rho0_states.row_span(i));
            for (int i = 0; i < em.rho1_states.rows(); ++i) h1[i] = hfun(em.rho1_states.row_span(i));

            // z vectors and inner products shared across horizons
            const int kb = em.k_forward.rows();
            std::vector<double> z0(kb, 0.0), z1(kb, 0.0);
            {
                std::vector<double> q0(kb, 0.0), q1(kb, 0.0);
                for (int i = 0; i < b_rho0.rows(); ++i)
                    for (int j = 0; j < kb; ++j) q0[j] += em.rho0_weights[i] * h0[i] * b_rho0(i, j);
                for (int i = 0; i < b_rho1.rows(); ++i)
                    for (int j = 0; j < kb; ++j) q1[j] += em.rho1_weights[i] * h1[i] * b_rho1(i, j);
                for (int i = 0; i < kb; ++i)
                    for (int j = 0; j < kb; ++j) {
                        z0[i] += em.m0_pinv(i, j) * q0[j];
                        z1[i] += em.m1_pinv(i, j) * q1[j];
                    }
            }
            std::vector<double> qpsi(k, 0.0), qphi(k, 0.0);
            {
                const Matrix psi1 = model.aligned_psi(model.rho1_states);
                const Matrix phi0 = model.aligned_phi(model.rho0_states);
                for (int i = 0; i < psi1.rows(); ++i)
                    for (int j = 0; j < k; ++j) qpsi[j] += model.rho1_weights[i] * h1[i] * psi1(i, j);
                for (int i = 0; i < phi0.rows(); ++i)
                    for (int j = 0; j < k; ++j) qphi[j] += model.rho0_weights[i] * h0[i] * phi0(i, j);
            }

            Matrix kf_pow = Matrix::identity(kb);
            Matrix kb_pow = Matrix::identity(kb);
            Matrix kr_pow = Matrix::identity(k);
            Matrix kl_pow = Matrix::identity(k);
            const Matrix klt = cspec.k_left.transposed();
            for (int t = 1; t <= horizon; ++t) {
                kf_pow = matmul(kf_pow, em.k_forward);
                kb_pow = matmul(kb_pow, em.k_backward);
                if (t > 1) {
                    kr_pow = matmul(kr_pow, cspec.k_right);
                    kl_pow = matmul(kl_pow, klt);
                }
                std::vector<double> pred_f, pred_b, pred_cf, pred_cb, truth_f, truth_b;
                for (size_t a = 0; a < anchor_rows.size(); ++a) {
                    const int row = anchor_rows[a];
                    truth_f.push_back(hfun(traj.row_span(row + t)));
                    truth_b.push_back(hfun(traj.row_span(row - t)));
                    double pf = 0.0, pb = 0.0, pcf = 0.0, pcb = 0.0;
                    for (int i = 0; i < kb; ++i) {
                        double accf = 0.0, accb = 0.0;
                        for (int j = 0; j < kb; ++j) {
                            accf += kf_pow(i, j) * z0[j];
                            accb += kb_pow(i, j) * z1[j];
                        }
                        pf += b_anchor(static_cast<int>(a), i) * accf;
                        pb += b_anchor(static_cast<int>(a), i) * accb;
                    }
                    for (int i = 0; i < k; ++i) {
                        double accf = 0.0, accb = 0.0;
                        for (int j = 0; j < k; ++j) {
                            accf += kr_pow(i, j) * qpsi[j];
                            accb += kl_pow(i, j) * qphi[j];
                        }
                        pcf += phi_anchor(static_cast<int>(a), i) * accf;
                        pcb += psi_anchor(static_cast<int>(a), i) * accb;
                    }
                    pred_f.push_back(pf);
                    pred_b.push_back(pb);
                    pred_cf.push_back(pcf);
                    pred_cb.push_back(pcb);
                }
                const double rmse_f = prediction_rmse(pred_f, truth_f);
                const double rmse_b = prediction_rmse(pred_b, truth_b);
                const double rmse_cf = prediction_rmse(pred_cf, truth_f);
                const double rmse_cb = prediction_rmse(pred_cb, truth_b);
                pt.rows.push_back({std::to_string(t), hname, "edmd", format_double(rmse_f)});
                pt.rows.push_back({std::to_string(-t), hname, "edmd", format_double(rmse_b)});
                pt.rows.push_back({std::to_string(t), hname, "cca", format_double(rmse_cf)});
                pt.rows.push_back({std::to_string(-t), hname, "cca", format_double(rmse_cb)});
                report.add("pred_rmse_edmd_" + hname, std::to_string(t), rmse_f);
                report.add("pred_rmse_edmd_" + hname, std::to_string(-t), rmse_b);
                report.add("pred_rmse_cca_" + hname, std::to_string(t), rmse_cf);
                report.add("pred_rmse_cca_" + hname, std::to_string(-t), rmse_cb);
            }
        }
        write_csv(out_dir + "/pred_rmse.csv", pt);
    }
    return kExitOk;
}

} // namespace

int cmd_oracle(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string kind = cfg.get("system.kind");
    if (kind == "logistic") return oracle_logistic(cfg, out_dir);
    if (kind == "finite_chain") return oracle_finite_chain(cfg, out_dir);
    if (kind == "langevin") return oracle_langevin(cfg, out_dir);
    std::cerr << "oracle: unsupported system " << kind << "\n";
    return kExitUsage;
}

int cmd_train(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const SystemSpec spec = detail::system_from_config(cfg);
    const uint64_t seed = static_cast<uint64_t>(cfg.get_int("optim.seed"));

    TrainConfig tc;
    tc.loss = detail::loss_from_config(cfg);
    tc.enc_f = detail::encoder_from_config(cfg, spec.state_dim());
    tc.enc_g = tc.enc_f;
    tc.lr = cfg.get_double_or("optim.lr", 1e-3);
    tc.batch = static_cast<int>(cfg.get_int_or("optim.batch", 128));
    tc.epochs = static_cast<int>(cfg.get_int_or("optim.epochs", 100));
    tc.iterations = cfg.get_int_or("optim.iterations", 0);
    tc.seed = seed;
    tc.ema_decay = cfg.get_double_or("optim.ema", 0.0);
    tc.split_moments = cfg.get_bool_or("optim.split_moments", false);
    tc.jet_step = cfg.get_double_or("optim.jet_step", kDefaultJetStep);
    tc.potential = spec.potential;
    tc.gamma = spec.gamma;
    tc.kbt = spec.kbt;

    const auto t0 = std::chrono::steady_clock::now();
    detail::TrajectoryBundle bundle = detail::build_trajectories(cfg, spec, seed);
    detail::write_trajectory_csv(out_dir, bundle.trajectories[0], spec, seed);

    TrainResult result;
    if (tc.loss.kind == LossKind::lora_generator) {
        result = train_generator(tc, bundle.trajectories[0].states);
    } else {
        result = train_pairs(tc, bundle.pairs);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    CsvTable log;
    log.header = {"step", "loss", "wall_seconds"};
    for (size_t i = 0; i < result.log_steps.size(); ++i) {
        // wall time is attributed to the final row; intermediate rows carry
        // the cumulative fraction estimate
        const double frac = result.log_steps.empty()
                                ? 0.0
                                : wall * static_cast<double>(i + 1) / result.log_steps.size();
        log.rows.push_back({std::to_string(result.log_steps[i]),
                            format_double(result.log_losses[i]), format_double(frac)});
    }
    write_csv(out_dir + "/train_log.csv", log);
    save_checkpoint(out_dir + "/checkpoint.bin", result.checkpoint);

    if (result.diverged) {
        std::cerr << "train: diverged (" << result.divergence_reason << "); partial log retained\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_eval(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const SystemSpec spec = detail::system_from_config(cfg);
    const uint64_t train_seed = static_cast<uint64_t>(cfg.get_int("optim.seed"));
    const uint64_t eval_seed =
        static_cast<uint64_t>(cfg.get_int_or("eval.seed", static_cast<long>(derive_seed(train_seed, 9999) % 1000000007)));

    const std::string ckpt_path = cfg.get_or("eval.checkpoint", out_dir + "/checkpoint.bin");
    if (!fs::exists(ckpt_path)) {
        std::cerr << "eval: checkpoint not found: " << ckpt_path << "\n";
        return kExitUsage;
    }
    const std::string fixture_dir = cfg.get_or("eval.fixture_dir", out_dir);
    Checkpoint ckpt = load_checkpoint(ckpt_path);

    Config eval_cfg = cfg;
    if (cfg.has("eval.length")) eval_cfg.set("system.length", cfg.get("eval.length"));
    detail::TrajectoryBundle bundle = detail::build_trajectories(eval_cfg, spec, eval_seed);

    MetricReport report;
    report.seed = train_seed;
    report.config_hash = cfg.hash();
    const auto t0 = std::chrono::steady_clock::now();

    const LossConfig loss = detail::loss_from_config(cfg);
    if (loss.kind == LossKind::lora_generator) {
        if (!fs::exists(fixture_dir + "/generator_eig_true.csv")) {
            std::cerr << "eval: missing fixture generator_eig_true.csv in " << fixture_dir << "\n";
            return kExitUsage;
        }
        eval_generator_spectrum(cfg, spec, ckpt, bundle.trajectories[0].states, fixture_dir, report,
                                out_dir);
    } else {
        const int rc = eval_pair_model(cfg, spec, ckpt, bundle, fixture_dir, out_dir, report);
        if (rc != kExitOk) return rc;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "eval: finished in " << report.wall_seconds << " s\n";

    CsvTable mt;
    mt.header = {"metric", "index", "value", "diverged", "seed", "config_hash"};
    for (const auto& e : report.entries) {
        mt.rows.push_back({e.metric, e.index, format_double(e.value), e.diverged ? "1" : "0",
                           std::to_string(report.seed), report.config_hash});
    }
    write_csv(out_dir + "/metrics.csv", mt);
    return kExitOk;
}

namespace {

int run_sweep(const std::string& command, const std::string& config_path, const std::string& out_dir,
              const std::vector<double>& seeds, int jobs) {
    char exe[4096];
    const ssize_t len = readlink("/proc/self/exe", exe, sizeof(exe) - 1);
    if (len <= 0) {
        std::cerr << "sweep: cannot resolve executable path\n";
        return kExitUsage;
    }
    exe[len] = '\0';

    int worst = kExitOk;
    size_t next = 0;
    std::vector<std::pair<pid_t, int>> running;
    auto reap = [&](bool block) {
        for (size_t i = 0; i < running.size();) {
            int status = 0;
            const pid_t r = waitpid(running[i].first, &status, block ? 0 : WNOHANG);
            if (r == running[i].first) {
                const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitNumerical;
                worst = std::max(worst, code);
                running.erase(running.begin() + i);
                if (block) return;
            } else {
                ++i;
            }
        }
    };
    while (next < seeds.size() || !running.empty()) {
        while (next < seeds.size() && static_cast<int>(running.size()) < jobs) {
            const long seed = static_cast<long>(seeds[next]);
            const std::string run_dir = out_dir + "/seed_" + std::to_string(seed);
            const pid_t pid = fork();
            if (pid == 0) {
                const std::string seed_str = std::to_string(seed);
                execl(exe, exe, command.c_str(), "--config", config_path.c_str(), "--out",
                      run_dir.c_str(), "--seed", seed_str.c_str(), static_cast<char*>(nullptr));
                _exit(kExitUsage);
            }
            running.emplace_back(pid, 0);
            ++next;
        }
        if (!running.empty()) reap(true);
    }
    reap(false);
    return worst;
}

} // namespace

int run_cli(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: koopman-lora oracle|train|eval --config <path> [--out <dir>]"
                     " [--jobs n] [--seed k]\n";
        return kExitUsage;
    }
    const std::string command = argv[1];
    if (command != "oracle" && command != "train" && command != "eval") {
        std::cerr << "unknown command: " << command << "\n";
        return kExitUsage;
    }
    std::string config_path, out_dir = ".";
    long seed_override = -1;
    int jobs = 1;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto need_value = [&](const char* name) -> std::string {
            if (i + 1 >= argc) {
                throw invalid_input_error(std::string(name) + " requires a value");
            }
            return argv[++i];
        };
        try {
            if (arg == "--config") {
                config_path = need_value("--config");
            } else if (arg == "--out") {
                out_dir = need_value("--out");
            } else if (arg == "--seed") {
                seed_override = std::stol(need_value("--seed"));
            } else if (arg == "--jobs") {
                jobs = static_cast<int>(std::stol(need_value("--jobs")));
            } else {
                std::cerr << "unknown option: " << arg << "\n";
                return kExitUsage;
            }
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return kExitUsage;
        }
    }
    if (config_path.empty()) {
        std::cerr << "--config is required\n";
        return kExitUsage;
    }

    try {
        Config cfg = Config::load(config_path);
        if (seed_override >= 0) cfg.set("optim.seed", std::to_string(seed_override));

        const std::vector<double> sweep_seeds = cfg.get_doubles_or("sweep.seeds", {});
        if (!sweep_seeds.empty() && seed_override < 0 && command != "oracle") {
            return run_sweep(command, config_path, out_dir, sweep_seeds, std::max(1, jobs));
        }
        if (command == "oracle") return cmd_oracle(cfg, out_dir);
        if (command == "train") return cmd_train(cfg, out_dir);
        return cmd_eval(cfg, out_dir);
    } catch (const invalid_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

} // namespace klora
