// pimtool: batch experiment runner for moment-based Fisher information
// bounds. Subcommands: pim, fim, ladder, maxent, verify, gmm, study.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pim/fim.hpp"
#include "pim/gmm.hpp"
#include "pim/maxent.hpp"
#include "pim/moments.hpp"
#include "pim/pim.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonFlags {
  std::string model = "gaussian";
  std::string theta = "0,1";
  int n_obs = 1;
  std::string stats = "m1,m2";
  std::string method = "analytic";
  long samples = 1000000;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double fd_step = 1e-4;
  double ridge = 0.0;
  double laplace_scale = 1.0;
  double cubic_coeff = 0.1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_stats = true) {
  cmd->add_option("--model", f.model, "model family");
  cmd->add_option("--theta", f.theta, "comma-separated parameter vector");
  cmd->add_option("--n-obs", f.n_obs, "observations per data vector");
  if (with_stats) cmd->add_option("--stats", f.stats, "statistic degrees, e.g. m1,m2");
  cmd->add_option("--method", f.method, "analytic|mc");
  cmd->add_option("--samples", f.samples, "Monte Carlo sample count");
  cmd->add_option("--seed", f.seed, "RNG seed")->each([&f](const std::string&) {
    f.seed_given = true;
  });
  cmd->add_option("--fd-step", f.fd_step, "finite-difference step for G");
  cmd->add_option("--ridge", f.ridge, "opt-in ridge for singular Sigma");
  cmd->add_option("--laplace-scale", f.laplace_scale, "known Laplace scale b");
  cmd->add_option("--cubic-coeff", f.cubic_coeff, "cubic coefficient c");
  cmd->add_option("--out", f.out, "output file");
}

std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

pim::StatisticSet parse_stats(const std::string& s) {
  std::vector<pim::StatisticDescriptor> ds;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    if (tok[0] == 'm') tok = tok.substr(1);
    ds.push_back(pim::StatisticDescriptor::monomial(std::stoi(tok)));
  }
  if (ds.empty()) throw pim::InvalidParameter("--stats is empty");
  return pim::StatisticSet(std::move(ds));
}

void apply_env_seed(CommonFlags& f) {
  if (f.seed_given) return;
  if (const char* env = std::getenv("PIMTOOL_SEED")) {
    f.seed = std::strtoull(env, nullptr, 10);
    f.seed_given = true;
  }
}

pim::ModelSpec make_model(const CommonFlags& f) {
  const auto th = parse_reals(f.theta);
  pim::ModelConfig cfg;
  cfg.laplace_scale = f.laplace_scale;
  cfg.cubic_coeff = f.cubic_coeff;
  Eigen::VectorXd theta =
      Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<long>(th.size()));
  return pim::ModelSpec(pim::parse_family(f.model), theta, f.n_obs, cfg);
}

pim::MomentMethod parse_method(const std::string& m) {
  if (m == "analytic") return pim::MomentMethod::Analytic;
  if (m == "mc" || m == "monte-carlo") return pim::MomentMethod::MonteCarlo;
  throw pim::InvalidParameter("--method must be analytic or mc");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Atomic output: write to a temp file and rename into place. No
// timestamps anywhere, so reruns are byte-identical.
void emit(const std::string& out_path, const std::string& manifest,
          std::uint64_t seed, const std::string& body) {
  std::ostringstream os;
  os << "# pimtool " << kVersion << "\n";
  os << "# manifest-hash " << std::hex << fnv1a(manifest) << std::dec << "\n";
  os << "# seed " << seed << "\n";
  os << body;
  if (out_path.empty()) {
    std::cout << os.str();
    return;
  }
  const std::string tmp = out_path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw pim::InvalidParameter("cannot open output file " + tmp);
    f << os.str();
  }
  std::filesystem::rename(tmp, out_path);
}

std::string csv_theta(const Eigen::VectorXd& th) {
  std::ostringstream os;
  os << '"';
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    if (i) os << ',';
    os << std::setprecision(17) << th[i];
  }
  os << '"';
  return os.str();
}

std::string manifest_line(const CommonFlags& f, const std::string& sub) {
  std::ostringstream os;
  os << sub << " --model " << f.model << " --theta " << f.theta << " --n-obs "
     << f.n_obs << " --stats " << f.stats << " --method " << f.method
     << " --samples " << f.samples << " --seed " << f.seed << " --fd-step "
     << f.fd_step << " --ridge " << f.ridge;
  return os.str();
}

std::string info_body(const pim::InfoMatrix& info, Eigen::Index m_count) {
  std::ostringstream body;
  pim::write_matrix_text(body, info.matrix.mat());
  body << "theta,M,min_eig,frobenius,method\n";
  body << csv_theta(info.theta) << ',' << m_count << ',' << std::setprecision(17)
       << pim::min_eigenvalue(info.matrix) << ',' << info.matrix.frobenius() << ','
       << info.method << "\n";
  return body.str();
}

int run_pim(const CommonFlags& f) {
  const auto model = make_model(f);
  const auto set = parse_stats(f.stats);
  if (set.size() < model.theta().size())
    throw pim::InvalidParameter("PIM requires M >= n statistics (got M=" +
                                std::to_string(set.size()) + ", n=" +
                                std::to_string(model.theta().size()) + ")");
  pim::McOptions mc{f.samples, f.seed, f.fd_step};
  const auto summary = pim::moments_for(model, set, parse_method(f.method), mc);
  const auto info = pim::pim_bound(summary, model.theta(), f.ridge);
  emit(f.out, manifest_line(f, "pim"), f.seed, info_body(info, set.size()));
  return 0;
}

int run_fim(const CommonFlags& f) {
  const auto model = make_model(f);
  pim::InfoMatrix info = parse_method(f.method) == pim::MomentMethod::Analytic
                             ? pim::analytic_fim(model)
                             : pim::mc_fim(model, f.samples, f.seed);
  emit(f.out, manifest_line(f, "fim"), f.seed, info_body(info, 0));
  return 0;
}

int run_ladder(const CommonFlags& f, int max_degree) {
  const auto model = make_model(f);
  pim::McOptions mc{f.samples, f.seed, f.fd_step};
  const auto report = pim::ladder(model, pim::monomial_ladder(max_degree),
                                  parse_method(f.method), mc);
  std::ostringstream body;
  body << "M,min_eig,frobenius,succ_min_eig,rank1_rel_error,status\n";
  for (const auto& rung : report.rungs) {
    body << rung.m_count << ',';
    if (rung.bound) {
      body << std::setprecision(17) << pim::min_eigenvalue(rung.bound->matrix) << ','
           << rung.bound->matrix.frobenius() << ',';
    } else {
      body << ",,";
    }
    if (rung.succ_min_eigenvalue) body << std::setprecision(17) << *rung.succ_min_eigenvalue;
    body << ',';
    if (rung.rank1_rel_error) body << std::setprecision(17) << *rung.rank1_rel_error;
    body << ',' << (rung.error.empty() ? "ok" : "failed") << "\n";
  }
  body << "# monotone " << (report.monotone ? "true" : "false") << "\n";
  emit(f.out, manifest_line(f, "ladder") + " --max-degree " + std::to_string(max_degree),
       f.seed, body.str());
  return report.monotone ? 0 : 1;
}

pim::Support support_for(const pim::ModelSpec& model, const std::string& flag) {
  if (flag == "auto") return pim::default_support(model.family());
  if (flag == "realline") return pim::Support::real_line();
  if (flag == "halfline") return pim::Support::half_line();
  if (flag.rfind("points:", 0) == 0) {
    return pim::Support::finite(parse_reals(flag.substr(7)));
  }
  throw pim::InvalidParameter("--support must be auto|realline|halfline|points:a,b,...");
}

int run_maxent(const CommonFlags& f, const std::string& support_flag) {
  const auto model = make_model(f);
  const auto set = parse_stats(f.stats);
  const auto support = support_for(model, support_flag);
  pim::ChainOptions opts;
  opts.mc_samples = f.samples;
  opts.seed = f.seed;
  opts.moment_method = parse_method(f.method);
  opts.moment_mc = pim::McOptions{f.samples, f.seed, f.fd_step};
  const auto rep = pim::bound_chain_check(model, set, support, opts);
  const auto fit = pim::fit_maxent_model(model, set, support, opts.moment_method,
                                         opts.moment_mc);
  std::ostringstream body;
  body << "quantity,value\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < fit.lambda.size(); ++i)
    body << "lambda" << i + 1 << ',' << fit.lambda[i] << "\n";
  body << "lambda0," << fit.lambda0 << "\n";
  body << "fit_residual," << fit.residual << "\n";
  body << "f_star_frobenius," << rep.f_star.matrix.frobenius() << "\n";
  body << "f_tilde_frobenius," << rep.f_tilde.frobenius() << "\n";
  body << "pim_frobenius," << rep.pim.matrix.frobenius() << "\n";
  if (rep.fim) body << "fim_frobenius," << rep.fim->matrix.frobenius() << "\n";
  body << "chain_holds," << (rep.chain_holds ? 1 : 0) << "\n";
  body << "chain_min_eig_lhs," << rep.chain_min_eig_lhs << "\n";
  body << "chain_min_eig_fim," << rep.chain_min_eig_fim << "\n";
  body << "gap_identity_residual," << rep.gap_identity_residual << "\n";
  body << "error_budget," << rep.error_budget << "\n";
  body << "tight_condition_residual," << rep.tight_residual << "\n";
  emit(f.out, manifest_line(f, "maxent") + " --support " + support_flag, f.seed,
       body.str());
  return 0;
}

int run_gmm(const CommonFlags& f, const std::string& init_flag, long sample_n,
            const std::string& data_file) {
  const auto model = make_model(f);
  const auto set = parse_stats(f.stats);
  std::vector<double> y;
  if (!data_file.empty()) {
    std::ifstream in(data_file);
    if (!in) throw pim::InvalidParameter("cannot read data file " + data_file);
    double v;
    while (in >> v) y.push_back(v);
  } else {
    y.resize(static_cast<std::size_t>(sample_n > 0 ? sample_n : model.n_obs()));
    model.sample_draw(f.seed, 0, y);
  }
  const auto data_model = model.with_n_obs(static_cast<int>(y.size()));
  Eigen::VectorXd init;
  if (init_flag.empty()) {
    init = pim::default_init(model.family(), y, model.config());
  } else {
    const auto v = parse_reals(init_flag);
    init = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
  }
  pim::GmmOptions opts;
  opts.moment_method = parse_method(f.method);
  opts.moment_mc = pim::McOptions{f.samples, f.seed, f.fd_step};
  const auto res =
      pim::estimate(data_model.with_theta(init), set.eval(y), set, opts);
  std::ostringstream body;
  body << "theta_hat,iterations,converged,final_cost\n";
  body << csv_theta(res.theta_hat) << ',' << res.iterations << ','
       << (res.converged ? 1 : 0) << ',' << std::setprecision(17) << res.final_cost
       << "\n";
  pim::write_matrix_text(body, res.asymptotic_cov.mat());
  emit(f.out, manifest_line(f, "gmm"), f.seed, body.str());
  return 0;
}

int run_study(const CommonFlags& f, long reps, int study_n) {
  CommonFlags g = f;
  g.n_obs = study_n;
  const auto model = make_model(g);
  const auto set = parse_stats(f.stats);
  pim::StudyOptions opts;
  opts.gmm.moment_method = parse_method(f.method);
  opts.gmm.moment_mc = pim::McOptions{20000, f.seed, f.fd_step};
  opts.pim_method = opts.gmm.moment_method;
  opts.pim_mc = pim::McOptions{f.samples, f.seed, f.fd_step};
  const auto rep = pim::mc_estimator_study(model, set, reps, f.seed, opts);
  std::ostringstream body;
  body << "rep,theta_hat,iterations\n" << std::setprecision(17);
  for (std::size_t r = 0; r < rep.estimates.size(); ++r)
    body << r << ',' << csv_theta(rep.estimates[r]) << ',' << rep.rep_iterations[r]
         << "\n";
  body << "summary,empirical_diag,predicted_diag,bias\n";
  for (Eigen::Index i = 0; i < rep.bias.size(); ++i)
    body << i << ',' << rep.empirical_cov(i, i) << ',' << rep.predicted_cov(i, i)
         << ',' << rep.bias[i] << "\n";
  body << "# max_relative_diagonal_error " << rep.max_relative_diagonal_error << "\n";
  body << "# failures " << rep.failures << "\n";
  emit(f.out,
       manifest_line(f, "study") + " --reps " + std::to_string(reps) + " --study-n " +
           std::to_string(study_n),
       f.seed, body.str());
  return 0;
}

// One manifest line = one flag set; the full chain matrix is evaluated for
// each and emitted as CSV rows in manifest order regardless of --jobs.
struct VerifyRow {
  std::string text;
  bool failed = false;
};

VerifyRow verify_line(const std::string& line) {
  std::istringstream ss(line);
  CommonFlags f;
  f.samples = 100000;
  std::string key;
  while (ss >> key) {
    std::string val;
    if (!(ss >> val)) break;
    if (key == "--model") f.model = val;
    else if (key == "--theta") f.theta = val;
    else if (key == "--n-obs") f.n_obs = std::stoi(val);
    else if (key == "--stats") f.stats = val;
    else if (key == "--method") f.method = val;
    else if (key == "--samples") f.samples = std::stol(val);
    else if (key == "--seed") { f.seed = std::stoull(val); f.seed_given = true; }
    else if (key == "--fd-step") f.fd_step = std::stod(val);
    else if (key == "--ridge") f.ridge = std::stod(val);
    else if (key == "--laplace-scale") f.laplace_scale = std::stod(val);
    else if (key == "--cubic-coeff") f.cubic_coeff = std::stod(val);
    else throw pim::InvalidParameter("verify manifest: unknown flag " + key);
  }
  apply_env_seed(f);
  const auto model = make_model(f);
  const auto set = parse_stats(f.stats);
  const bool ridged = f.ridge > 0.0;
  const std::string tag = ridged ? ",ridged" : "";
  std::ostringstream out;
  bool any_fail = false;
  auto row = [&](const std::string& check, bool pass, double margin) {
    out << f.model << ",\"" << f.stats << "\"," << check << ','
        << (pass ? "pass" : "fail") << ',' << std::setprecision(17) << margin << tag
        << "\n";
    if (!pass && !ridged) any_fail = true;
  };
  try {
    pim::McOptions mc{f.samples, f.seed, f.fd_step};
    const auto method = parse_method(f.method);
    const auto summary = pim::moments_for(model, set, method, mc);
    const auto b = pim::pim_bound(summary, model.theta(), f.ridge);
    row("pim_psd", pim::min_eigenvalue(b.matrix) >= -1e-8 * std::max(1.0, b.matrix.frobenius()),
        pim::min_eigenvalue(b.matrix));
    const auto fim = pim::fim_or_none(model, f.samples, f.seed);
    if (fim) {
      const auto cmp = pim::loewner_leq(b.matrix, fim->matrix,
                                        method == pim::MomentMethod::Analytic ? 1e-8 : 1e-3);
      row("pim_leq_fim", cmp.holds, cmp.min_eigenvalue);
    }
    if (model.has(pim::Capability::LogDensity)) {
      pim::ChainOptions copts;
      copts.mc_samples = f.samples;
      copts.seed = f.seed;
      copts.moment_method = method;
      copts.moment_mc = mc;
      const auto rep = pim::bound_chain_check(model, set,
                                              pim::default_support(model.family()), copts);
      row("maxent_chain", rep.chain_holds, rep.chain_min_eig_lhs);
      row("gap_identity", rep.gap_identity_residual <= rep.error_budget,
          rep.gap_identity_residual);
    }
  } catch (const pim::Error& e) {
    out << f.model << ",\"" << f.stats << "\",error,fail," << e.name() << tag << "\n";
    if (!ridged) any_fail = true;
  }
  return VerifyRow{out.str(), any_fail};
}

int run_verify(const std::string& manifest_path, int jobs, const std::string& out_path,
               std::uint64_t seed) {
  std::ifstream in(manifest_path);
  if (!in) {
    std::cerr << "verify: cannot read manifest " << manifest_path << "\n";
    return 2;
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  if (lines.empty()) {
    std::cerr << "verify: manifest is empty\n";
    return 2;
  }
  std::vector<VerifyRow> rows(lines.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < lines.size(); ++i) rows[i] = verify_line(lines[i]);
  } else {
    std::mutex m;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lk(m);
          if (next >= lines.size()) return;
          i = next++;
        }
        rows[i] = verify_line(lines[i]);
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::ostringstream body;
  body << "model,stats,check,result,margin\n";
  bool any_fail = false;
  for (const auto& r : rows) {
    body << r.text;
    any_fail = any_fail || r.failed;
  }
  std::ifstream mf(manifest_path);
  std::stringstream manifest;
  manifest << mf.rdbuf();
  emit(out_path, manifest.str(), seed, body.str());
  return any_fail ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moment-based Fisher information bounds"};
  app.require_subcommand(1);

  CommonFlags f;
  int max_degree = 4;
  std::string support_flag = "auto";
  std::string init_flag;
  std::string data_file;
  long sample_n = 0;
  long reps = 1000;
  int study_n = 500;
  std::string manifest_path;
  int jobs = 1;

  auto* c_pim = app.add_subcommand("pim", "Pearson information matrix");
  add_common(c_pim, f);
  auto* c_fim = app.add_subcommand("fim", "Fisher information matrix");
  add_common(c_fim, f);
  auto* c_ladder = app.add_subcommand("ladder", "monotonicity ladder");
  add_common(c_ladder, f);
  c_ladder->add_option("--max-degree", max_degree, "top monomial degree");
  auto* c_maxent = app.add_subcommand("maxent", "max-entropy fit and chain check");
  add_common(c_maxent, f);
  c_maxent->add_option("--support", support_flag, "auto|realline|halfline|points:a,b");
  auto* c_gmm = app.add_subcommand("gmm", "single GMM estimate");
  add_common(c_gmm, f);
  c_gmm->add_option("--init", init_flag, "initial theta (comma list)");
  c_gmm->add_option("--data", data_file, "whitespace-separated observations");
  c_gmm->add_option("--sample-n", sample_n, "draw a fresh dataset of this size");
  auto* c_study = app.add_subcommand("study", "Monte Carlo estimator study");
  add_common(c_study, f);
  c_study->add_option("--reps", reps, "number of replicates");
  c_study->add_option("--study-n", study_n, "observations per replicate");
  auto* c_verify = app.add_subcommand("verify", "run the chain matrix from a manifest");
  c_verify->add_option("--manifest", manifest_path, "manifest file")->required();
  c_verify->add_option("--jobs", jobs, "parallel manifest lines");
  c_verify->add_option("--out", f.out, "output file");
  c_verify->add_option("--seed", f.seed, "RNG seed")->each([&f](const std::string&) {
    f.seed_given = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_env_seed(f);
    if (c_pim->parsed()) return run_pim(f);
    if (c_fim->parsed()) return run_fim(f);
    if (c_ladder->parsed()) return run_ladder(f, max_degree);
    if (c_maxent->parsed()) return run_maxent(f, support_flag);
    if (c_gmm->parsed()) return run_gmm(f, init_flag, sample_n, data_file);
    if (c_study->parsed()) return run_study(f, reps, study_n);
    if (c_verify->parsed()) return run_verify(manifest_path, jobs, f.out, f.seed);
  } catch (const pim::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
