#include "lsgpr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsgpr/benchmark.hpp"
#include "lsgpr/embed.hpp"
#include "lsgpr/error.hpp"
#include "lsgpr/network.hpp"
#include "lsgpr/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace lsgpr::cli {

namespace {

// ---------------------------------------------------------------- text I/O

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw ValidationError("cannot create directory " + dir.string());
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name, bool required, const std::string& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw ValidationError(file + " has no '" + name + "' column");
      return -1;
    }
    return static_cast<int>(it - header.begin());
  }
};

Table read_csv(const fs::path& path) {
  std::stringstream ss(read_text(path));
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw ValidationError(path.string() + ": row has " + std::to_string(cells.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw ValidationError(path.string() + " is empty");
  return t;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ValidationError("cannot parse number '" + s + "' in " + context);
  return v;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + '\n';
}

std::string dump(const json& j) { return j.dump(2) + '\n'; }

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

fs::path sidecar(const fs::path& file, const std::string& suffix) {
  fs::path out = file;
  out.replace_extension();
  return fs::path(out.string() + suffix);
}

// ------------------------------------------------------- option recording

// Binds CLI11 options and remembers how to dump their resolved values, so
// every output can carry the exact configuration that produced it.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_, "JSON file with option values (flags win)");
  }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    record_.push_back([name, &var](json& j) { j[name] = var; });
    return app_->add_option("--" + name, var, desc)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    record_.push_back([name, &var](json& j) { j[name] = var; });
    return app_->add_flag("--" + name, var, desc);
  }

  json resolved(const std::string& command) const {
    json opts = json::object();
    for (const auto& f : record_) f(opts);
    return json{{"command", command}, {"options", opts}};
  }

 private:
  CLI::App* app_;
  std::string config_;
  std::vector<std::function<void(json&)>> record_;
};

// ------------------------------------------------------------ embeddings

json embedding_json(const Subject& s) {
  const Embedding& e = s.embedding;
  std::vector<double> u;
  u.reserve(static_cast<std::size_t>(e.latent.size()));
  for (Eigen::Index k = 0; k < e.latent.rows(); ++k)
    for (Eigen::Index c = 0; c < e.latent.cols(); ++c) u.push_back(e.latent(k, c));
  json j{{"subject_id", s.id}, {"a", e.intercept}, {"b", e.pin}, {"p", e.nodes()}, {"d", e.dim()}, {"U", u}};
  if (s.covariates.size()) j["z"] = std::vector<double>(s.covariates.data(), s.covariates.data() + s.covariates.size());
  return j;
}

Subject subject_from_json(const json& j) {
  Subject s;
  try {
    s.id = j.at("subject_id").get<std::string>();
    s.embedding.intercept = j.at("a").get<double>();
    s.embedding.pin = j.at("b").get<double>();
    const int p = j.at("p").get<int>();
    const int d = j.at("d").get<int>();
    const auto u = j.at("U").get<std::vector<double>>();
    if (p < 1 || d < 1 || u.size() != static_cast<std::size_t>(p) * static_cast<std::size_t>(d))
      throw ValidationError("embedding " + s.id + ": U has " + std::to_string(u.size()) + " entries, expected p*d");
    s.embedding.latent.resize(p, d);
    for (int k = 0; k < p; ++k)
      for (int c = 0; c < d; ++c) s.embedding.latent(k, c) = u[static_cast<std::size_t>(k * d + c)];
    if (j.contains("z")) {
      const auto z = j.at("z").get<std::vector<double>>();
      s.covariates = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed embedding: ") + e.what());
  }
  return s;
}

std::map<std::string, Eigen::VectorXd> load_covariates(const fs::path& path) {
  const Table t = read_csv(path);
  const int id_col = t.column("subject_id", true, path.string());
  std::map<std::string, Eigen::VectorXd> out;
  for (const auto& row : t.rows) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(row.size() - 1));
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (static_cast<int>(c) != id_col) z[k++] = parse_double(row[c], path.string());
    out[row[static_cast<std::size_t>(id_col)]] = z;
  }
  return out;
}

struct Responses {
  std::vector<std::string> ids;
  Eigen::VectorXd y;
};

// Rows of subject_id,y[,split]; `split` == "all" keeps every row.
Responses load_responses(const fs::path& path, const std::string& split) {
  const Table t = read_csv(path);
  const int id_col = t.column("subject_id", true, path.string());
  const int y_col = t.column("y", true, path.string());
  const int split_col = t.column("split", false, path.string());
  Responses r;
  std::vector<double> y;
  for (const auto& row : t.rows) {
    if (split != "all" && split_col >= 0 && row[static_cast<std::size_t>(split_col)] != split) continue;
    r.ids.push_back(row[static_cast<std::size_t>(id_col)]);
    y.push_back(parse_double(row[static_cast<std::size_t>(y_col)], path.string()));
  }
  r.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return r;
}

std::vector<Subject> select_subjects(const std::vector<Subject>& all, const std::vector<std::string>& ids,
                                     const std::string& covariate_path) {
  std::map<std::string, const Subject*> by_id;
  for (const auto& s : all) by_id[s.id] = &s;
  std::map<std::string, Eigen::VectorXd> cov;
  if (!covariate_path.empty()) cov = load_covariates(covariate_path);
  std::vector<Subject> out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("subject " + id + " has no embedding");
    out.push_back(*it->second);
    if (!covariate_path.empty()) {
      const auto c = cov.find(id);
      if (c == cov.end()) throw ValidationError("subject " + id + " has no covariate row");
      out.back().covariates = c->second;
    }
  }
  return out;
}

// ---------------------------------------------------------------- models

json to_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
    rows.push_back(r);
  }
  return rows;
}

json to_rows(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<int> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
    rows.push_back(r);
  }
  return rows;
}

template <class Matrix>
Matrix from_rows(const json& rows, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ValidationError("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<typename Matrix::Scalar>();
  }
  return m;
}

json model_json(const GpModel& model) {
  json training = json::array();
  for (std::size_t i = 0; i < model.training.size(); ++i) {
    json s = embedding_json(model.training[i]);
    s["y"] = model.y[static_cast<Eigen::Index>(i)];
    training.push_back(s);
  }
  const GpHyperparams& hp = model.mle.hyperparams;
  json j;
  j["format"] = "lsgpr-model";
  j["version"] = 1;
  j["mode"] = to_string(model.mode);
  j["training_hash"] = hex(fnv1a(training.dump()));
  j["priors"] = {{"a_tau", model.priors.a_tau}, {"b_tau", model.priors.b_tau},
                 {"a_psi1", model.priors.a_psi1}, {"b_psi1", model.priors.b_psi1},
                 {"a_pi", model.priors.a_pi}, {"b_pi", model.priors.b_pi}};
  j["sampler"] = {{"iterations", model.sampler.iterations}, {"burn_in", model.sampler.burn_in},
                  {"thin", model.sampler.thin}, {"proposal_sd", model.sampler.proposal_sd},
                  {"seed", model.sampler.seed}};
  j["mle"] = {{"theta", std::vector<double>(hp.theta.data(), hp.theta.data() + 5)},
              {"tau", hp.tau()}, {"psi1", hp.psi1()}, {"psi_u", hp.psi_u()}, {"psi_a", hp.psi_a()},
              {"psi_z", hp.psi_z()}, {"objective", model.mle.objective()},
              {"iterations", model.mle.iterations}, {"status", to_string(model.mle.status)}};
  if (model.chains) {
    const Chains& c = *model.chains;
    const Eigen::VectorXd means = c.hyper.colwise().mean();
    json chains;
    chains["draws"] = c.draws();
    chains["iterations"] = c.iterations;
    chains["accepted"] = {{"psi_u", c.accepted[0]}, {"psi_a", c.accepted[1]}, {"psi_z", c.accepted[2]}};
    chains["posterior_mean"] = {{"tau", means[0]}, {"psi1", means[1]}, {"psi_u", means[2]},
                                {"psi_a", means[3]}, {"psi_z", means[4]}};
    if (c.has_node_selection()) {
      const Eigen::VectorXd incl = c.inclusion_probabilities();
      chains["inclusion_probabilities"] = std::vector<double>(incl.data(), incl.data() + incl.size());
    }
    chains["hyper"] = to_rows(c.hyper);
    chains["atoms"] = to_rows(c.atoms);
    chains["mask"] = to_rows(c.mask);
    chains["pi"] = std::vector<double>(c.inclusion_prob.data(), c.inclusion_prob.data() + c.inclusion_prob.size());
    j["chains"] = chains;
  }
  j["training"] = training;
  return j;
}

GpModel model_from_json(const json& j) {
  GpModel model;
  try {
    if (j.at("format") != "lsgpr-model") throw ValidationError("not a model file");
    model.mode = parse_fit_mode(j.at("mode").get<std::string>());
    const auto& training = j.at("training");
    model.y.resize(static_cast<Eigen::Index>(training.size()));
    for (std::size_t i = 0; i < training.size(); ++i) {
      model.training.push_back(subject_from_json(training[i]));
      model.y[static_cast<Eigen::Index>(i)] = training[i].at("y").get<double>();
    }
    const auto& pr = j.at("priors");
    model.priors = {pr.at("a_tau"), pr.at("b_tau"), pr.at("a_psi1"), pr.at("b_psi1"), pr.at("a_pi"), pr.at("b_pi")};
    const auto& sm = j.at("sampler");
    model.sampler.iterations = sm.at("iterations");
    model.sampler.burn_in = sm.at("burn_in");
    model.sampler.thin = sm.at("thin");
    model.sampler.proposal_sd = sm.at("proposal_sd");
    model.sampler.seed = sm.at("seed");
    const auto& mle = j.at("mle");
    const auto theta = mle.at("theta").get<std::vector<double>>();
    if (theta.size() != 5) throw ValidationError("model theta must have 5 entries");
    for (int k = 0; k < 5; ++k) model.mle.hyperparams.theta[k] = theta[static_cast<std::size_t>(k)];
    model.mle.trace = {mle.at("objective").get<double>()};
    model.mle.iterations = mle.at("iterations");
    const std::string status = mle.at("status");
    model.mle.status = status == "converged"        ? MleStatus::Converged
                       : status == "step-underflow" ? MleStatus::StepUnderflow
                                                    : MleStatus::MaxIterations;
    if (j.contains("chains")) {
      const auto& c = j.at("chains");
      Chains chains;
      chains.hyper = from_rows<Eigen::MatrixXd>(c.at("hyper"), 5);
      chains.atoms = from_rows<Eigen::MatrixXd>(c.at("atoms"), model.y.size());
      const auto& mask = c.at("mask");
      const Eigen::Index p = mask.empty() ? 0 : static_cast<Eigen::Index>(mask.front().size());
      chains.mask = from_rows<Eigen::MatrixXi>(mask, p);
      const auto pi = c.at("pi").get<std::vector<double>>();
      chains.inclusion_prob = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<Eigen::Index>(pi.size()));
      chains.accepted = {c.at("accepted").at("psi_u"), c.at("accepted").at("psi_a"), c.at("accepted").at("psi_z")};
      chains.iterations = c.at("iterations");
      model.chains = std::move(chains);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
  return model;
}

std::string chain_csv(const Chains& c) {
  std::vector<std::string> header{"tau", "psi1", "psi_u", "psi_a", "psi_z"};
  for (Eigen::Index i = 0; i < c.atoms.cols(); ++i) header.push_back("phi_" + std::to_string(i + 1));
  if (c.has_node_selection()) {
    for (Eigen::Index j = 0; j < c.mask.cols(); ++j) header.push_back("beta_" + std::to_string(j + 1));
    header.emplace_back("pi");
  }
  std::string out = csv_row(header);
  for (Eigen::Index d = 0; d < c.draws(); ++d) {
    std::vector<std::string> row;
    for (int k = 0; k < 5; ++k) row.push_back(format_double(c.hyper(d, k)));
    for (Eigen::Index i = 0; i < c.atoms.cols(); ++i) row.push_back(format_double(c.atoms(d, i)));
    if (c.has_node_selection()) {
      for (Eigen::Index j = 0; j < c.mask.cols(); ++j) row.push_back(std::to_string(c.mask(d, j)));
      row.push_back(format_double(c.inclusion_prob[d]));
    }
    out += csv_row(row);
  }
  return out;
}

std::string report_csv(const EvalReport& r) {
  return csv_row({"mse", "coverage", "width", "count"}) +
         csv_row({format_double(r.mse), format_double(r.coverage), format_double(r.width), std::to_string(r.count)});
}

json report_json(const EvalReport& r) {
  auto num = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  return {{"mse", num(r.mse)}, {"coverage", num(r.coverage)}, {"width", num(r.width)}, {"count", r.count}};
}

std::string subject_name(int i, int total) {
  const int width = static_cast<int>(std::to_string(total).size());
  std::ostringstream os;
  os << 's' << std::setw(width) << std::setfill('0') << (i + 1);
  return os.str();
}

// ------------------------------------------------------------- commands

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Options> opts;
  std::function<int()> action;
};

struct FitArgs {
  std::string embeddings, responses, covariates, split = "train", mode = "mle", out, chain;
  int iters = 2000, burnin = 500, thin = 1, mle_iters = 1000;
  double proposal_sd = 0.01;
  double a_tau = 1, b_tau = 1, a_psi1 = 1, b_psi1 = 1, a_pi = 1, b_pi = 1;
  std::uint64_t seed = 1;
  bool node_selection = false;

  void bind(Options& o, bool selection_command) {
    o.add("embeddings", embeddings, "embedding directory")->required();
    o.add("responses", responses, "CSV with subject_id,y[,split]")->required();
    o.add("covariates", covariates, "optional CSV with subject_id and covariate columns");
    o.add("split", split, "split label of the training rows ('all' for every row)");
    if (!selection_command) {
      o.add("mode", mode, "mle or mcmc");
      o.flag("node-selection", node_selection, "sample node indicators (implies mcmc)");
    }
    o.add("iters", iters, "sampler iterations");
    o.add("burnin", burnin, "sampler burn-in");
    o.add("thin", thin, "keep every thin-th draw");
    o.add("proposal-sd", proposal_sd, "random-walk sd on log lengthscales");
    o.add("mle-iters", mle_iters, "maximum optimizer iterations");
    o.add("a-tau", a_tau, "Gamma shape for tau");
    o.add("b-tau", b_tau, "Gamma rate for tau");
    o.add("a-psi1", a_psi1, "inverse-Gamma shape for psi1");
    o.add("b-psi1", b_psi1, "inverse-Gamma scale for psi1");
    o.add("a-pi", a_pi, "Beta prior on the inclusion probability");
    o.add("b-pi", b_pi, "Beta prior on the inclusion probability");
    o.add("seed", seed, "sampler seed");
  }

  GpModel fit(bool selection) const {
    const Responses r = load_responses(responses, split);
    if (r.ids.empty()) throw ValidationError("no training responses (split '" + split + "') in " + responses);
    std::vector<Subject> subjects = select_subjects(load_embeddings(embeddings), r.ids, covariates);
    FitOptions opt;
    opt.mode = selection ? FitMode::Mcmc : parse_fit_mode(mode);
    opt.node_selection = selection;
    opt.mle.max_iters = mle_iters;
    opt.priors = {a_tau, b_tau, a_psi1, b_psi1, a_pi, b_pi};
    opt.priors.validate();
    opt.sampler.iterations = iters;
    opt.sampler.burn_in = burnin;
    opt.sampler.thin = thin;
    opt.sampler.proposal_sd = proposal_sd;
    opt.sampler.seed = seed;
    if (opt.mode == FitMode::Mcmc) opt.sampler.validate();
    return fit_model(std::move(subjects), r.y, opt);
  }
};

void describe_model(const GpModel& model, std::ostream& out) {
  const GpHyperparams& hp = model.mle.hyperparams;
  out << "trained on " << model.training.size() << " subjects; MLE " << to_string(model.mle.status) << " after "
      << model.mle.iterations << " iterations, objective " << format_double(model.mle.objective()) << '\n'
      << "  tau=" << hp.tau() << " psi1=" << hp.psi1() << " psi_u=" << hp.psi_u() << " psi_a=" << hp.psi_a()
      << " psi_z=" << hp.psi_z() << '\n';
  if (model.chains) {
    const Chains& c = *model.chains;
    out << "  " << c.draws() << " retained draws; acceptance psi_u " << c.accepted[0] << "/" << c.iterations
        << ", psi_a " << c.accepted[1] << "/" << c.iterations << ", psi_z " << c.accepted[2] << "/" << c.iterations
        << '\n';
  }
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void save_embedding(const Subject& subject, const fs::path& path) { write_text(path, dump(embedding_json(subject))); }

Subject load_embedding(const fs::path& path) {
  try {
    return subject_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<Subject> load_embeddings(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) throw ValidationError("no manifest.csv in " + dir.string());
  const Table t = read_csv(manifest);
  const int id_col = t.column("subject_id", true, manifest.string());
  const int status_col = t.column("status", true, manifest.string());
  std::vector<Subject> out;
  for (const auto& row : t.rows) {
    if (row[static_cast<std::size_t>(status_col)] != "ok") continue;
    const std::string& id = row[static_cast<std::size_t>(id_col)];
    Subject s = load_embedding(dir / (id + ".json"));
    if (s.id != id) throw ValidationError("embedding file for " + id + " names subject " + s.id);
    out.push_back(std::move(s));
  }
  return out;
}

void save_model(const GpModel& model, const fs::path& path) { write_text(path, dump(model_json(model))); }

GpModel load_model(const fs::path& path) {
  try {
    return model_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  json cfg;
  try {
    cfg = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (cfg.contains("run")) cfg = cfg["run"];
  if (cfg.contains("options")) cfg = cfg["options"];
  if (!cfg.is_object()) throw ValidationError(path + ": expected a JSON object of options");

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto token = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };

  std::vector<std::string> out = args;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_array()) {
      if (value.empty()) continue;
      out.push_back(flag);
      for (const auto& v : value) out.push_back(token(v));
    } else if (!value.is_null()) {
      out.push_back(flag);
      out.push_back(token(value));
    }
  }
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-scale Gaussian process regression on network-valued inputs", "lsgpr"};
  app.require_subcommand(1);
  std::vector<Command> commands;
  commands.reserve(8);
  auto command = [&](const std::string& name, const std::string& desc) -> Command& {
    Command c;
    c.app = app.add_subcommand(name, desc);
    c.opts = std::make_unique<Options>(c.app);
    commands.push_back(std::move(c));
    return commands.back();
  };

  // simulate
  SimConfig sim;
  std::string sim_out;
  {
    Command& c = command("simulate", "generate a synthetic dataset bundle");
    Options& o = *c.opts;
    o.add("nodes", sim.nodes, "nodes per network");
    o.add("d0", sim.d0, "true latent dimension");
    o.add("sparsity", sim.sparsity, "fraction of nodes driving the response, in (0,1)");
    o.add("n-train", sim.n_train, "training subjects");
    o.add("n-test", sim.n_test, "test subjects");
    o.add("seed", sim.seed, "random seed");
    o.add("out", sim_out, "output directory")->required();
    c.action = [&, &o = o] {
      const SimDataset data = generate_scenario1(sim);
      const fs::path dir(sim_out);
      make_dir(dir / "networks");
      const int total = data.size();
      std::string responses = csv_row({"subject_id", "y", "split"});
      double density = 0.0;
      for (int i = 0; i < total; ++i) {
        const std::string id = subject_name(i, total);
        const auto& net = data.networks[static_cast<std::size_t>(i)];
        save_adjacency_csv(network_from_edges(net), (dir / "networks" / (id + ".csv")).string());
        responses += csv_row({id, format_double(data.y[i]), data.is_train[static_cast<std::size_t>(i)] ? "train" : "test"});
        density += net.values().mean() / total;
      }
      write_text(dir / "responses.csv", responses);
      json meta = o.resolved("simulate");
      std::vector<int> active;
      for (int k : data.active_nodes) active.push_back(k + 1);
      meta["seed"] = sim.seed;
      meta["subjects"] = total;
      meta["active_nodes"] = active;
      meta["y_mean"] = data.y_mean;
      meta["y_sd"] = data.y_sd;
      write_text(dir / "meta.json", dump(meta));
      out << "simulated " << total << " subjects (" << sim.n_train << " train / " << sim.n_test << " test), p="
          << sim.nodes << ", mean edge density " << std::fixed << std::setprecision(4) << density
          << std::defaultfloat << ", |C|=" << active.size() << " active nodes\n";
      return kOk;
    };
  }

  // embed
  EmConfig em;
  std::string embed_in, embed_out, format = "adjacency", prior_mode = "single-copy";
  std::optional<int> edge_list_nodes;
  int embed_nodes = 0;
  std::uint64_t embed_seed = 1;
  bool write_u_csv = false;
  {
    Command& c = command("embed", "fit per-subject latent-scale embeddings");
    Options& o = *c.opts;
    o.add("in", embed_in, "bundle directory or directory of network CSVs")->required();
    o.add("format", format, "adjacency or edge-list");
    o.add("nodes", embed_nodes, "node count (edge-list input)");
    o.add("dim", em.dim, "latent dimension d (>= 2)");
    o.add("sigma-u2", em.sigma_u_sq, "prior variance of latent scales");
    o.add("pin", em.pin, "value of the pinned first coordinate");
    o.add("iters", em.max_iters, "maximum EM iterations");
    o.add("tol", em.rel_tol, "relative log-posterior tolerance");
    o.add("prior-mode", prior_mode, "single-copy or verbatim");
    o.add("seed", embed_seed, "seed for initialization padding");
    o.flag("write-csv", write_u_csv, "also write U as <id>.U.csv");
    o.add("out", embed_out, "output directory")->required();
    c.action = [&, &o = o] {
      em.prior_mode = parse_prior_term_mode(prior_mode);
      em.validate();
      const NetworkFormat fmt = parse_network_format(format);
      if (embed_nodes > 0) edge_list_nodes = embed_nodes;
      fs::path src(embed_in);
      if (fs::is_directory(src / "networks")) src /= "networks";
      if (!fs::is_directory(src)) throw ValidationError("input directory " + src.string() + " does not exist");
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(src))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ValidationError("no network CSV files in " + src.string());

      const fs::path dir(embed_out);
      make_dir(dir);
      std::string manifest = csv_row({"subject_id", "iterations", "converged", "log_posterior", "status"});
      int failed = 0;
      for (std::size_t i = 0; i < files.size(); ++i) {
        const std::string id = files[i].stem().string();
        try {
          const EdgeSet edges = edge_vector(load_network(files[i].string(), fmt, edge_list_nodes));
          Rng rng(embedding_seed(embed_seed, static_cast<int>(i)));
          const EmResult res = embed_subject(edges, em, rng);
          Subject s{id, res.embedding, {}};
          json j = embedding_json(s);
          j["iterations"] = res.iterations;
          j["converged"] = res.converged;
          j["log_posterior"] = res.trace.back();
          j["run"] = o.resolved("embed");
          write_text(dir / (id + ".json"), dump(j));
          if (write_u_csv) {
            std::string u;
            for (Eigen::Index k = 0; k < s.embedding.latent.rows(); ++k) {
              std::vector<std::string> row;
              for (Eigen::Index d = 0; d < s.embedding.latent.cols(); ++d)
                row.push_back(format_double(s.embedding.latent(k, d)));
              u += csv_row(row);
            }
            write_text(dir / (id + ".U.csv"), u);
          }
          manifest += csv_row({id, std::to_string(res.iterations), res.converged ? "1" : "0",
                               format_double(res.trace.back()), "ok"});
          if (!res.converged) err << id << ": EM stopped at the iteration limit without converging\n";
        } catch (const NumericalError& e) {
          ++failed;
          err << id << ": " << e.what() << '\n';
          manifest += csv_row({id, "0", "0", "nan", "failed"});
        }
      }
      write_text(dir / "manifest.csv", manifest);
      write_text(dir / "run.json", dump(o.resolved("embed")));
      out << "embedded " << files.size() - static_cast<std::size_t>(failed) << " of " << files.size()
          << " subjects with d=" << em.dim << '\n';
      return failed ? kNumerical : kOk;
    };
  }

  // fit
  FitArgs fit_args;
  {
    Command& c = command("fit", "fit the stage-2 Gaussian process model");
    Options& o = *c.opts;
    fit_args.bind(o, false);
    o.add("out", fit_args.out, "model JSON path")->required();
    o.add("chain", fit_args.chain, "chain CSV path (mcmc; default <out>.chain.csv)");
    c.action = [&, &o = o] {
      const bool selection = fit_args.node_selection;
      const GpModel model = fit_args.fit(selection);
      json j = model_json(model);
      j["run"] = o.resolved("fit");
      write_text(fit_args.out, dump(j));
      if (model.chains) {
        const fs::path chain = fit_args.chain.empty() ? sidecar(fit_args.out, ".chain.csv") : fs::path(fit_args.chain);
        write_text(chain, chain_csv(*model.chains));
      }
      describe_model(model, out);
      return kOk;
    };
  }

  // predict
  std::string model_path, pred_embeddings, pred_responses, pred_covariates, pred_split = "test", pred_out;
  std::uint64_t pred_seed = 1;
  {
    Command& c = command("predict", "predict responses for new subjects");
    Options& o = *c.opts;
    o.add("model", model_path, "model JSON from fit")->required();
    o.add("embeddings", pred_embeddings, "embedding directory")->required();
    o.add("responses", pred_responses, "optional CSV selecting subjects and supplying truth");
    o.add("split", pred_split, "split label to predict ('all' for every row)");
    o.add("covariates", pred_covariates, "optional covariate CSV");
    o.add("seed", pred_seed, "seed for predictive draws (mcmc)");
    o.add("out", pred_out, "predictions CSV")->required();
    c.action = [&, &o = o] {
      const GpModel model = load_model(model_path);
      const std::vector<Subject> all = load_embeddings(pred_embeddings);
      std::vector<std::string> ids;
      Eigen::VectorXd truth;
      const bool have_truth = !pred_responses.empty();
      if (have_truth) {
        const Responses r = load_responses(pred_responses, pred_split);
        ids = r.ids;
        truth = r.y;
      } else {
        for (const auto& s : all) ids.push_back(s.id);
      }
      const std::vector<Subject> test = select_subjects(all, ids, pred_covariates);
      Rng rng(pred_seed);
      const Prediction pred = predict(model, test, rng);
      std::string csv = csv_row({"subject_id", "mean", "lower95", "upper95"});
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto q = static_cast<Eigen::Index>(i);
        csv += csv_row({test[i].id, format_double(pred.mean[q]), format_double(pred.lower[q]),
                        format_double(pred.upper[q])});
      }
      write_text(pred_out, csv);
      json run = o.resolved("predict");
      run["model_training_hash"] = model_json(model)["training_hash"];
      if (have_truth) {
        const EvalReport report = evaluate(pred.mean, pred.lower, pred.upper, truth);
        run["report"] = report_json(report);
        write_text(sidecar(pred_out, ".report.json"), dump(json{{"report", report_json(report)}, {"run", o.resolved("predict")}}));
        write_text(sidecar(pred_out, ".report.csv"), report_csv(report));
        out << "predicted " << test.size() << " subjects: mse " << format_double(report.mse) << ", coverage "
            << format_double(report.coverage) << ", mean width " << format_double(report.width) << '\n';
      } else {
        out << "predicted " << test.size() << " subjects\n";
      }
      write_text(sidecar(pred_out, ".run.json"), dump(run));
      return kOk;
    };
  }

  // select
  FitArgs select_args;
  select_args.node_selection = true;
  std::string select_out;
  {
    Command& c = command("select", "node selection: posterior inclusion probabilities per node");
    Options& o = *c.opts;
    select_args.bind(o, true);
    o.add("out", select_out, "output directory")->required();
    c.action = [&, &o = o] {
      const GpModel model = select_args.fit(true);
      const fs::path dir(select_out);
      make_dir(dir);
      json j = model_json(model);
      j["run"] = o.resolved("select");
      write_text(dir / "model.json", dump(j));
      write_text(dir / "chain.csv", chain_csv(*model.chains));
      const Eigen::VectorXd incl = model.chains->inclusion_probabilities();
      std::string csv = csv_row({"node", "inclusion_probability"});
      for (Eigen::Index k = 0; k < incl.size(); ++k) csv += csv_row({std::to_string(k + 1), format_double(incl[k])});
      write_text(dir / "inclusion.csv", csv);
      write_text(dir / "run.json", dump(o.resolved("select")));
      describe_model(model, out);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(incl.size()));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return incl[a] > incl[b]; });
      out << "  highest inclusion:";
      for (std::size_t k = 0; k < std::min<std::size_t>(5, order.size()); ++k)
        out << " node " << order[k] + 1 << " (" << incl[order[k]] << ")";
      out << '\n';
      return kOk;
    };
  }

  // benchmark
  BenchmarkSpec spec;
  std::vector<int> bench_d0{5};
  std::vector<double> bench_sparsity{0.5};
  std::vector<std::string> bench_methods{"ls-gpr1", "ls-gpr2", "ridge", "pca-gpr"};
  std::string bench_out;
  spec.em.dim = 10;
  {
    Command& c = command("benchmark", "run the simulation grid and compare methods");
    Options& o = *c.opts;
    o.add("nodes", spec.sim.nodes, "nodes per network");
    o.add("d0", bench_d0, "true latent dimensions (grid)");
    o.add("sparsity", bench_sparsity, "response sparsities (grid)");
    o.add("dim", spec.em.dim, "fitted latent dimension");
    o.add("n-train", spec.sim.n_train, "training subjects per replicate");
    o.add("n-test", spec.sim.n_test, "test subjects per replicate");
    o.add("replicates", spec.replicates, "replicates per cell");
    o.add("methods", bench_methods, "subset of ls-gpr1 ls-gpr2 ridge pca-gpr");
    o.add("iters", spec.sampler.iterations, "sampler iterations");
    o.add("burnin", spec.sampler.burn_in, "sampler burn-in");
    o.add("seed", spec.seed, "master seed");
    o.add("out", bench_out, "output directory")->required();
    c.action = [&, &o = o] {
      spec.cells = BenchmarkSpec::grid(bench_d0, bench_sparsity);
      spec.methods.clear();
      for (const auto& m : bench_methods) spec.methods.push_back(parse_method(m));
      spec.validate();
      const fs::path dir(bench_out);
      make_dir(dir);
      std::vector<BenchmarkRow> rows;
      for (int cell = 0; cell < static_cast<int>(spec.cells.size()); ++cell)
        for (int r = 0; r < spec.replicates; ++r) {
          auto part = run_replicate(spec, cell, r);
          for (const auto& row : part)
            if (!row.ok) err << "cell " << cell << " replicate " << r << " " << to_string(row.method) << ": " << row.message << '\n';
          rows.insert(rows.end(), part.begin(), part.end());
        }
      std::string csv = csv_row({"cell", "d0", "sparsity", "replicate", "seed", "method", "status", "mse", "coverage", "width"});
      int failed = 0;
      for (const auto& r : rows) {
        failed += r.ok ? 0 : 1;
        csv += csv_row({std::to_string(r.cell), std::to_string(r.d0), format_double(r.sparsity), std::to_string(r.replicate),
                        std::to_string(r.seed), to_string(r.method), r.ok ? "ok" : "failed",
                        r.ok ? format_double(r.report.mse) : "nan", r.ok ? format_double(r.report.coverage) : "nan",
                        r.ok ? format_double(r.report.width) : "nan"});
      }
      write_text(dir / "replicates.csv", csv);
      std::string summary = csv_row({"cell", "d0", "sparsity", "method", "completed", "failed", "mse_mean", "mse_sd",
                                     "coverage_mean", "coverage_sd", "width_mean", "width_sd"});
      out << std::left << std::setw(6) << "cell" << std::setw(10) << "method" << std::setw(12) << "mse"
          << std::setw(12) << "coverage" << "width\n";
      for (const auto& s : summarize(rows)) {
        summary += csv_row({std::to_string(s.cell), std::to_string(s.d0), format_double(s.sparsity), to_string(s.method),
                            std::to_string(s.completed), std::to_string(s.failed), format_double(s.mse_mean),
                            format_double(s.mse_sd), format_double(s.coverage_mean), format_double(s.coverage_sd),
                            format_double(s.width_mean), format_double(s.width_sd)});
        out << std::setw(6) << s.cell << std::setw(10) << to_string(s.method) << std::setw(12)
            << std::setprecision(4) << s.mse_mean << std::setw(12) << s.coverage_mean << s.width_mean << '\n';
      }
      write_text(dir / "summary.csv", summary);
      write_text(dir / "run.json", dump(o.resolved("benchmark")));
      if (failed) {
        err << failed << " of " << rows.size() << " method runs failed\n";
        return kPartial;
      }
      return kOk;
    };
  }

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      return app.exit(e, out, err) == 0 ? kOk : kValidation;
    }
    for (auto& c : commands)
      if (c.app->parsed()) return c.action();
    return kValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
}

}  // namespace lsgpr::cli
