#include "gcate/io.hpp"

#include "gcate/stats.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace gcate {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  const std::string t = trim(s);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') return t.substr(1, t.size() - 2);
  return t;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_number(const std::string& text, double& value) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  value = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::string format_number(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json encode_matrix(const MatrixXd& M) {
  json data = json::array();
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j) data.push_back(number(M(i, j)));
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

MatrixXd decode(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const json& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) throw ParseError("matrix data length mismatch");
  MatrixXd M(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) M(i, c) = number_from(data[static_cast<std::size_t>(i * cols + c)]);
  return M;
}

json encode(const std::vector<double>& v) {
  json out = json::array();
  for (const double x : v) out.push_back(number(x));
  return out;
}

json encode_vector(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

std::vector<double> decode_vector(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number_from(x));
  return out;
}

template <typename T>
json optional_number(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

json metrics_json(const MetricsReport& m) {
  return {{"type1", number(m.type1)},         {"fdp", number(m.fdp)},
          {"power", number(m.power)},         {"precision", number(m.precision)},
          {"alpha", m.alpha},                 {"fdr_cut", m.fdr_cut},
          {"n_discoveries", m.n_discoveries}};
}

}  // namespace

NamedMatrix read_csv_matrix(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  NamedMatrix out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError(path + ": empty file");
  for (const auto& cell : split(trim(line), ',')) out.names.push_back(unquote(cell));
  const std::size_t cols = out.names.size();
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != cols)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                       " fields, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cols; ++c) {
      double v;
      if (!parse_number(cells[c], v))
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value '" +
                         trim(cells[c]) + "' in column " + std::to_string(c + 1));
      values.push_back(v);
    }
    ++rows;
  }
  out.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c)
      out.values(static_cast<Index>(i), static_cast<Index>(c)) = values[i * cols + c];
  return out;
}

void write_csv_matrix(const std::string& path, const Eigen::Ref<const MatrixXd>& M,
                      const std::vector<std::string>& names) {
  if (static_cast<Index>(names.size()) != M.cols())
    throw InvalidInput("write_csv_matrix: one name per column required");
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_number(M(i, c), 17);
    out << '\n';
  }
}

NamedMatrix read_counts(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("%%MatrixMarket", 0) != 0) return read_csv_matrix(path);

  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || symmetry != "general" ||
      (field != "real" && field != "integer" && field != "pattern"))
    throw ParseError(path + ":1: only general real/integer/pattern coordinate MatrixMarket is supported");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty() && line[0] != '%') break;
  }
  long long rows = 0, cols = 0, nnz = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed size line");
  }
  NamedMatrix out;
  out.values = MatrixXd::Zero(rows, cols);
  long long seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    long long i = 0, j = 0;
    double v = 1.0;
    if (!(ss >> i >> j) || (field != "pattern" && !(ss >> v)))
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed entry");
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError(path + ":" + std::to_string(line_no) + ": index out of range");
    out.values(i - 1, j - 1) = v;
    ++seen;
  }
  if (seen != nnz)
    throw ParseError(path + ": expected " + std::to_string(nnz) + " entries, found " + std::to_string(seen));
  for (long long j = 0; j < cols; ++j) out.names.push_back("gene" + std::to_string(j + 1));
  return out;
}

void write_matrix_market(const std::string& path, const Eigen::Ref<const MatrixXd>& M) {
  std::ofstream out = open_out(path);
  Index nnz = 0;
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i) nnz += M(i, j) != 0.0;
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << M.rows() << ' ' << M.cols() << ' ' << nnz << '\n';
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i)
      if (M(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << format_number(M(i, j), 17) << '\n';
}

GlmDataset read_dataset(const std::string& counts_path, const std::string& design_path) {
  NamedMatrix counts = read_counts(counts_path);
  NamedMatrix design = read_csv_matrix(design_path);
  if (counts.values.rows() != design.values.rows())
    throw ParseError("counts have " + std::to_string(counts.values.rows()) + " samples but the design has " +
                     std::to_string(design.values.rows()));
  GlmDataset data;
  data.Y = std::move(counts.values);
  data.X = std::move(design.values);
  data.gene_names = std::move(counts.names);
  data.covariate_names = std::move(design.names);
  return data;
}

void write_fit_json(const std::string& path, const FitRecord& rec) {
  const FactorModelFit& fit = rec.fit;
  const ExponentialFamily& fam = fit.family.base;
  const auto& dg = fit.diagnostics;
  json j;
  j["schema"] = kFitSchema;
  j["family"] = {{"kind", std::string(to_string(fam.kind))},
                 {"aux", fam.aux},
                 {"link", fam.link == Link::Log ? "log" : "canonical"},
                 {"bound", fam.bound}};
  j["phi_per_gene"] = fit.family.aux.size() > 0 ? encode_vector(fit.family.aux) : json(nullptr);
  j["rank"] = fit.r;
  j["lambda"] = fit.lambda;
  j["inputs"] = {{"counts", rec.counts_path}, {"design", rec.design_path}};
  j["options"] = {{"nb_link", rec.nb_link},
                  {"phi", optional_number(rec.phi)},
                  {"lambda", optional_number(rec.lambda)},
                  {"c_prime", optional_number(rec.c_prime)},
                  {"max_iters", rec.max_iters},
                  {"tol", rec.tol},
                  {"seed", rec.seed}};
  j["gene_names"] = rec.gene_names;
  j["covariate_names"] = rec.covariate_names;
  j["F_hat"] = encode_matrix(fit.F_hat);
  j["W0_hat"] = encode_matrix(fit.W0_hat);
  j["Gamma0_hat"] = encode_matrix(fit.Gamma0_hat);
  j["W_hat"] = encode_matrix(fit.W_hat);
  j["Gamma_hat"] = encode_matrix(fit.Gamma_hat);
  j["B_hat"] = encode_matrix(fit.B_hat);
  j["Z_hat"] = encode_matrix(fit.Z_hat);
  j["Theta_hat"] = encode_matrix(fit.Theta_hat);
  j["diagnostics"] = {{"stage1_iterations", dg.stage1_iterations},
                      {"stage3_iterations", dg.stage3_iterations},
                      {"stage1_objective", number(dg.stage1_objective)},
                      {"stage3_objective", number(dg.stage3_objective)},
                      {"stage1_converged", dg.stage1_converged},
                      {"stage3_converged", dg.stage3_converged},
                      {"stage1_trace", encode(dg.stage1_trace)},
                      {"stage3_trace", encode(dg.stage3_trace)},
                      {"warnings", dg.warnings}};
  write_json(path, j);
}

FitRecord read_fit_json(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  try {
    if (!j.contains("schema") || j.at("schema").get<int>() != kFitSchema)
      throw ParseError(path + ": unsupported fit schema (expected " + std::to_string(kFitSchema) + ")");
    FitRecord rec;
    FactorModelFit& fit = rec.fit;
    const json& f = j.at("family");
    ExponentialFamily fam;
    fam.kind = family_kind_from_string(f.at("kind").get<std::string>());
    fam.aux = f.at("aux").get<double>();
    fam.link = f.at("link").get<std::string>() == "log" ? Link::Log : Link::Canonical;
    fam.bound = f.at("bound").get<double>();
    fit.family.base = fam;
    if (!j.at("phi_per_gene").is_null()) {
      const auto phi = decode_vector(j.at("phi_per_gene"));
      fit.family.aux = Eigen::Map<const VectorXd>(phi.data(), static_cast<Index>(phi.size()));
    }
    fit.r = j.at("rank").get<int>();
    fit.lambda = j.at("lambda").get<double>();
    rec.counts_path = j.at("inputs").at("counts").get<std::string>();
    rec.design_path = j.at("inputs").at("design").get<std::string>();
    const json& o = j.at("options");
    rec.nb_link = o.at("nb_link").get<std::string>();
    rec.phi = optional_from(o, "phi");
    rec.lambda = optional_from(o, "lambda");
    rec.c_prime = optional_from(o, "c_prime");
    rec.max_iters = o.at("max_iters").get<int>();
    rec.tol = o.at("tol").get<double>();
    rec.seed = o.at("seed").get<std::uint64_t>();
    rec.gene_names = j.at("gene_names").get<std::vector<std::string>>();
    rec.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    fit.F_hat = decode(j.at("F_hat"));
    fit.W0_hat = decode(j.at("W0_hat"));
    fit.Gamma0_hat = decode(j.at("Gamma0_hat"));
    fit.W_hat = decode(j.at("W_hat"));
    fit.Gamma_hat = decode(j.at("Gamma_hat"));
    fit.B_hat = decode(j.at("B_hat"));
    fit.Z_hat = decode(j.at("Z_hat"));
    fit.Theta_hat = decode(j.at("Theta_hat"));
    const json& dg = j.at("diagnostics");
    fit.diagnostics.stage1_iterations = dg.at("stage1_iterations").get<int>();
    fit.diagnostics.stage3_iterations = dg.at("stage3_iterations").get<int>();
    fit.diagnostics.stage1_objective = number_from(dg.at("stage1_objective"));
    fit.diagnostics.stage3_objective = number_from(dg.at("stage3_objective"));
    fit.diagnostics.stage1_converged = dg.at("stage1_converged").get<bool>();
    fit.diagnostics.stage3_converged = dg.at("stage3_converged").get<bool>();
    fit.diagnostics.stage1_trace = decode_vector(dg.at("stage1_trace"));
    fit.diagnostics.stage3_trace = decode_vector(dg.at("stage3_trace"));
    fit.diagnostics.warnings = dg.at("warnings").get<std::vector<std::string>>();
    return rec;
  } catch (const json::exception& e) {
    throw ParseError(path + ": malformed fit artifact: " + e.what());
  }
}

void write_results(const std::string& path, const InferenceResult& res, double alpha, double fdr) {
  const Index p = res.p();
  std::ofstream out = open_out(path);
  out << "gene\tbeta_hat\tbeta_debiased\tse\tz\tpvalue\tqvalue\treject_alpha\treject_fdr\n";
  const VectorXd se = res.standard_error();
  for (Index j = 0; j < p; ++j) {
    const std::string name = static_cast<Index>(res.gene_names.size()) == p
                                 ? res.gene_names[static_cast<std::size_t>(j)]
                                 : "gene" + std::to_string(j + 1);
    out << name << '\t' << format_number(res.b_hat(j), 10) << '\t' << format_number(res.b_debiased(j), 10)
        << '\t' << format_number(se(j), 10) << '\t' << format_number(res.z(j), 10) << '\t'
        << format_number(res.pvalue(j), 10) << '\t' << format_number(res.qvalue(j), 10) << '\t'
        << (res.pvalue(j) < alpha ? 1 : 0) << '\t' << (res.qvalue(j) <= fdr ? 1 : 0) << '\n';
  }
}

ResultsTable read_results(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (trim(line) != "gene\tbeta_hat\tbeta_debiased\tse\tz\tpvalue\tqvalue\treject_alpha\treject_fdr")
    throw ParseError(path + ":1: unexpected results header");
  ResultsTable t;
  std::vector<std::array<double, 6>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), '\t');
    if (cells.size() != 9) throw ParseError(path + ":" + std::to_string(line_no) + ": expected 9 fields");
    t.genes.push_back(cells[0]);
    std::array<double, 6> row{};
    for (std::size_t c = 0; c < 6; ++c)
      if (!parse_number(cells[c + 1], row[c]))
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value");
    rows.push_back(row);
    t.reject_alpha.push_back(trim(cells[7]) == "1");
    t.reject_fdr.push_back(trim(cells[8]) == "1");
  }
  t.values.resize(static_cast<Index>(rows.size()), 6);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < 6; ++c) t.values(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
  return t;
}

void write_jic_json(const std::string& path, const JicTrace& trace) {
  json j;
  j["c_jic"] = trace.c_jic;
  j["selected_r"] = trace.selected_r;
  j["r_values"] = trace.r_values;
  j["deviance"] = encode(trace.deviance);
  j["penalty"] = encode(trace.penalty);
  j["jic"] = encode(trace.jic);
  j["delta_deviance"] = encode(trace.delta_deviance);
  j["delta_penalty"] = encode(trace.delta_penalty);
  j["skipped"] = trace.skipped;
  j["messages"] = trace.messages;
  write_json(path, j);
}

void write_test_trace_json(const std::string& path, const InferenceResult& res,
                           const LambdaSelection* selection, double alpha) {
  json j;
  j["lambda_n"] = res.lambda_n;
  j["coef_index"] = res.coef_index + 1;
  if (selection) {
    json scree = json::array();
    for (const auto& e : selection->trace)
      scree.push_back({{"c2", e.c2},
                       {"lambda_n", e.lambda_n},
                       {"median_z", number(e.median_z)},
                       {"mad_z", number(e.mad_z)}});
    j["c2_selected"] = selection->c2;
    j["threshold_met"] = selection->feasible;
    j["scree"] = std::move(scree);
  }
  const double width = 0.25;
  const int bins = 64;
  std::vector<long long> counts(bins, 0);
  long long below = 0, above = 0;
  for (Index k = 0; k < res.z.size(); ++k) {
    const double z = res.z(k);
    if (std::isnan(z)) continue;
    const double pos = std::floor((z + 0.5 * width * bins) / width);
    if (pos < 0) ++below;
    else if (pos >= bins) ++above;
    else ++counts[static_cast<std::size_t>(pos)];
  }
  j["z_histogram"] = {{"lower", -0.5 * width * bins}, {"width", width}, {"counts", counts},
                      {"below", below}, {"above", above}};
  j["z_median"] = number(median(res.z));
  j["z_mad"] = number(normalized_mad(res.z));
  j["bonferroni_cutoff"] = res.p() > 0 ? json(normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(res.p())))) : json(nullptr);
  j["warnings"] = res.warnings;
  write_json(path, j);
}

void write_metrics_json(const std::string& path, const SimulationRequest& req,
                        const SimulationSummary& summary) {
  const SimulationScenario& sc = req.scenario;
  json j;
  j["scenario"] = {{"kind", sc.kind == ScenarioKind::PoissonBulk ? "poisson-bulk" : "negbin-sc"},
                   {"n", sc.n},
                   {"p", sc.p},
                   {"rank", sc.r},
                   {"seed", sc.seed},
                   {"signal_prob", sc.signal_prob},
                   {"signal_magnitude", sc.signal_magnitude}};
  j["replicates"] = req.replicates;
  j["alpha"] = req.alpha;
  j["fdr"] = req.fdr;
  j["split_ratio"] = req.split.ratio;
  json methods = json::object();
  for (const auto& m : summary.methods) {
    json reps = json::array();
    for (const auto& r : m.per_replicate) reps.push_back(metrics_json(r));
    methods[m.method] = {{"median", metrics_json(m.median)}, {"replicates", std::move(reps)}};
  }
  j["methods"] = std::move(methods);
  if (!summary.selected_ranks.empty()) j["selected_ranks"] = summary.selected_ranks;
  j["warnings"] = summary.warnings;
  write_json(path, j);
}

}  // namespace gcate
