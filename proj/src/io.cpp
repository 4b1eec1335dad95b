#include "fpca/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <system_error>
#include <vector>

#include <json.hpp>

namespace fpca {

namespace {

using json = nlohmann::json;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t") == std::string::npos; }

template <class T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataFormatError(std::string("field '") + key + "' is missing or has the wrong type");
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataFormatError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::random_device rd;
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

Dataset parse_curves_csv(const std::string& text, Regime regime) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataFormatError("empty curve file", 1);
  const auto header = split_line(lines[0]);
  if (header != std::vector<std::string>{"curve_id", "t", "y"} && header != std::vector<std::string>{"id", "t", "y"})
    throw DataFormatError("row 1: expected header 'curve_id,t,y'", 1);
  std::map<std::string, std::size_t> index;
  std::vector<CurveData> curves;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const long row = static_cast<long>(i) + 1;
    if (blank(lines[i])) continue;
    const auto cells = split_line(lines[i]);
    if (cells.size() != 3)
      throw DataFormatError("row " + std::to_string(row) + ": expected 3 fields, found " + std::to_string(cells.size()),
                            row);
    if (cells[0].empty()) throw DataFormatError("row " + std::to_string(row) + ": empty id", row);
    double t = 0.0, y = 0.0;
    if (!parse_number(cells[1], t))
      throw DataFormatError("row " + std::to_string(row) + ": non-numeric t '" + cells[1] + "'", row);
    if (!parse_number(cells[2], y))
      throw DataFormatError("row " + std::to_string(row) + ": non-numeric y '" + cells[2] + "'", row);
    if (t < 0.0 || t > 1.0) throw DataFormatError("row " + std::to_string(row) + ": t outside [0,1]", row);
    auto [it, inserted] = index.emplace(cells[0], curves.size());
    if (inserted) curves.push_back(CurveData{cells[0], {}, {}});
    curves[it->second].times.push_back(t);
    curves[it->second].values.push_back(y);
  }
  if (curves.empty()) throw DataFormatError("no observations in curve file");
  return Dataset::functional(regime, std::move(curves));
}

Dataset read_curves_csv(const std::filesystem::path& path, Regime regime) {
  return parse_curves_csv(read_file(path), regime);
}

std::string curves_to_csv(const Dataset& data) {
  std::string out = "curve_id,t,y\n";
  for (const auto& c : data.curves)
    for (std::size_t j = 0; j < c.times.size(); ++j)
      out += c.id + "," + format_double(c.times[j]) + "," + format_double(c.values[j]) + "\n";
  return out;
}

Eigen::MatrixXd parse_matrix_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const long row = static_cast<long>(i) + 1;
    std::vector<double> vals;
    for (const auto& cell : split_line(lines[i])) {
      double v = 0.0;
      if (!parse_number(cell, v))
        throw DataFormatError("row " + std::to_string(row) + ": non-numeric entry '" + cell + "'", row);
      vals.push_back(v);
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw DataFormatError("row " + std::to_string(row) + ": expected " + std::to_string(rows.front().size()) +
                                " entries",
                            row);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataFormatError("empty matrix file");
  Eigen::MatrixXd A(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) A(i, j) = rows[i][j];
  return A;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(read_file(path)); }

std::string matrix_to_csv(const Eigen::MatrixXd& A) {
  std::string out;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (j > 0) out += ",";
      out += format_double(A(i, j));
    }
    out += "\n";
  }
  return out;
}

std::string model_to_json(const ModelParams& params) {
  json j;
  j["M"] = params.basis_dim();
  j["r"] = params.rank();
  j["sigma2"] = params.sigma2;
  j["s"] = params.s;
  j["lambda"] = std::vector<double>(params.lambda.data(), params.lambda.data() + params.lambda.size());
  json B = json::array();
  for (int i = 0; i < params.basis_dim(); ++i) {
    std::vector<double> row(params.rank());
    for (int k = 0; k < params.rank(); ++k) row[k] = params.B.matrix()(i, k);
    B.push_back(row);
  }
  j["B"] = B;
  return j.dump(2) + "\n";
}

ModelParams model_from_json(const std::string& text) {
  const json j = parse_json(text);
  const int M = get_field<int>(j, "M");
  const int r = get_field<int>(j, "r");
  const auto lambda = get_field<std::vector<double>>(j, "lambda");
  const auto rows = get_field<std::vector<std::vector<double>>>(j, "B");
  if (M < 1 || r < 1 || r > M) throw DataFormatError("fields 'M'/'r' must satisfy 1 <= r <= M");
  if (static_cast<int>(lambda.size()) != r) throw DataFormatError("field 'lambda' must have r entries");
  if (static_cast<int>(rows.size()) != M) throw DataFormatError("field 'B' must have M rows");
  Eigen::MatrixXd B(M, r);
  for (int i = 0; i < M; ++i) {
    if (static_cast<int>(rows[i].size()) != r)
      throw DataFormatError("field 'B' row " + std::to_string(i + 1) + " must have r entries");
    for (int k = 0; k < r; ++k) B(i, k) = rows[i][k];
  }
  ModelParams p{[&] {
                  try {
                    return StiefelPoint(B);
                  } catch (const std::invalid_argument& e) {
                    throw DataFormatError(std::string("field 'B': ") + e.what());
                  }
                }(),
                Eigen::Map<const Eigen::VectorXd>(lambda.data(), r), get_field<double>(j, "sigma2"),
                j.contains("s") ? get_field<double>(j, "s") : 1.0};
  try {
    p.validate(false);
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(e.what());
  }
  return p;
}

ModelParams read_model_json(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

std::filesystem::path sidecar_path(const std::filesystem::path& cov_path) {
  std::filesystem::path p = cov_path;
  p.replace_extension(".json");
  return p;
}

long read_sidecar_n(const std::filesystem::path& path) {
  const json j = parse_json(read_file(path));
  const long n = get_field<long>(j, "n");
  if (n < 1) throw DataFormatError("field 'n' must be positive");
  return n;
}

std::string sidecar_json(long n) { return json{{"n", n}}.dump() + "\n"; }

ExperimentConfig config_from_json(const std::string& text) {
  const json j = parse_json(text);
  if (!j.is_object()) throw DataFormatError("config must be a JSON object");
  static const std::set<std::string> known = {
      "regime", "n_grid", "M_schedule", "schedule_c", "M", "min_M", "m_min", "m_max", "m", "replicates",
      "base_seed", "family", "reference_M", "eigenvalues", "r", "sigma2", "s", "max_iter", "grad_tol",
      "threads", "dry_run", "init", "restarts"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw DataFormatError("unknown config field '" + key + "'");

  ExperimentConfig c;
  try {
    if (j.contains("regime")) c.regime = parse_regime(get_field<std::string>(j, "regime"));
    if (j.contains("family")) c.family = parse_family(get_field<std::string>(j, "family"));
    if (j.contains("init")) c.fit.init = parse_init(get_field<std::string>(j, "init"));
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(e.what());
  }
  c.n_grid = get_field<std::vector<long>>(j, "n_grid");
  if (j.contains("M_schedule")) {
    const auto s = get_field<std::string>(j, "M_schedule");
    if (s == "fixed") c.schedule = MSchedule::Fixed;
    else if (s == "corollary1") c.schedule = MSchedule::Corollary1;
    else throw DataFormatError("field 'M_schedule' must be 'fixed' or 'corollary1'");
  }
  if (j.contains("schedule_c")) c.schedule_c = get_field<double>(j, "schedule_c");
  if (j.contains("M")) c.fixed_M = get_field<int>(j, "M");
  if (j.contains("min_M")) c.min_M = get_field<int>(j, "min_M");
  if (j.contains("m")) c.m.m_min = c.m.m_max = get_field<int>(j, "m");
  if (j.contains("m_min")) c.m.m_min = get_field<int>(j, "m_min");
  if (j.contains("m_max")) c.m.m_max = get_field<int>(j, "m_max");
  if (j.contains("replicates")) c.replicates = get_field<int>(j, "replicates");
  if (j.contains("base_seed")) c.base_seed = get_field<std::uint64_t>(j, "base_seed");
  if (j.contains("reference_M")) c.reference_M = get_field<int>(j, "reference_M");
  const auto ev = get_field<std::vector<double>>(j, "eigenvalues");
  c.eigenvalues = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
  c.r = j.contains("r") ? get_field<int>(j, "r") : static_cast<int>(ev.size());
  if (j.contains("sigma2")) c.sigma2 = get_field<double>(j, "sigma2");
  if (j.contains("s")) c.s = get_field<double>(j, "s");
  if (j.contains("max_iter")) c.fit.max_iter = get_field<int>(j, "max_iter");
  if (j.contains("grad_tol")) c.fit.grad_tol = get_field<double>(j, "grad_tol");
  if (j.contains("restarts")) c.fit.restarts = get_field<int>(j, "restarts");
  if (j.contains("threads")) c.threads = get_field<int>(j, "threads");
  if (j.contains("dry_run")) c.dry_run = get_field<bool>(j, "dry_run");
  c.fit.seed = c.base_seed;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig read_config_json(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

}  // namespace fpca
