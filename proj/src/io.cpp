#include "egan/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace egan {

using Json = nlohmann::ordered_json;

std::string metadata_line(const Metadata& meta) {
  Json obj = Json::object();
  for (const auto& [k, v] : meta) obj[k] = v;
  return std::string("# egan ") + kToolVersion + " " + obj.dump();
}

std::string format_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  // ERANGE also flags subnormal results, which are fine; only overflow is not.
  if (end == s.c_str() || *end != '\0' || (errno == ERANGE && std::isinf(v))) {
    throw IoError("cannot parse number '" + s + "'");
  }
  return v;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string dataset_csv(const Matrix& points, const Metadata& meta) {
  std::string out = metadata_line(meta) + "\n";
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < points.cols(); ++k) header.push_back("y" + std::to_string(k));
  out += join_csv(header) + "\n";
  std::vector<std::string> row(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) row[k] = format_decimal(points(i, k));
    out += join_csv(row) + "\n";
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const Matrix& points, const Metadata& meta) {
  write_file_atomic(path, dataset_csv(points, meta));
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Matrix load_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t cols = 0;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, ',');
    if (!have_header) {
      cols = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != cols) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(cols) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> r;
    for (const auto& f : fields) r.push_back(parse_double(f));
    rows.push_back(std::move(r));
  }
  if (!have_header) throw IoError(path.string() + ": missing header line");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = rows[i][k];
  }
  return m;
}

namespace {

Json tensor_json(const Tensor& t) {
  Json values = Json::array();
  for (Eigen::Index i = 0; i < t.size(); ++i) values.push_back(format_hex(t.data()[i]));
  return Json{{"rows", t.rows()}, {"cols", t.cols()}, {"values", values}};
}

Tensor tensor_from(const Json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const Json& values = j.at("values");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw IoError("model file: tensor value count does not match its shape");
  }
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = parse_double(values[i].get<std::string>());
  return t;
}

Json mlp_json(const MlpParams& p) {
  Json hidden = Json::array();
  for (Activation a : p.spec.hidden) hidden.push_back(activation_name(a));
  Json weights = Json::array();
  Json biases = Json::array();
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    weights.push_back(tensor_json(p.weights[k]));
    biases.push_back(tensor_json(p.biases[k]));
  }
  return Json{{"widths", p.spec.widths}, {"hidden", hidden}, {"weights", weights}, {"biases", biases}};
}

MlpParams mlp_from(const Json& j) {
  MlpParams p;
  p.spec.widths = j.at("widths").get<std::vector<int>>();
  for (const auto& a : j.at("hidden")) p.spec.hidden.push_back(parse_activation(a.get<std::string>()));
  p.spec.validate();
  for (const auto& w : j.at("weights")) p.weights.push_back(tensor_from(w));
  for (const auto& b : j.at("biases")) p.biases.push_back(tensor_from(b));
  if (p.weights.size() != p.spec.layers() || p.biases.size() != p.spec.layers()) {
    throw IoError("model file: layer count does not match the spec");
  }
  for (std::size_t k = 0; k < p.spec.layers(); ++k) {
    if (p.weights[k].rows() != p.spec.widths[k + 1] || p.weights[k].cols() != p.spec.widths[k] ||
        p.biases[k].rows() != 1 || p.biases[k].cols() != p.spec.widths[k + 1]) {
      throw IoError("model file: layer " + std::to_string(k) + " has the wrong shape");
    }
  }
  return p;
}

std::string strip_comments(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) return {};
    pos = nl + 1;
  }
  return text.substr(pos);
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string model_to_json(const EntropicGanModel& model) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["lambda"] = format_hex(model.lambda);
  j["loss"] = loss_name(model.loss);
  j["latent_dim"] = model.latent_dim;
  j["data_dim"] = model.data_dim;
  j["train_size"] = model.train_size;
  j["seed"] = std::to_string(model.seed);
  j["iterations"] = model.iterations;
  j["generator"] = mlp_json(model.generator);
  j["d1"] = mlp_json(model.d1);
  j["d2"] = mlp_json(model.d2);
  return j.dump(1) + "\n";
}

EntropicGanModel model_from_json(const std::string& text) {
  return guarded("model file", [&] {
    const Json j = Json::parse(strip_comments(text));
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw IoError("model file: unsupported format version " + std::to_string(version));
    }
    EntropicGanModel m;
    m.lambda = parse_double(j.at("lambda").get<std::string>());
    m.loss = parse_loss(j.at("loss").get<std::string>());
    m.latent_dim = j.at("latent_dim").get<int>();
    m.data_dim = j.at("data_dim").get<int>();
    m.train_size = j.at("train_size").get<std::int64_t>();
    m.seed = std::stoull(j.at("seed").get<std::string>());
    m.iterations = j.at("iterations").get<std::int64_t>();
    m.generator = mlp_from(j.at("generator"));
    m.d1 = mlp_from(j.at("d1"));
    m.d2 = mlp_from(j.at("d2"));
    m.validate();
    return m;
  });
}

void save_model(const std::filesystem::path& path, const EntropicGanModel& model, const Metadata& meta) {
  write_file_atomic(path, metadata_line(meta) + "\n" + model_to_json(model));
}

EntropicGanModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string oracle_to_json(const LinearGaussianOracle& oracle) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["lambda"] = format_hex(oracle.lambda());
  j["g"] = tensor_json(oracle.g());
  j["offset"] = tensor_json(Tensor(oracle.offset().transpose()));
  return j.dump(1) + "\n";
}

LinearGaussianOracle oracle_from_json(const std::string& text) {
  return guarded("oracle file", [&] {
    const Json j = Json::parse(strip_comments(text));
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw IoError("oracle file: unsupported format version");
    }
    const Matrix g = tensor_from(j.at("g"));
    const Vector c = tensor_from(j.at("offset")).row(0).transpose();
    return LinearGaussianOracle(g, parse_double(j.at("lambda").get<std::string>()), c);
  });
}

void save_oracle(const std::filesystem::path& path, const LinearGaussianOracle& oracle,
                 const Metadata& meta) {
  write_file_atomic(path, metadata_line(meta) + "\n" + oracle_to_json(oracle));
}

LinearGaussianOracle load_oracle(const std::filesystem::path& path) {
  try {
    return oracle_from_json(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string train_log_csv(const TrainLog& log, const Metadata& meta, bool wall_time) {
  std::string out = metadata_line(meta) + "\n";
  std::vector<std::string> header{"iteration", "objective", "mean_violation", "discriminator_grad_norm",
                                  "generator_grad_norm"};
  if (wall_time) header.push_back("wall_seconds");
  out += join_csv(header) + "\n";
  for (const auto& r : log) {
    std::vector<std::string> f{std::to_string(r.iteration), format_decimal(r.objective),
                               format_decimal(r.mean_violation), format_decimal(r.discriminator_grad_norm),
                               format_decimal(r.generator_grad_norm)};
    if (wall_time) f.push_back(format_decimal(r.wall_seconds));
    out += join_csv(f) + "\n";
  }
  return out;
}

}  // namespace egan
