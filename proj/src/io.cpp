#include "expreg/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include "expreg/error.hpp"

namespace expreg::io {

namespace {

double parse_double(const std::string& token, const char* what) {
  if (token.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw IoError(std::string("malformed ") + what + " value '" + token + "'");
  }
  if (used != token.size()) throw IoError(std::string("malformed ") + what + " value '" + token + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << ds.n() << ' ' << ds.d() << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    for (int k = 0; k < ds.d(); ++k) out << format_double(ds.inputs()(k, i)) << ' ';
    out << format_double(ds.y(i)) << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  long n = 0;
  long d = 0;
  if (!(in >> n >> d) || n < 1 || d < 1) throw IoError("dataset header must be 'n d' with n, d >= 1");
  Eigen::MatrixXd x(d, n);
  Eigen::VectorXd y(n);
  for (long i = 0; i < n; ++i) {
    for (long k = 0; k < d; ++k) {
      if (!(in >> x(k, i))) throw IoError("dataset truncated at row " + std::to_string(i));
    }
    if (!(in >> y(i))) throw IoError("dataset truncated at row " + std::to_string(i));
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  return read_dataset(in);
}

Eigen::VectorXd load_labels(const std::filesystem::path& path, int n) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    if (!(in >> y(i))) throw IoError("label file has fewer than " + std::to_string(n) + " values");
  }
  return y;
}

void write_network(std::ostream& out, const NetworkState& state) {
  out << state.d() << ' ' << state.m() << ' ' << state.step() << '\n';
  for (int r = 0; r < state.m(); ++r) {
    out << (state.a(r) > 0 ? "1" : "-1");
    for (int k = 0; k < state.d(); ++k) out << ' ' << format_double(state.weights()(k, r));
    out << '\n';
  }
}

NetworkState read_network(std::istream& in) {
  long d = 0;
  long m = 0;
  std::int64_t t = 0;
  if (!(in >> d >> m >> t) || d < 1 || m < 1) throw IoError("network header must be 'd m t'");
  Eigen::MatrixXd w(d, m);
  Eigen::VectorXd a(m);
  for (long r = 0; r < m; ++r) {
    if (!(in >> a(r))) throw IoError("network truncated at neuron " + std::to_string(r));
    for (long k = 0; k < d; ++k) {
      if (!(in >> w(k, r))) throw IoError("network truncated at neuron " + std::to_string(r));
    }
  }
  return NetworkState(std::move(w), std::move(a), t);
}

void write_kernel_csv(std::ostream& out, const KernelMatrix& k) {
  out << "# kind=" << to_string(k.kind) << " n=" << k.n() << '\n';
  for (int i = 0; i < k.n(); ++i) {
    for (int j = 0; j < k.n(); ++j) {
      if (j > 0) out << ',';
      out << format_double(k.h(i, j));
    }
    out << '\n';
  }
}

KernelMatrix read_kernel_csv(std::istream& in) {
  std::string header;
  std::getline(in, header);
  char kind_buf[32] = {};
  int n = 0;
  if (std::sscanf(header.c_str(), "# kind=%31s n=%d", kind_buf, &n) != 2 || n < 1) {
    throw IoError("kernel CSV header must be '# kind=<kind> n=<n>'");
  }
  KernelMatrix k{Eigen::MatrixXd(n, n), parse_kernel_kind(kind_buf)};
  for (int i = 0; i < n; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("kernel CSV truncated");
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != n) throw IoError("kernel CSV row has wrong width");
    for (int j = 0; j < n; ++j) k.h(i, j) = parse_double(cells[j], "kernel");
  }
  return k;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.ratio) << ','
        << format_double(r.max_drift) << ',' << format_double(r.max_grad) << ','
        << format_double(r.c1) << ',' << format_double(r.c2) << ',' << format_double(r.c3) << ','
        << format_double(r.residual) << ',' << format_double(r.lambda_min) << '\n';
  }
}

std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw IoError("unexpected trace CSV header");
  std::vector<TraceRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 10) throw IoError("trace CSV row has " + std::to_string(c.size()) + " fields");
    TraceRecord r;
    r.t = std::stoll(c[0]);
    r.loss = parse_double(c[1], "loss");
    r.ratio = parse_double(c[2], "ratio");
    r.max_drift = parse_double(c[3], "max_drift");
    r.max_grad = parse_double(c[4], "max_grad");
    r.c1 = parse_double(c[5], "C1");
    r.c2 = parse_double(c[6], "C2");
    r.c3 = parse_double(c[7], "C3");
    r.residual = parse_double(c[8], "resid");
    r.lambda_min = parse_double(c[9], "lambda_min");
    records.push_back(r);
  }
  return records;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

}  // namespace expreg::io
