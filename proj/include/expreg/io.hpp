#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "expreg/datamodel.hpp"

namespace expreg::io {

/// Shortest "%.17g" rendering; round-trips every finite double. NaN renders empty.
std::string format_double(double v);

/// Header `n d`, then n lines of d coordinates followed by the label.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

/// One label per whitespace-separated token, n of them.
Eigen::VectorXd load_labels(const std::filesystem::path& path, int n);

/// Header `d m t`, then m lines `a_r w_r[0] ... w_r[d-1]`.
void write_network(std::ostream& out, const NetworkState& state);
NetworkState read_network(std::istream& in);

/// `# kind=<kind> n=<n>` then n rows of n comma-separated values.
void write_kernel_csv(std::ostream& out, const KernelMatrix& k);
KernelMatrix read_kernel_csv(std::istream& in);

inline constexpr const char* kTraceHeader = "t,loss,ratio,max_drift,max_grad,C1,C2,C3,resid,lambda_min";

void write_trace_csv(std::ostream& out, const TrainTrace& trace);
/// Reads the records back; the hyperparameters are not part of the CSV.
std::vector<TraceRecord> read_trace_csv(std::istream& in);

/// Writes `content` to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace expreg::io
