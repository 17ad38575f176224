#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "expreg/error.hpp"
#include "expreg/harness.hpp"
#include "expreg/io.hpp"

namespace expreg::harness {

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "n",           "d",           "m",           "sigma",          "C",
      "delta",       "epsilon",     "R",           "eta",            "T",
      "b_source",    "eta_source",  "dataset_kind", "dataset_seed",  "dataset_file",
      "labels_file", "init_mode",   "seeds",       "early_stop",     "record_kernel_every",
      "m_grid",      "sigma_grid",  "trials",      "mc_samples",     "max_concentration_m",
      "out"};
  return keys;
}

template <typename T>
void read_field(const json& doc, const char* key, T& field) {
  if (!doc.contains(key) || doc.at(key).is_null()) return;
  try {
    field = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParameterDomainError(std::string("config field '") + key + "': " + e.what());
  }
}

std::string read_string(const json& doc, const char* key, const std::string& fallback) {
  std::string value = fallback;
  read_field(doc, key, value);
  return value;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ParameterDomainError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!known_keys().contains(key)) throw ParameterDomainError("unknown config field '" + key + "'");
  }
  ExperimentConfig cfg;
  read_field(doc, "n", cfg.n);
  read_field(doc, "d", cfg.d);
  read_field(doc, "m", cfg.m);
  read_field(doc, "sigma", cfg.sigma);
  read_field(doc, "C", cfg.c);
  read_field(doc, "delta", cfg.delta);
  read_field(doc, "epsilon", cfg.epsilon);
  read_field(doc, "R", cfg.radius);
  if (doc.contains("eta") && !doc.at("eta").is_null()) {
    double eta = 0.0;
    read_field(doc, "eta", eta);
    cfg.eta = eta;
  }
  read_field(doc, "T", cfg.steps);
  cfg.b_source = parse_b_source(read_string(doc, "b_source", "empirical"));
  // An explicit eta means an override unless the source says otherwise.
  cfg.eta_source = parse_eta_source(
      read_string(doc, "eta_source", cfg.eta ? "override" : "paper-formula"));
  cfg.dataset_kind = parse_dataset_kind(read_string(doc, "dataset_kind", "normalized_gaussian"));
  read_field(doc, "dataset_seed", cfg.dataset_seed);
  if (doc.contains("dataset_file") && !doc.at("dataset_file").is_null()) {
    cfg.dataset_file = read_string(doc, "dataset_file", "");
  }
  if (doc.contains("labels_file") && !doc.at("labels_file").is_null()) {
    cfg.labels_file = read_string(doc, "labels_file", "");
  }
  cfg.init_mode = parse_init_mode(read_string(doc, "init_mode", "paired"));
  read_field(doc, "seeds", cfg.seeds);
  read_field(doc, "early_stop", cfg.early_stop);
  read_field(doc, "record_kernel_every", cfg.record_kernel_every);
  read_field(doc, "m_grid", cfg.m_grid);
  read_field(doc, "sigma_grid", cfg.sigma_grid);
  read_field(doc, "trials", cfg.trials);
  read_field(doc, "mc_samples", cfg.mc_samples);
  read_field(doc, "max_concentration_m", cfg.max_concentration_m);
  cfg.out = read_string(doc, "out", "");
  return cfg;
}

json ExperimentConfig::to_json() const {
  json doc{{"n", n},
           {"d", d},
           {"m", m},
           {"sigma", sigma},
           {"C", c},
           {"delta", delta},
           {"epsilon", epsilon},
           {"R", radius},
           {"eta", eta ? json(*eta) : json(nullptr)},
           {"T", steps},
           {"b_source", std::string(to_string(b_source))},
           {"eta_source", std::string(to_string(eta_source))},
           {"dataset_kind", std::string(to_string(dataset_kind))},
           {"dataset_seed", dataset_seed},
           {"dataset_file", dataset_file ? json(dataset_file->string()) : json(nullptr)},
           {"labels_file", labels_file ? json(labels_file->string()) : json(nullptr)},
           {"init_mode", std::string(to_string(init_mode))},
           {"seeds", seeds},
           {"early_stop", early_stop},
           {"record_kernel_every", record_kernel_every},
           {"m_grid", m_grid},
           {"sigma_grid", sigma_grid},
           {"trials", trials},
           {"mc_samples", mc_samples},
           {"max_concentration_m", max_concentration_m},
           {"out", out.string()}};
  return doc;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ParameterDomainError("seeds must not be empty");
  if (n < 1 || d < 1) throw ParameterDomainError("n and d must be positive");
  if (m < 2 || m % 2 != 0) throw ParameterDomainError("m must be even and at least 2");
  for (int w : m_grid) {
    if (w < 2 || w % 2 != 0) throw ParameterDomainError("m_grid entries must be even and >= 2");
  }
  for (double s : sigma_grid) {
    if (!(s > 0.0)) throw ParameterDomainError("sigma_grid entries must be positive");
  }
  if (!(sigma > 0.0)) throw ParameterDomainError("sigma must be positive");
  if (steps < 0) throw ParameterDomainError("T must be nonnegative");
  if (trials < 1) throw ParameterDomainError("trials must be positive");
  if (mc_samples < 1) throw ParameterDomainError("mc_samples must be positive");
  if (record_kernel_every < 0) throw ParameterDomainError("record_kernel_every must be >= 0");
  if (eta_source == EtaSource::override_value && !eta) {
    throw ParameterDomainError("eta_source = override needs an eta value");
  }
  if (eta_source == EtaSource::paper_formula && eta) {
    throw ParameterDomainError("eta is set but eta_source = paper-formula");
  }
  if (out.empty()) throw ParameterDomainError("an output directory (--out) is required");
}

RunSettings ExperimentConfig::run_settings(int width, double sigma_value) const {
  RunSettings s;
  s.m = width;
  s.sigma = sigma_value;
  s.c = c;
  s.delta = delta;
  s.epsilon = epsilon;
  s.radius = radius;
  s.steps = steps;
  s.b_source = b_source;
  s.eta_source = eta_source;
  s.eta = eta.value_or(0.0);
  return s;
}

Dataset make_dataset(const ExperimentConfig& cfg) {
  Dataset ds = cfg.dataset_file ? io::load_dataset(*cfg.dataset_file)
                                : gen_dataset(cfg.n, cfg.d, cfg.dataset_seed, cfg.dataset_kind);
  if (cfg.labels_file) ds = ds.with_labels(io::load_labels(*cfg.labels_file, ds.n()));
  return ds;
}

json apply_overrides(json doc, const std::vector<std::pair<std::string, std::string>>& overrides) {
  if (doc.is_null()) doc = json::object();
  for (const auto& [key, raw] : overrides) {
    json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = raw;
    doc[key] = std::move(value);
  }
  return doc;
}

unsigned thread_limit() {
  unsigned limit = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EXPREG_THREADS")) {
    const long requested = std::strtol(env, nullptr, 10);
    if (requested >= 1) limit = static_cast<unsigned>(requested);
  }
  return limit;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_limit(), count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  std::mutex failure_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count && !failed; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          failed = true;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
  const auto probe = dir / ".expreg_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace expreg::harness
