#include "perfowave/io.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "perfowave/errors.hpp"

namespace perfowave {
namespace {

void write_le(std::ostream& out, const double* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto bits = std::bit_cast<std::uint64_t>(data[i]);
      bits = __builtin_bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
}

void read_le(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ValidationError("unexpected end of binary file");
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = std::bit_cast<double>(__builtin_bswap64(std::bit_cast<std::uint64_t>(data[i])));
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Non-finite numbers are stored as null.
Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(open_out(path, false)), columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
  out_ << std::setprecision(17);
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw ValidationError("csv row has the wrong number of columns");
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
  out_ << '\n';
}

void write_json(const std::filesystem::path& path, const Json& value) {
  auto out = open_out(path, false);
  out << value.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  return Json::parse(in);
}

void write_snapshot(const std::filesystem::path& path, const Eigen::VectorXd& field, const Json& metadata) {
  auto out = open_out(path, true);
  write_le(out, field.data(), static_cast<std::size_t>(field.size()));
  Json meta = metadata;
  meta["dtype"] = "float64";
  meta["byte_order"] = "little";
  meta["length"] = field.size();
  write_json(path.string() + ".json", meta);
}

Eigen::VectorXd read_snapshot(const std::filesystem::path& path) {
  const Json meta = read_json(path.string() + ".json");
  Eigen::VectorXd field(meta.at("length").get<Eigen::Index>());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  read_le(in, field.data(), static_cast<std::size_t>(field.size()));
  return field;
}

NoiseLogWriter::NoiseLogWriter(const std::filesystem::path& path, const Json& header) : out_(open_out(path, true)) {
  const std::string text = header.dump();
  std::uint64_t n = text.size();
  if constexpr (std::endian::native != std::endian::little) n = __builtin_bswap64(n);
  out_.write(reinterpret_cast<const char*>(&n), sizeof n);
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void NoiseLogWriter::append(const Eigen::VectorXd& dw1, const Eigen::VectorXd& dw2) {
  write_le(out_, dw1.data(), static_cast<std::size_t>(dw1.size()));
  write_le(out_, dw2.data(), static_cast<std::size_t>(dw2.size()));
}

NoiseLog read_noise_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if constexpr (std::endian::native != std::endian::little) n = __builtin_bswap64(n);
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("truncated noise log header");
  NoiseLog log;
  log.header = Json::parse(text);
  const auto nf = log.header.at("fluid_count").get<Eigen::Index>();
  const auto nd = log.header.at("dof_count").get<Eigen::Index>();
  while (in.peek() != std::char_traits<char>::eof()) {
    Eigen::VectorXd a(nf), b(nd);
    read_le(in, a.data(), static_cast<std::size_t>(nf));
    read_le(in, b.data(), static_cast<std::size_t>(nd));
    log.dw1.push_back(std::move(a));
    log.dw2.push_back(std::move(b));
  }
  return log;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_manifest(const std::filesystem::path& dir, RunManifest manifest, const std::vector<std::string>& files) {
  for (const auto& f : files) {
    const auto p = dir / f;
    if (!std::filesystem::exists(p)) continue;
    manifest.outputs.push_back({f, sha256_file(p), std::filesystem::file_size(p)});
  }
  Json j;
  j["command"] = manifest.command;
  j["status"] = manifest.status;
  j["version"] = manifest.version;
  j["config_sha256"] = manifest.config_hash;
  j["seed"] = manifest.seed;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  Json stages = Json::array();
  for (const auto& [name, sec] : manifest.stage_seconds) stages.push_back({{"stage", name}, {"seconds", sec}});
  j["stages"] = stages;
  Json outputs = Json::array();
  for (const auto& o : manifest.outputs) outputs.push_back({{"file", o.name}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  j["outputs"] = outputs;
  j["warnings"] = manifest.warnings;
  write_json(dir / "manifest.json", j);
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(number(m(i, k)));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("tensor must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) throw ValidationError("tensor must be square");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Json report_to_json(const DistanceReport& report, const EnsembleSpec& spec) {
  const auto& names = functional_names();
  Json j;
  j["format_version"] = "1";
  j["seed"] = spec.seed;
  j["paths"] = spec.paths;
  j["T"] = spec.T;
  j["common_random_numbers"] = spec.common_random_numbers;
  j["tensor"] = matrix_to_json(report.tensor);
  j["porosity"] = report.nu;
  Json levels = Json::array();
  for (const auto& lr : report.levels) {
    Json l;
    l["eps"] = lr.eps;
    l["h"] = lr.h;
    l["dt"] = lr.dt;
    l["holes"] = lr.holes;
    l["micro_paths"] = lr.micro.size();
    l["macro_paths"] = lr.macro.size();
    l["excluded_micro"] = lr.excluded_micro;
    l["excluded_macro"] = lr.excluded_macro;
    Json dist;
    for (int k = 0; k < kFunctionalCount; ++k) {
      const auto& d = lr.distance[static_cast<std::size_t>(k)];
      dist[names[static_cast<std::size_t>(k)]] = {
          {"energy_distance", number(d.energy)}, {"energy_distance_se", number(d.energy_se)}, {"ks", number(d.ks)}};
    }
    l["distances"] = dist;
    l["mean_field_gap"] = number(lr.mean_field_gap);
    l["mean_field_noise_floor"] = number(lr.mean_field_noise_floor);
    if (lr.has_null) {
      Json null;
      for (int k = 0; k < kFunctionalCount; ++k) {
        const auto& n = lr.null[static_cast<std::size_t>(k)];
        null[names[static_cast<std::size_t>(k)]] = {{"cross", number(n.cross)}, {"cross_se", number(n.cross_se)},
                                                    {"null", number(n.null)}, {"null_se", number(n.null_se)},
                                                    {"pass", n.pass}};
      }
      l["null_calibration"] = null;
    }
    levels.push_back(l);
  }
  j["levels"] = levels;
  Json trend;
  for (int k = 0; k < kFunctionalCount; ++k) {
    trend[names[static_cast<std::size_t>(k)]] = report.trend_nonincreasing[static_cast<std::size_t>(k)];
  }
  j["trend_nonincreasing"] = trend;
  j["null_ok"] = report.null_ok;
  j["valid"] = report.valid;
  j["total_paths"] = report.total_paths;
  j["excluded_paths"] = report.excluded_paths;
  return j;
}

void write_functionals_csv(const std::filesystem::path& path, const LevelReport& level) {
  CsvWriter csv(path, {"path", "ensemble", "J1", "J2", "J3"});
  for (const auto& s : level.micro) csv.row({static_cast<double>(s.path), 0.0, s.J[0], s.J[1], s.J[2]});
  for (const auto& s : level.macro) csv.row({static_cast<double>(s.path), 1.0, s.J[0], s.J[1], s.J[2]});
}

}  // namespace perfowave
