#pragma once

// Output formats: CSV time series, raw little-endian float64 snapshots with
// JSON sidecars, the binary noise log, JSON reports and the run manifest.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "perfowave/cell_homog.hpp"
#include "perfowave/convergence_lab.hpp"

namespace perfowave {

using Json = nlohmann::ordered_json;

/// Streams rows of doubles with a fixed header; values are printed with 17
/// significant digits so files round-trip exactly.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);

private:
  std::ofstream out_;
  std::size_t columns_;
};

void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

/// Writes `path` (raw float64, little endian) and `path` + ".json".
void write_snapshot(const std::filesystem::path& path, const Eigen::VectorXd& field, const Json& metadata);
Eigen::VectorXd read_snapshot(const std::filesystem::path& path);

/// Noise log: 8-byte little-endian header length, JSON header, then per
/// step the dW1 (fluid numbering) and dW2 (dof order) values as float64.
class NoiseLogWriter {
public:
  NoiseLogWriter(const std::filesystem::path& path, const Json& header);
  void append(const Eigen::VectorXd& dw1, const Eigen::VectorXd& dw2);

private:
  std::ofstream out_;
};

struct NoiseLog {
  Json header;
  std::vector<Eigen::VectorXd> dw1;
  std::vector<Eigen::VectorXd> dw2;
};
/// Header must carry "fluid_count" and "dof_count".
NoiseLog read_noise_log(const std::filesystem::path& path);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct OutputFile {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string status = "ok";
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string started;
  std::string finished;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<OutputFile> outputs;
  std::vector<std::string> warnings;
};

/// Checksums every listed file relative to `dir` and writes manifest.json.
void write_manifest(const std::filesystem::path& dir, RunManifest manifest,
                    const std::vector<std::string>& files);

std::string utc_timestamp();

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

/// Runtimes are deliberately absent so equal inputs give equal bytes.
Json report_to_json(const DistanceReport& report, const EnsembleSpec& spec);

/// Per-path functionals of one level: path, ensemble, J1, J2, J3.
void write_functionals_csv(const std::filesystem::path& path, const LevelReport& level);

}  // namespace perfowave
