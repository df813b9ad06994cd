#ifndef EGAN_IO_HPP_
#define EGAN_IO_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "egan/entropic_gan.hpp"
#include "egan/gaussian_oracle.hpp"
#include "egan/types.hpp"

namespace egan {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kModelFormatVersion = 1;

// Ordered key/value pairs describing the command that produced a file.
using Metadata = std::vector<std::pair<std::string, std::string>>;

// "# egan <version> {json object of the metadata}"
std::string metadata_line(const Metadata& meta);

// Shortest-round-trip-safe decimal ("%.17g") and hexadecimal ("%a") forms.
std::string format_decimal(double v);
std::string format_hex(double v);
double parse_double(const std::string& s);

std::string join_csv(const std::vector<std::string>& fields);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Dataset CSV: metadata line, header y0..y{d-1}, one row per point.
std::string dataset_csv(const Matrix& points, const Metadata& meta);
void save_dataset(const std::filesystem::path& path, const Matrix& points, const Metadata& meta);
Matrix load_dataset(const std::filesystem::path& path);

// Model and oracle files are JSON, optionally preceded by '#' comment lines
// (the writers below emit the metadata line first). Floats are stored as
// hexadecimal literals so a reload is bit-exact.
std::string model_to_json(const EntropicGanModel& model);
EntropicGanModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const EntropicGanModel& model, const Metadata& meta);
EntropicGanModel load_model(const std::filesystem::path& path);

std::string oracle_to_json(const LinearGaussianOracle& oracle);
LinearGaussianOracle oracle_from_json(const std::string& text);
void save_oracle(const std::filesystem::path& path, const LinearGaussianOracle& oracle,
                 const Metadata& meta);
LinearGaussianOracle load_oracle(const std::filesystem::path& path);

// Columns: iteration, objective, mean_violation, discriminator_grad_norm,
// generator_grad_norm[, wall_seconds].
std::string train_log_csv(const TrainLog& log, const Metadata& meta, bool wall_time);

}  // namespace egan

#endif  // EGAN_IO_HPP_
