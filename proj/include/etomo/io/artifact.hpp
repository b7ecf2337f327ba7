#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "etomo/core/grid.hpp"
#include "etomo/projector/projector.hpp"
#include "json.hpp"

namespace etomo::io {

using Json = nlohmann::json;

/// Malformed or mismatched artifact; the message names the file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { image, sinogram, volume, labelmap };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

/// On-disk layout:
///   8 bytes   magic "ETOMOAF1"
///   4 bytes   header length N, little-endian uint32
///   N bytes   UTF-8 JSON header {version, kind, dims, dtype, geometry?, provenance}
///   payload   row-major, little-endian; float32 for image/sinogram/volume,
///             int64 for labelmap
struct Artifact {
  Kind kind = Kind::image;
  std::vector<int> dims;
  Json geometry;    // sinograms only
  Json provenance;  // free-form; at least {config_hash, seed} for generated data
  std::vector<double> values;
  std::vector<std::int64_t> labels;
};

std::string encode(const Artifact& a);
Artifact decode(const std::string& bytes, const std::string& origin = "<memory>");

void write_artifact(const std::filesystem::path& path, const Artifact& a);
Artifact read_artifact(const std::filesystem::path& path);

Json geometry_to_json(const proj::TiltGeometry& g);
proj::TiltGeometry geometry_from_json(const Json& j);
Json scenario_to_json(const proj::Scenario& s);
proj::Scenario scenario_from_json(const Json& j);

void write_image(const std::filesystem::path& path, const proj::Image2D& x, const Json& provenance);
void write_sinogram(const std::filesystem::path& path, const proj::Sinogram& y, const Json& provenance);
void write_volume(const std::filesystem::path& path, const Volume3D& v, const Json& provenance);
void write_labelmap(const std::filesystem::path& path, const LabelMap& l, const Json& provenance);

proj::Image2D to_image(const Artifact& a, const std::string& origin = "<memory>");
proj::Sinogram to_sinogram(const Artifact& a, const std::string& origin = "<memory>");
Volume3D to_volume(const Artifact& a, const std::string& origin = "<memory>");
LabelMap to_labelmap(const Artifact& a, const std::string& origin = "<memory>");

proj::Image2D read_image(const std::filesystem::path& path);
proj::Sinogram read_sinogram(const std::filesystem::path& path);
Volume3D read_volume(const std::filesystem::path& path);
LabelMap read_labelmap(const std::filesystem::path& path);

/// Whole-file bytes; throws std::runtime_error naming the path on failure.
std::string read_file(const std::filesystem::path& path);
/// Writes through a sibling temporary file and renames it into place, so a
/// crash never leaves a truncated file under the final name.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
/// hex64(fnv1a64(file bytes)).
std::string file_hash(const std::filesystem::path& path);

/// 8-bit binary PGM, min-max normalised. For viewing only.
void write_pgm(const std::filesystem::path& path, const proj::Image2D& x);

}  // namespace etomo::io
