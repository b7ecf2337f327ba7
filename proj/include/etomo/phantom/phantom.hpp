#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "etomo/projector/projector.hpp"
#include "json.hpp"

namespace etomo::phantom {

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Knobs for one synthetic particle image. Radii are semi-major axes in
/// pixels; ellipses get a minor axis of `a * U(min_aspect, 1)`.
struct PhantomSpec {
  int image_size = 128;
  int count_min = 20;
  int count_max = 40;
  double radius_min = 2.0;
  double radius_max = 7.0;
  double circle_fraction = 0.8;
  double min_aspect = 0.6;
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  /// Minimum centre distance as a multiple of the summed semi-major axes.
  double min_separation = 0.9;
  /// Candidate positions tried per particle before giving up.
  int max_attempts = 2000;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ParticleRecord {
  double cx = 0.0;  // column
  double cy = 0.0;  // row
  double a = 0.0;   // semi-major axis
  double b = 0.0;   // semi-minor axis
  double theta = 0.0;
  double intensity = 0.0;
};

struct Phantom {
  proj::Image2D image;
  std::vector<ParticleRecord> particles;
};

/// True when the pixel centre (row, col) lies inside the particle.
bool covers(const ParticleRecord& p, int row, int col);

/// Draws particles in order; later particles overwrite earlier ones where
/// they overlap. Every particle lies inside the image's inscribed circle.
/// Throws PlacementError when a particle cannot be placed.
Phantom generate_phantom(const PhantomSpec& spec);

struct DatasetItem {
  int index = 0;
  std::uint64_t seed = 0;
  std::string phantom_file;
  std::string phantom_hash;
  std::vector<std::string> sinogram_files;   // one per scenario, then reference
  std::vector<std::string> sinogram_hashes;
  std::vector<ParticleRecord> particles;
};

struct DatasetOptions {
  int n = 1;
  std::uint64_t master_seed = 0;
  PhantomSpec spec;
  std::vector<proj::Scenario> scenarios;
  proj::Scenario reference{"reference", -90.0, 1.0, 90.0};
  /// Optional Gaussian noise on the scenario sinograms (reference stays clean).
  double noise_sigma = 0.0;
  /// Index of the first item; lets a validation split share the master seed
  /// without reusing phantoms.
  int first_index = 0;
};

struct Dataset {
  std::filesystem::path root;
  std::filesystem::path manifest;
  int image_size = 0;
  std::vector<proj::Scenario> scenarios;
  proj::Scenario reference;
  std::vector<DatasetItem> items;

  /// Index of the named scenario in `scenarios`; throws std::out_of_range.
  std::size_t scenario_index(const std::string& name) const;
  std::filesystem::path phantom_path(std::size_t item) const;
  /// `scenario` indexes `scenarios`; scenarios.size() selects the reference.
  std::filesystem::path sinogram_path(std::size_t item, std::size_t scenario) const;
};

nlohmann::json spec_to_json(const PhantomSpec& s);
PhantomSpec spec_from_json(const nlohmann::json& j);

/// Writes phantoms, one sinogram per scenario plus the reference, and
/// manifest.json into `out_dir`. Item i uses seed
/// derive_seed(master_seed, "phantom", first_index + i).
Dataset generate_dataset(const DatasetOptions& opt, const std::filesystem::path& out_dir);

/// Loads a manifest written by generate_dataset.
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace etomo::phantom
