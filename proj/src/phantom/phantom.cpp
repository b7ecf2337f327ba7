#include "etomo/phantom/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "etomo/core/hash.hpp"
#include "etomo/core/random.hpp"
#include "etomo/io/artifact.hpp"

namespace etomo::phantom {
namespace {

using io::Json;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("phantom spec: " + what);
}

std::string item_name(const char* prefix, int index, const std::string& suffix = "") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d", prefix, index);
  return std::string(buf) + (suffix.empty() ? "" : "_" + suffix) + ".etaf";
}

Json particle_to_json(const ParticleRecord& p) {
  return {{"cx", p.cx}, {"cy", p.cy}, {"a", p.a}, {"b", p.b}, {"theta", p.theta},
          {"intensity", p.intensity}};
}

ParticleRecord particle_from_json(const Json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("a").get<double>(),
          j.at("b").get<double>(), j.at("theta").get<double>(), j.at("intensity").get<double>()};
}

}  // namespace

void PhantomSpec::validate() const {
  require(image_size >= 4, "image_size must be at least 4");
  require(count_min >= 0 && count_min <= count_max, "need 0 <= count_min <= count_max");
  require(radius_min > 0.0 && radius_min <= radius_max, "need 0 < radius_min <= radius_max");
  require(radius_max < image_size / 2.0 - 1.0, "radius_max does not fit inside the image");
  require(circle_fraction >= 0.0 && circle_fraction <= 1.0, "circle_fraction outside [0, 1]");
  require(min_aspect > 0.0 && min_aspect <= 1.0, "min_aspect outside (0, 1]");
  require(intensity_min > 0.0 && intensity_min <= intensity_max,
          "need 0 < intensity_min <= intensity_max");
  require(min_separation >= 0.0, "min_separation must be non-negative");
  require(max_attempts >= 1, "max_attempts must be positive");
}

bool covers(const ParticleRecord& p, int row, int col) {
  const double dx = col - p.cx;
  const double dy = row - p.cy;
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  const double u = (dx * c + dy * s) / p.a;
  const double v = (-dx * s + dy * c) / p.b;
  return u * u + v * v <= 1.0;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const int n = spec.image_size;
  const double centre = (n - 1) / 2.0;
  const double inscribed = n / 2.0 - 1.0;
  Rng rng(spec.seed);
  const auto count = static_cast<int>(rng.integer(spec.count_min, spec.count_max));

  Phantom out;
  out.image = proj::Image2D(n, n);
  out.particles.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    ParticleRecord p;
    const bool circle = rng.uniform() < spec.circle_fraction;
    p.a = rng.uniform(spec.radius_min, spec.radius_max);
    p.b = circle ? p.a : p.a * rng.uniform(spec.min_aspect, 1.0);
    p.theta = circle ? 0.0 : rng.uniform(0.0, std::numbers::pi);
    p.intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
    const double reach = inscribed - p.a;
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      const double x = rng.uniform(-reach, reach);
      const double y = rng.uniform(-reach, reach);
      if (x * x + y * y > reach * reach) continue;
      p.cx = centre + x;
      p.cy = centre + y;
      placed = true;
      for (const auto& q : out.particles) {
        if (std::hypot(p.cx - q.cx, p.cy - q.cy) < spec.min_separation * (p.a + q.a)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw PlacementError("could not place particle " + std::to_string(k + 1) + " of " +
                           std::to_string(count) + " after " + std::to_string(spec.max_attempts) +
                           " attempts (seed " + std::to_string(spec.seed) +
                           "); reduce count or radius");
    }
    const int r0 = std::max(0, static_cast<int>(std::floor(p.cy - p.a)));
    const int r1 = std::min(n - 1, static_cast<int>(std::ceil(p.cy + p.a)));
    const int c0 = std::max(0, static_cast<int>(std::floor(p.cx - p.a)));
    const int c1 = std::min(n - 1, static_cast<int>(std::ceil(p.cx + p.a)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (covers(p, r, c)) out.image.at(r, c) = p.intensity;
      }
    }
    out.particles.push_back(p);
  }
  return out;
}

nlohmann::json spec_to_json(const PhantomSpec& s) {
  return {{"image_size", s.image_size},         {"count_min", s.count_min},
          {"count_max", s.count_max},           {"radius_min", s.radius_min},
          {"radius_max", s.radius_max},         {"circle_fraction", s.circle_fraction},
          {"min_aspect", s.min_aspect},         {"intensity_min", s.intensity_min},
          {"intensity_max", s.intensity_max},   {"min_separation", s.min_separation},
          {"max_attempts", s.max_attempts},     {"seed", s.seed}};
}

PhantomSpec spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  s.image_size = j.value("image_size", s.image_size);
  s.count_min = j.value("count_min", s.count_min);
  s.count_max = j.value("count_max", s.count_max);
  s.radius_min = j.value("radius_min", s.radius_min);
  s.radius_max = j.value("radius_max", s.radius_max);
  s.circle_fraction = j.value("circle_fraction", s.circle_fraction);
  s.min_aspect = j.value("min_aspect", s.min_aspect);
  s.intensity_min = j.value("intensity_min", s.intensity_min);
  s.intensity_max = j.value("intensity_max", s.intensity_max);
  s.min_separation = j.value("min_separation", s.min_separation);
  s.max_attempts = j.value("max_attempts", s.max_attempts);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

std::size_t Dataset::scenario_index(const std::string& name) const {
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (scenarios[i].name == name) return i;
  }
  if (name == reference.name) return scenarios.size();
  throw std::out_of_range("dataset " + manifest.string() + " has no scenario '" + name + "'");
}

std::filesystem::path Dataset::phantom_path(std::size_t item) const {
  return root / items.at(item).phantom_file;
}

std::filesystem::path Dataset::sinogram_path(std::size_t item, std::size_t scenario) const {
  return root / items.at(item).sinogram_files.at(scenario);
}

Dataset generate_dataset(const DatasetOptions& opt, const std::filesystem::path& out_dir) {
  if (opt.n < 1) throw std::invalid_argument("dataset size must be at least 1");
  if (!(opt.noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  opt.spec.validate();
  std::filesystem::create_directories(out_dir);

  Dataset ds;
  ds.root = out_dir;
  ds.manifest = out_dir / "manifest.json";
  ds.image_size = opt.spec.image_size;
  ds.scenarios = opt.scenarios;
  ds.reference = opt.reference;

  const int n = opt.spec.image_size;
  std::vector<proj::TiltGeometry> geoms;
  for (const auto& s : opt.scenarios) geoms.push_back(s.geometry(n, n));
  geoms.push_back(opt.reference.geometry(n, n));

  Json scen = Json::array();
  for (const auto& s : opt.scenarios) scen.push_back(io::scenario_to_json(s));
  Json config = {{"phantom_spec", spec_to_json(opt.spec)},
                 {"scenarios", scen},
                 {"reference", io::scenario_to_json(opt.reference)},
                 {"noise_sigma", opt.noise_sigma}};
  const std::string config_hash = hex64(fnv1a64(config.dump()));

  Json items = Json::array();
  for (int i = 0; i < opt.n; ++i) {
    const int index = opt.first_index + i;
    DatasetItem item;
    item.index = index;
    item.seed = derive_seed(opt.master_seed, "phantom", static_cast<std::uint64_t>(index));
    PhantomSpec spec = opt.spec;
    spec.seed = item.seed;
    Phantom ph = generate_phantom(spec);
    // Project what is stored, so the sinograms follow from the phantom file alone.
    for (double& v : ph.image.data) v = static_cast<float>(v);
    item.particles = ph.particles;
    const Json prov = {{"config_hash", config_hash}, {"seed", item.seed}, {"index", index},
                       {"master_seed", opt.master_seed}};

    item.phantom_file = item_name("phantom", index);
    io::write_image(out_dir / item.phantom_file, ph.image, prov);
    item.phantom_hash = io::file_hash(out_dir / item.phantom_file);

    for (std::size_t s = 0; s < geoms.size(); ++s) {
      const bool is_ref = s == opt.scenarios.size();
      const std::string& name = is_ref ? opt.reference.name : opt.scenarios[s].name;
      auto y = proj::forward_project(ph.image, geoms[s]);
      Json sprov = prov;
      sprov["scenario"] = name;
      if (!is_ref && opt.noise_sigma > 0.0) {
        const auto nseed = derive_seed(item.seed, "noise:" + name);
        y = proj::add_noise(y, opt.noise_sigma, nseed);
        sprov["noise_sigma"] = opt.noise_sigma;
        sprov["noise_seed"] = nseed;
      }
      const std::string file = item_name("sino", index, name);
      io::write_sinogram(out_dir / file, y, sprov);
      item.sinogram_files.push_back(file);
      item.sinogram_hashes.push_back(io::file_hash(out_dir / file));
    }

    Json parts = Json::array();
    for (const auto& p : item.particles) parts.push_back(particle_to_json(p));
    items.push_back({{"index", index},
                     {"seed", item.seed},
                     {"phantom", {{"file", item.phantom_file}, {"hash", item.phantom_hash}}},
                     {"sinograms", item.sinogram_files},
                     {"sinogram_hashes", item.sinogram_hashes},
                     {"particles", parts}});
    ds.items.push_back(std::move(item));
  }

  Json manifest = config;
  manifest["format"] = "etomo-dataset";
  manifest["version"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["master_seed"] = opt.master_seed;
  manifest["first_index"] = opt.first_index;
  manifest["n"] = opt.n;
  manifest["items"] = items;
  io::write_file_atomic(ds.manifest, manifest.dump(1) + "\n");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const Json m = [&] {
    try {
      return Json::parse(io::read_file(manifest_path));
    } catch (const Json::exception& e) {
      throw io::FormatError(manifest_path.string() + ": invalid JSON (" + e.what() + ")");
    }
  }();
  Dataset ds;
  ds.root = manifest_path.parent_path();
  ds.manifest = manifest_path;
  try {
    if (m.at("format").get<std::string>() != "etomo-dataset") {
      throw io::FormatError(manifest_path.string() + ": not a dataset manifest");
    }
    ds.image_size = m.at("phantom_spec").at("image_size").get<int>();
    for (const auto& s : m.at("scenarios")) ds.scenarios.push_back(io::scenario_from_json(s));
    ds.reference = io::scenario_from_json(m.at("reference"));
    for (const auto& it : m.at("items")) {
      DatasetItem item;
      item.index = it.at("index").get<int>();
      item.seed = it.at("seed").get<std::uint64_t>();
      item.phantom_file = it.at("phantom").at("file").get<std::string>();
      item.phantom_hash = it.at("phantom").at("hash").get<std::string>();
      item.sinogram_files = it.at("sinograms").get<std::vector<std::string>>();
      item.sinogram_hashes = it.at("sinogram_hashes").get<std::vector<std::string>>();
      for (const auto& p : it.at("particles")) item.particles.push_back(particle_from_json(p));
      ds.items.push_back(std::move(item));
    }
  } catch (const Json::exception& e) {
    throw io::FormatError(manifest_path.string() + ": malformed manifest (" + e.what() + ")");
  }
  return ds;
}

}  // namespace etomo::phantom
