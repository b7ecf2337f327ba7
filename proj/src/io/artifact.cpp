#include "etomo/io/artifact.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "etomo/core/hash.hpp"

namespace etomo::io {
namespace {

constexpr char kMagic[8] = {'E', 'T', 'O', 'M', 'O', 'A', 'F', '1'};
constexpr int kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

const char* dtype_of(Kind k) { return k == Kind::labelmap ? "i64le" : "f32le"; }

std::size_t element_size(Kind k) { return k == Kind::labelmap ? 8 : 4; }

void expect_kind(const Artifact& a, Kind k, const std::string& origin) {
  if (a.kind != k) {
    throw FormatError(origin + ": expected a " + to_string(k) + " artifact, found " +
                      to_string(a.kind));
  }
}

void expect_rank(const Artifact& a, std::size_t rank, const std::string& origin) {
  if (a.dims.size() != rank) {
    throw FormatError(origin + ": " + to_string(a.kind) + " must have " + std::to_string(rank) +
                      " dims, found " + std::to_string(a.dims.size()));
  }
}

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::image: return "image";
    case Kind::sinogram: return "sinogram";
    case Kind::volume: return "volume";
    case Kind::labelmap: return "labelmap";
  }
  return "unknown";
}

Kind kind_from_string(const std::string& name) {
  if (name == "image") return Kind::image;
  if (name == "sinogram") return Kind::sinogram;
  if (name == "volume") return Kind::volume;
  if (name == "labelmap") return Kind::labelmap;
  throw FormatError("unknown artifact kind '" + name + "'");
}

std::string encode(const Artifact& a) {
  const std::size_t n = product(a.dims);
  const std::size_t have = a.kind == Kind::labelmap ? a.labels.size() : a.values.size();
  if (have != n) {
    throw FormatError("artifact payload has " + std::to_string(have) + " elements but dims imply " +
                      std::to_string(n));
  }
  Json header = {{"version", kVersion},
                 {"kind", to_string(a.kind)},
                 {"dims", a.dims},
                 {"dtype", dtype_of(a.kind)},
                 {"provenance", a.provenance.is_null() ? Json::object() : a.provenance}};
  if (a.kind == Kind::sinogram) header["geometry"] = a.geometry;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + n * element_size(a.kind));
  if (a.kind == Kind::labelmap) {
    for (std::int64_t v : a.labels) put_u64(out, static_cast<std::uint64_t>(v));
  } else {
    for (double v : a.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Artifact decode(const std::string& bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, kMagic, sizeof kMagic) != 0) {
    throw FormatError(origin + ": not an artifact file (bad magic)");
  }
  const std::uint32_t hlen = get_u32(p + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) {
    throw FormatError(origin + ": truncated header");
  }
  Json header;
  try {
    header = Json::parse(bytes.substr(12, hlen));
  } catch (const Json::exception& e) {
    throw FormatError(origin + ": header is not valid JSON (" + e.what() + ")");
  }
  Artifact a;
  try {
    if (header.at("version").get<int>() != kVersion) {
      throw FormatError(origin + ": unsupported version " + header.at("version").dump());
    }
    a.kind = kind_from_string(header.at("kind").get<std::string>());
    a.dims = header.at("dims").get<std::vector<int>>();
    if (header.at("dtype").get<std::string>() != dtype_of(a.kind)) {
      throw FormatError(origin + ": dtype " + header.at("dtype").dump() + " does not match kind " +
                        to_string(a.kind));
    }
    a.provenance = header.value("provenance", Json::object());
    if (a.kind == Kind::sinogram) a.geometry = header.at("geometry");
  } catch (const Json::exception& e) {
    throw FormatError(origin + ": malformed header (" + e.what() + ")");
  }
  const std::size_t n = product(a.dims);
  const std::size_t payload = bytes.size() - 12 - hlen;
  if (payload != n * element_size(a.kind)) {
    throw FormatError(origin + ": payload is " + std::to_string(payload) + " bytes, expected " +
                      std::to_string(n * element_size(a.kind)));
  }
  const unsigned char* d = p + 12 + hlen;
  if (a.kind == Kind::labelmap) {
    a.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.labels[i] = static_cast<std::int64_t>(get_u64(d + 8 * i));
  } else {
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.values[i] = std::bit_cast<float>(get_u32(d + 4 * i));
  }
  return a;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("read error on " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write error on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_artifact(const std::filesystem::path& path, const Artifact& a) {
  write_file_atomic(path, encode(a));
}

Artifact read_artifact(const std::filesystem::path& path) {
  return decode(read_file(path), path.string());
}

std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file(path)));
}

Json geometry_to_json(const proj::TiltGeometry& g) {
  return {{"angles_deg", g.angles_deg},
          {"n_detector", g.n_detector},
          {"height", g.height},
          {"width", g.width}};
}

proj::TiltGeometry geometry_from_json(const Json& j) {
  proj::TiltGeometry g;
  try {
    g.angles_deg = j.at("angles_deg").get<std::vector<double>>();
    g.n_detector = j.at("n_detector").get<int>();
    g.height = j.at("height").get<int>();
    g.width = j.at("width").get<int>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed geometry (") + e.what() + ")");
  }
  g.validate();
  return g;
}

Json scenario_to_json(const proj::Scenario& s) {
  return {{"name", s.name}, {"start", s.start_deg}, {"step", s.step_deg}, {"stop", s.stop_deg}};
}

proj::Scenario scenario_from_json(const Json& j) {
  proj::Scenario s;
  try {
    s.name = j.at("name").get<std::string>();
    s.start_deg = j.at("start").get<double>();
    s.step_deg = j.at("step").get<double>();
    s.stop_deg = j.at("stop").get<double>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed scenario (") + e.what() + ")");
  }
  if (s.name.empty()) throw FormatError("scenario name must not be empty");
  return s;
}

void write_image(const std::filesystem::path& path, const proj::Image2D& x, const Json& provenance) {
  write_artifact(path, {Kind::image, {x.height, x.width}, nullptr, provenance, x.data, {}});
}

void write_sinogram(const std::filesystem::path& path, const proj::Sinogram& y,
                    const Json& provenance) {
  write_artifact(path, {Kind::sinogram,
                        {y.geometry.n_angles(), y.geometry.n_detector},
                        geometry_to_json(y.geometry),
                        provenance,
                        y.data,
                        {}});
}

void write_volume(const std::filesystem::path& path, const Volume3D& v, const Json& provenance) {
  write_artifact(path, {Kind::volume, {v.depth, v.height, v.width}, nullptr, provenance, v.data, {}});
}

void write_labelmap(const std::filesystem::path& path, const LabelMap& l, const Json& provenance) {
  write_artifact(path, {Kind::labelmap, l.dims, nullptr, provenance, {}, l.labels});
}

proj::Image2D to_image(const Artifact& a, const std::string& origin) {
  expect_kind(a, Kind::image, origin);
  expect_rank(a, 2, origin);
  return proj::Image2D(a.dims[0], a.dims[1], a.values);
}

proj::Sinogram to_sinogram(const Artifact& a, const std::string& origin) {
  expect_kind(a, Kind::sinogram, origin);
  expect_rank(a, 2, origin);
  proj::Sinogram y(geometry_from_json(a.geometry));
  if (y.geometry.n_angles() != a.dims[0] || y.geometry.n_detector != a.dims[1]) {
    throw FormatError(origin + ": sinogram dims disagree with its geometry");
  }
  y.data = a.values;
  return y;
}

Volume3D to_volume(const Artifact& a, const std::string& origin) {
  expect_kind(a, Kind::volume, origin);
  expect_rank(a, 3, origin);
  Volume3D v(a.dims[0], a.dims[1], a.dims[2]);
  v.data = a.values;
  return v;
}

LabelMap to_labelmap(const Artifact& a, const std::string& origin) {
  expect_kind(a, Kind::labelmap, origin);
  if (a.dims.size() != 2 && a.dims.size() != 3) {
    throw FormatError(origin + ": labelmap must be 2D or 3D");
  }
  LabelMap l;
  l.dims = a.dims;
  l.labels = a.labels;
  for (auto v : l.labels) l.count = std::max(l.count, v);
  return l;
}

proj::Image2D read_image(const std::filesystem::path& path) {
  return to_image(read_artifact(path), path.string());
}

proj::Sinogram read_sinogram(const std::filesystem::path& path) {
  return to_sinogram(read_artifact(path), path.string());
}

Volume3D read_volume(const std::filesystem::path& path) {
  return to_volume(read_artifact(path), path.string());
}

LabelMap read_labelmap(const std::filesystem::path& path) {
  return to_labelmap(read_artifact(path), path.string());
}

void write_pgm(const std::filesystem::path& path, const proj::Image2D& x) {
  double lo = 0.0, hi = 0.0;
  if (!x.data.empty()) {
    lo = hi = x.data[0];
    for (double v : x.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::string out = "P5\n" + std::to_string(x.width) + " " + std::to_string(x.height) + "\n255\n";
  for (double v : x.data) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround((v - lo) * scale))));
  }
  write_file_atomic(path, out);
}

}  // namespace etomo::io
