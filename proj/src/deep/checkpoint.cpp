#include "etomo/deep/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace etomo::deep {
namespace {

constexpr char kMagic[] = "ETOMOCK1";
constexpr std::size_t kMagicLen = 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

io::Json unet_spec_to_json(const UNetSpec& s) {
  return {{"channels", s.channels}, {"in_channels", s.in_channels}};
}

UNetSpec unet_spec_from_json(const io::Json& j) {
  UNetSpec s;
  s.channels = j.at("channels").get<std::vector<int>>();
  s.in_channels = j.at("in_channels").get<int>();
  s.validate();
  return s;
}

std::string encode_checkpoint(const UNet<float>& model, const io::Json& meta) {
  io::Json manifest;
  manifest["format"] = "etomo-unet";
  manifest["version"] = 1;
  manifest["spec"] = unet_spec_to_json(model.spec);
  manifest["params"] = io::Json::array();
  for (const auto& e : model.params.entries()) {
    manifest["params"].push_back({{"name", e.name}, {"shape", e.tensor->shape}});
  }
  manifest["count"] = model.params.count();
  manifest["meta"] = meta;
  const std::string text = manifest.dump();

  std::string out(kMagic, kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + 4 * model.params.count());
  for (const auto& e : model.params.entries()) {
    for (float v : e.tensor->value) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) -> io::FormatError {
    return io::FormatError(origin + ": " + why);
  };
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw fail("not a model checkpoint");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t hlen = get_u32(p + kMagicLen);
  if (bytes.size() < kMagicLen + 4 + hlen) throw fail("truncated manifest");
  io::Json manifest;
  try {
    manifest = io::Json::parse(bytes.substr(kMagicLen + 4, hlen));
  } catch (const io::Json::exception& e) {
    throw fail(std::string("bad manifest: ") + e.what());
  }

  Checkpoint ck;
  try {
    if (manifest.at("format") != "etomo-unet" || manifest.at("version") != 1) {
      throw fail("unsupported checkpoint format");
    }
    ck.model = build_unet<float>(unet_spec_from_json(manifest.at("spec")), 0);
    ck.meta = manifest.value("meta", io::Json::object());
    const auto& params = manifest.at("params");
    if (params.size() != ck.model.params.size()) throw fail("parameter list does not match spec");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = ck.model.params[i];
      if (params[i].at("name") != e.name ||
          params[i].at("shape").get<ad::Shape>() != e.tensor->shape) {
        throw fail("parameter " + std::to_string(i) + " does not match spec");
      }
    }
  } catch (const io::Json::exception& e) {
    throw fail(std::string("bad manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw fail(std::string("bad spec: ") + e.what());
  }

  const std::size_t offset = kMagicLen + 4 + hlen;
  if (bytes.size() != offset + 4 * ck.model.params.count()) throw fail("payload size mismatch");
  const unsigned char* q = p + offset;
  for (const auto& e : ck.model.params.entries()) {
    for (float& v : e.tensor->value) {
      v = std::bit_cast<float>(get_u32(q));
      q += 4;
    }
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const UNet<float>& model,
                      const io::Json& meta) {
  io::write_file_atomic(path, encode_checkpoint(model, meta));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace etomo::deep
