#pragma once

#include <filesystem>
#include <string>

#include "etomo/deep/unet.hpp"
#include "etomo/io/artifact.hpp"

namespace etomo::deep {

/// Model file layout:
///   8 bytes   magic "ETOMOCK1"
///   4 bytes   manifest length N, little-endian uint32
///   N bytes   JSON {format, version, spec{channels, in_channels},
///             params[{name, shape}], count, meta}
///   payload   every parameter as little-endian float32, in manifest order
///             (encoder blocks, decoder blocks deepest first, head; kernel
///             [Cout,Cin,k,k] then bias [Cout] per layer)
struct Checkpoint {
  UNet<float> model;
  io::Json meta;  // free-form: seed, training config, best epoch, validation loss
};

std::string encode_checkpoint(const UNet<float>& model, const io::Json& meta);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void write_checkpoint(const std::filesystem::path& path, const UNet<float>& model,
                      const io::Json& meta);
Checkpoint read_checkpoint(const std::filesystem::path& path);

io::Json unet_spec_to_json(const UNetSpec& s);
UNetSpec unet_spec_from_json(const io::Json& j);

}  // namespace etomo::deep
