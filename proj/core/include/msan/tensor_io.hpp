#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msan/nets.hpp"
#include "msan/tensor.hpp"

namespace msan::io {

/// TensorFile layout (all integers and reals little-endian):
///   "MSTN" | u32 version | u32 rank | u64 dims[rank] | f64 payload[prod(dims)]
inline constexpr char kTensorMagic[4] = {'M', 'S', 'T', 'N'};
/// Checkpoint layout:
///   "MSCK" | u32 version | u32 count | count x (u32 name_len | name | tensor body)
/// where a tensor body is a TensorFile without its magic.
inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'C', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;

using Bytes = std::vector<unsigned char>;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

Bytes encode_tensor(const Tensor& t);
/// Throws FormatError (with byte offset) on bad magic, unknown version or truncation.
Tensor decode_tensor(const Bytes& bytes);

Bytes encode_checkpoint(const NamedTensors& entries);
NamedTensors decode_checkpoint(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const Bytes& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Parameters plus one `<prefix>.activation` entry per network
/// (0 = relu, 1 = tanh). Prefixes: gf, dc, dd for a bundle; enc, dec for an
/// autoencoder.
NamedTensors bundle_entries(const nets::ModelBundle& bundle);
nets::ModelBundle bundle_from_entries(const NamedTensors& entries);
NamedTensors autoencoder_entries(const nets::Autoencoder& ae);
nets::Autoencoder autoencoder_from_entries(const NamedTensors& entries);

}  // namespace msan::io
