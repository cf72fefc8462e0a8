#include "msan/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "msan/errors.hpp"

namespace msan::io {
namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const Bytes& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated file: expected " + std::string(what) + " at byte offset " + std::to_string(pos_),
                        static_cast<long long>(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  void magic(const char (&expected)[4], const char* kind) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) {
      throw FormatError(std::string("not a ") + kind + " file: bad magic", static_cast<long long>(pos_));
    }
    pos_ += 4;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const Bytes& bytes_;
  std::size_t pos_ = 0;
};

void put_body(Bytes& out, const Tensor& t) {
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_u64(out, d);
  for (double v : t.data()) put_f64(out, v);
}

Tensor read_body(Reader& r) {
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version), static_cast<long long>(version_at));
  }
  const std::uint32_t rank = r.u32("rank");
  if (rank == 0) throw FormatError("tensor rank must be positive", static_cast<long long>(r.offset() - 4));
  Shape dims(rank);
  std::size_t numel = 1;
  for (auto& d : dims) {
    const std::uint64_t v = r.u64("dimension");
    d = static_cast<std::size_t>(v);
    if (d != 0 && numel > (std::size_t{1} << 48) / d) {
      throw FormatError("tensor dims too large", static_cast<long long>(r.offset() - 8));
    }
    numel *= d;
  }
  r.need(numel * 8, "payload");
  Buffer data(numel);
  for (auto& v : data) v = r.f64("payload");
  return Tensor(std::move(dims), std::move(data));
}

void add_mlp(NamedTensors& out, const std::string& prefix, const nets::Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.emplace_back(base + ".weight", mlp.weights[l].value);
    out.emplace_back(base + ".bias", mlp.biases[l].value);
  }
  out.emplace_back(prefix + ".activation",
                   Tensor::scalar(mlp.spec.activation == nets::Activation::relu ? 0.0 : 1.0));
}

nets::Mlp take_mlp(const std::map<std::string, const Tensor*>& index, const std::string& prefix) {
  nets::Mlp mlp;
  auto act = index.find(prefix + ".activation");
  if (act == index.end()) throw FormatError("checkpoint lacks '" + prefix + ".activation'");
  const double code = (*act->second)[0];
  if (code != 0.0 && code != 1.0) throw FormatError("bad activation code for '" + prefix + "'");
  mlp.spec.activation = code == 0.0 ? nets::Activation::relu : nets::Activation::tanh;
  for (std::size_t l = 0;; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    auto w = index.find(base + ".weight");
    auto b = index.find(base + ".bias");
    if (w == index.end() && b == index.end()) break;
    if (w == index.end() || b == index.end()) throw FormatError("checkpoint layer '" + base + "' is incomplete");
    const Tensor& wt = *w->second;
    const Tensor& bt = *b->second;
    if (wt.rank() != 2 || bt.rank() != 1 || bt.size() != wt.cols()) {
      throw FormatError("checkpoint layer '" + base + "' has inconsistent shapes");
    }
    if (l == 0) mlp.spec.widths.push_back(wt.rows());
    if (wt.rows() != mlp.spec.widths.back()) throw FormatError("checkpoint layer '" + base + "' does not chain");
    mlp.spec.widths.push_back(wt.cols());
    mlp.weights.emplace_back(base + ".weight", wt);
    mlp.biases.emplace_back(base + ".bias", bt);
  }
  if (mlp.weights.empty()) throw FormatError("checkpoint has no layers for '" + prefix + "'");
  return mlp;
}

std::map<std::string, const Tensor*> index_entries(const NamedTensors& entries) {
  std::map<std::string, const Tensor*> index;
  for (const auto& [name, t] : entries) index.emplace(name, &t);
  return index;
}

}  // namespace

Bytes encode_tensor(const Tensor& t) {
  Bytes out(std::begin(kTensorMagic), std::end(kTensorMagic));
  put_body(out, t);
  return out;
}

Tensor decode_tensor(const Bytes& bytes) {
  Reader r(bytes);
  r.magic(kTensorMagic, "tensor");
  Tensor t = read_body(r);
  if (!r.at_end()) throw FormatError("trailing bytes after tensor payload", static_cast<long long>(r.offset()));
  return t;
}

Bytes encode_checkpoint(const NamedTensors& entries) {
  std::set<std::string> names;
  for (const auto& e : entries)
    if (!names.insert(e.first).second) throw ArgumentError("duplicate checkpoint entry '" + e.first + "'");
  Bytes out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_body(out, t);
  }
  return out;
}

NamedTensors decode_checkpoint(const Bytes& bytes) {
  Reader r(bytes);
  r.magic(kCheckpointMagic, "checkpoint");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), static_cast<long long>(version_at));
  }
  const std::uint32_t count = r.u32("entry count");
  NamedTensors entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32("name length");
    std::string name = r.text(len, "entry name");
    if (!names.insert(name).second) {
      throw FormatError("duplicate checkpoint entry '" + name + "'", static_cast<long long>(at));
    }
    entries.emplace_back(std::move(name), read_body(r));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint entries", static_cast<long long>(r.offset()));
  return entries;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const Bytes& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, Bytes(text.begin(), text.end()));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, encode_tensor(t)); }
Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries) {
  write_file_atomic(path, encode_checkpoint(entries));
}
NamedTensors load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

NamedTensors bundle_entries(const nets::ModelBundle& bundle) {
  NamedTensors out;
  add_mlp(out, "gf", bundle.feature);
  add_mlp(out, "dc", bundle.classifier);
  add_mlp(out, "dd", bundle.domain);
  return out;
}

nets::ModelBundle bundle_from_entries(const NamedTensors& entries) {
  const auto index = index_entries(entries);
  nets::ModelBundle b;
  b.feature = take_mlp(index, "gf");
  b.classifier = take_mlp(index, "dc");
  b.domain = take_mlp(index, "dd");
  try {
    b.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint does not hold a valid model bundle: ") + e.what());
  }
  return b;
}

NamedTensors autoencoder_entries(const nets::Autoencoder& ae) {
  NamedTensors out;
  add_mlp(out, "enc", ae.encoder);
  add_mlp(out, "dec", ae.decoder);
  return out;
}

nets::Autoencoder autoencoder_from_entries(const NamedTensors& entries) {
  const auto index = index_entries(entries);
  nets::Autoencoder ae;
  ae.encoder = take_mlp(index, "enc");
  ae.decoder = take_mlp(index, "dec");
  try {
    ae.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint does not hold a valid autoencoder: ") + e.what());
  }
  return ae;
}

}  // namespace msan::io
