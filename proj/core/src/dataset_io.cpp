#include "msan/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msan/errors.hpp"
#include "msan/tensor_io.hpp"

namespace msan::io {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template <typename T>
T parse_field(const std::string& field, long line, const char* what) {
  T out{};
  std::size_t b = field.find_first_not_of(" \t\r");
  std::size_t e = field.find_last_not_of(" \t\r");
  if (b == std::string::npos) throw FormatError("line " + std::to_string(line) + ": empty " + what, line);
  const char* first = field.data() + b;
  const char* last = field.data() + e + 1;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw FormatError("line " + std::to_string(line) + ": cannot parse " + what + " '" + field + "'", line);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<synth::SubjectData>& subjects,
                   const std::array<std::size_t, 3>& dims, int num_classes) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  manifest << "# msan dataset manifest\n"
           << "version 1\n"
           << "dims " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n'
           << "classes " << num_classes << '\n';
  for (const auto& s : subjects) {
    const std::string feat = "features_" + std::to_string(s.subject_id) + ".mstn";
    const std::string lab = "labels_" + std::to_string(s.subject_id) + ".csv";
    save_tensor(dir / feat, s.matrix().reshaped({s.size(), dims[0], dims[1], dims[2]}));
    write_text_atomic(dir / lab, format_labels_csv(s.labels));
    manifest << "subject " << s.subject_id << ' ' << feat << ' ' << lab << '\n';
  }
  write_text_atomic(dir / kManifestName, manifest.str());
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  if (!std::filesystem::exists(path)) throw DataError("no dataset manifest at " + path.string());
  std::istringstream in(slurp(path));
  DatasetManifest m;
  std::string line;
  long line_no = 0;
  bool has_version = false, has_dims = false, has_classes = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + why, line_no);
    };
    if (key == "version") {
      int v = 0;
      if (!(fields >> v)) fail("missing version");
      if (v != 1) fail("unsupported manifest version " + std::to_string(v));
      has_version = true;
    } else if (key == "dims") {
      if (!(fields >> m.dims[0] >> m.dims[1] >> m.dims[2])) fail("expected 'dims H W B'");
      has_dims = true;
    } else if (key == "classes") {
      if (!(fields >> m.num_classes) || m.num_classes < 2) fail("expected 'classes K' with K >= 2");
      has_classes = true;
    } else if (key == "subject") {
      DatasetManifest::Entry e;
      if (!(fields >> e.subject_id >> e.features_file >> e.labels_file)) {
        fail("expected 'subject ID FEATURES LABELS'");
      }
      m.subjects.push_back(std::move(e));
    } else {
      fail("unknown manifest key '" + key + "'");
    }
  }
  if (!has_version || !has_dims || !has_classes) throw FormatError("manifest lacks version, dims or classes");
  if (m.subjects.empty()) throw DataError("manifest lists no subjects");
  return m;
}

std::vector<synth::SubjectData> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest_out) {
  const DatasetManifest m = read_manifest(dir);
  std::vector<synth::SubjectData> subjects;
  for (const auto& e : m.subjects) {
    const Tensor t = load_tensor(dir / e.features_file);
    if (t.rank() != 4 || t.dim(1) != m.dims[0] || t.dim(2) != m.dims[1] || t.dim(3) != m.dims[2]) {
      throw DataError(e.features_file + " has dims " + shape_string(t.dims()) + ", manifest says [n x " +
                      std::to_string(m.dims[0]) + "x" + std::to_string(m.dims[1]) + "x" + std::to_string(m.dims[2]) +
                      "]");
    }
    synth::SubjectData s;
    s.subject_id = e.subject_id;
    s.labels = parse_labels_csv(slurp(dir / e.labels_file));
    if (s.labels.size() != t.dim(0)) {
      throw DataError(e.labels_file + " has " + std::to_string(s.labels.size()) + " labels for " +
                      std::to_string(t.dim(0)) + " samples");
    }
    for (int l : s.labels)
      if (l < 0 || l >= m.num_classes) throw DataError(e.labels_file + ": label " + std::to_string(l) + " out of range");
    const std::size_t width = m.dims[0] * m.dims[1] * m.dims[2];
    for (std::size_t i = 0; i < t.dim(0); ++i) {
      std::vector<double> v(t.data().begin() + static_cast<std::ptrdiff_t>(i * width),
                            t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
      s.features.push_back({Tensor({m.dims[0], m.dims[1], m.dims[2]}, std::move(v)), i});
    }
    subjects.push_back(std::move(s));
  }
  if (manifest_out) *manifest_out = m;
  return subjects;
}

std::string format_labels_csv(const std::vector<int>& labels) {
  std::ostringstream os;
  os << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) os << i << ',' << labels[i] << '\n';
  return os.str();
}

std::vector<int> parse_labels_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "index,label") throw FormatError("labels CSV must start with 'index,label'", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw FormatError("line " + std::to_string(line_no) + ": expected 'index,label'", line_no);
    const auto index = parse_field<std::size_t>(fields[0], line_no, "index");
    if (index != labels.size()) {
      throw FormatError("line " + std::to_string(line_no) + ": index " + std::to_string(index) + " out of sequence",
                        line_no);
    }
    labels.push_back(parse_field<int>(fields[1], line_no, "label"));
  }
  return labels;
}

signal::Recording parse_raw_csv(const std::string& text, double rate_hz) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  signal::Recording rec;
  rec.rate_hz = rate_hz;
  Buffer data;
  std::size_t length = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_csv(line);
    if (fields.size() < 2) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'name,v0,v1,...'", line_no);
    }
    if (rec.channel_names.empty()) {
      length = fields.size() - 1;
    } else if (fields.size() - 1 != length) {
      throw FormatError("line " + std::to_string(line_no) + ": row has " + std::to_string(fields.size() - 1) +
                            " samples, expected " + std::to_string(length),
                        line_no);
    }
    rec.channel_names.push_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) data.push_back(parse_field<double>(fields[i], line_no, "sample"));
  }
  if (rec.channel_names.empty()) throw FormatError("raw CSV has no channel rows");
  rec.samples = Tensor({rec.channel_names.size(), length}, std::move(data));
  rec.validate();
  return rec;
}

signal::Recording load_raw_csv(const std::filesystem::path& path, double rate_hz) {
  return parse_raw_csv(slurp(path), rate_hz);
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string format_metrics_csv(const train::Metrics& metrics) {
  std::ostringstream os;
  os << "epoch,class_loss,domain_loss,subdomain_loss,target_acc\n";
  for (const auto& e : metrics.epochs) {
    os << e.epoch << ',' << format_real(e.class_loss) << ',' << format_real(e.domain_loss) << ','
       << format_real(e.subdomain_loss) << ',' << format_real(e.target_acc) << '\n';
  }
  return os.str();
}

std::string format_loss_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << format_real(losses[i]) << '\n';
  return os.str();
}

std::string format_summary_csv(const train::LosoResult& result) {
  std::ostringstream os;
  os << "fold,subject_id,accuracy\n";
  for (const auto& f : result.folds) os << f.fold << ',' << f.subject_id << ',' << format_real(f.accuracy) << '\n';
  os << "mean," << format_real(result.mean) << '\n' << "std," << format_real(result.std) << '\n';
  return os.str();
}

}  // namespace msan::io
