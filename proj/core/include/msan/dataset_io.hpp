#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "msan/signal.hpp"
#include "msan/synth.hpp"
#include "msan/trainer.hpp"

namespace msan::io {

struct DatasetManifest {
  std::array<std::size_t, 3> dims{};
  int num_classes = 0;
  struct Entry {
    int subject_id = 0;
    std::string features_file;
    std::string labels_file;
  };
  std::vector<Entry> subjects;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes features_<s>.mstn ([n x h x w x b]), labels_<s>.csv (`index,label`)
/// per subject and a manifest.txt listing them.
void write_dataset(const std::filesystem::path& dir, const std::vector<synth::SubjectData>& subjects,
                   const std::array<std::size_t, 3>& dims, int num_classes);
DatasetManifest read_manifest(const std::filesystem::path& dir);
std::vector<synth::SubjectData> read_dataset(const std::filesystem::path& dir, DatasetManifest* manifest = nullptr);

std::string format_labels_csv(const std::vector<int>& labels);
std::vector<int> parse_labels_csv(const std::string& text);

/// One channel per row: `name,v0,v1,...`. All rows need the same length;
/// a mismatch throws FormatError carrying the line number.
signal::Recording parse_raw_csv(const std::string& text, double rate_hz);
signal::Recording load_raw_csv(const std::filesystem::path& path, double rate_hz);

/// Fixed-precision real formatting shared by every CSV writer.
std::string format_real(double v);

/// `epoch,class_loss,domain_loss,subdomain_loss,target_acc`
std::string format_metrics_csv(const train::Metrics& metrics);
/// `epoch,loss`
std::string format_loss_csv(const std::vector<double>& losses);
/// `fold,subject_id,accuracy` rows, then `mean,<v>` and `std,<v>`.
std::string format_summary_csv(const train::LosoResult& result);

}  // namespace msan::io
