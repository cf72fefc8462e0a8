#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "msan/tensor.hpp"

namespace msan::signal {

/// Multichannel time series. `samples` is [channels x time].
struct Recording {
  std::vector<std::string> channel_names;
  double rate_hz = 0.0;
  Tensor samples;

  std::size_t channels() const { return samples.rows(); }
  std::size_t length() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(length()) / rate_hz; }
  /// Throws ArgumentError on duplicate names, row-count mismatch or a
  /// non-positive rate.
  void validate() const;
};

struct BandSpec {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

/// delta 1-4, theta 4-8, alpha 8-14, beta 14-31, gamma 31-50 Hz.
const std::vector<BandSpec>& default_bands();

/// Checks 0 < lo < hi per band, and ordering without overlap across bands.
void validate_bands(const std::vector<BandSpec>& bands);

struct GridCell {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const GridCell&) const = default;
};

/// Placement of named electrodes on a grid_h x grid_w map.
class ElectrodeLayout {
 public:
  ElectrodeLayout(std::size_t grid_h, std::size_t grid_w);

  /// Adds a channel. Throws LayoutError on duplicate names, cells already
  /// taken, or cells outside the grid.
  void place(const std::string& channel, std::size_t row, std::size_t col);

  std::size_t grid_h() const noexcept { return grid_h_; }
  std::size_t grid_w() const noexcept { return grid_w_; }
  const std::map<std::string, GridCell>& placements() const noexcept { return placements_; }
  /// Throws LayoutError naming the channel when it is not placed.
  GridCell cell_of(const std::string& channel) const;
  bool contains(const std::string& channel) const { return placements_.contains(channel); }
  /// Channel names in row-major grid order.
  std::vector<std::string> channel_order() const;

 private:
  std::size_t grid_h_;
  std::size_t grid_w_;
  std::map<std::string, GridCell> placements_;
};

/// Layout text format:
///   # comment
///   grid H W
///   NAME row col
ElectrodeLayout parse_layout(const std::string& text);
ElectrodeLayout load_layout(const std::filesystem::path& path);

/// One [grid_h x grid_w x bands] differential-entropy block.
struct FeatureMap {
  Tensor values;
  std::size_t window_index = 0;
};

/// Ideal FFT band-pass: bins with frequency outside [lo_hz, hi_hz) are zeroed.
Recording bandpass(const Recording& rec, const BandSpec& band);

/// 0.5 * ln(2 pi e * max(var, eps)) with the unbiased sample variance.
double differential_entropy(std::span<const double> window, double eps = 1e-8);

struct FeatureOptions {
  double window_s = 1.0;
  double stride_s = 1.0;
  double eps = 1e-8;
};

/// Band split, per-window DE per channel, placement on the layout grid.
/// Returns floor((T - window) / stride) + 1 maps in time order.
std::vector<FeatureMap> extract_features(const Recording& rec, const std::vector<BandSpec>& bands,
                                         const ElectrodeLayout& layout, const FeatureOptions& options = {});

/// Stacks maps into [n x h x w x b].
Tensor stack_maps(const std::vector<FeatureMap>& maps);

}  // namespace msan::signal
