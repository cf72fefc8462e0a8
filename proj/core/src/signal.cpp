#include "msan/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <fftw3.h>

#include "msan/errors.hpp"

namespace msan::signal {
namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// Owning wrapper around an FFTW plan pair for one transform length.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        time_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        freq_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_, time_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  /// Filters `signal` in place, keeping bins whose frequency lies in [lo, hi).
  void mask(std::span<double> signal, double rate_hz, double lo, double hi) {
    std::copy(signal.begin(), signal.end(), time_);
    fftw_execute(forward_);
    const double bin_hz = rate_hz / static_cast<double>(n_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f < lo || f >= hi) {
        freq_[k][0] = 0.0;
        freq_[k][1] = 0.0;
      }
    }
    fftw_execute(inverse_);
    const double norm = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) signal[i] = time_[i] * norm;
  }

 private:
  std::size_t n_;
  double* time_;
  fftw_complex* freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace

void Recording::validate() const {
  if (!(rate_hz > 0.0)) throw ArgumentError("recording rate must be positive");
  if (samples.rank() != 2) throw ShapeError("recording samples must be [channels x time]");
  if (samples.rows() != channel_names.size()) {
    throw ShapeError("recording has " + std::to_string(samples.rows()) + " rows but " +
                     std::to_string(channel_names.size()) + " channel names");
  }
  std::set<std::string> seen;
  for (const auto& name : channel_names) {
    if (!seen.insert(name).second) throw ArgumentError("duplicate channel name '" + name + "'");
  }
}

const std::vector<BandSpec>& default_bands() {
  static const std::vector<BandSpec> bands{
      {"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 14.0}, {"beta", 14.0, 31.0}, {"gamma", 31.0, 50.0},
  };
  return bands;
}

void validate_bands(const std::vector<BandSpec>& bands) {
  double prev_hi = 0.0;
  for (const auto& b : bands) {
    if (!(b.lo_hz > 0.0 && b.lo_hz < b.hi_hz)) throw ArgumentError("band '" + b.name + "' needs 0 < lo < hi");
    if (b.lo_hz < prev_hi) throw ArgumentError("band '" + b.name + "' overlaps or is out of order");
    prev_hi = b.hi_hz;
  }
}

ElectrodeLayout::ElectrodeLayout(std::size_t grid_h, std::size_t grid_w) : grid_h_(grid_h), grid_w_(grid_w) {
  if (grid_h == 0 || grid_w == 0) throw LayoutError("layout grid dimensions must be positive");
}

void ElectrodeLayout::place(const std::string& channel, std::size_t row, std::size_t col) {
  if (row >= grid_h_ || col >= grid_w_) {
    throw LayoutError("electrode '" + channel + "' at (" + std::to_string(row) + "," + std::to_string(col) +
                      ") lies outside the " + std::to_string(grid_h_) + "x" + std::to_string(grid_w_) + " grid");
  }
  if (placements_.contains(channel)) throw LayoutError("electrode '" + channel + "' placed twice");
  for (const auto& [name, cell] : placements_) {
    if (cell.row == row && cell.col == col) {
      throw LayoutError("electrodes '" + name + "' and '" + channel + "' share a grid cell");
    }
  }
  placements_.emplace(channel, GridCell{row, col});
}

GridCell ElectrodeLayout::cell_of(const std::string& channel) const {
  auto it = placements_.find(channel);
  if (it == placements_.end()) throw LayoutError("channel '" + channel + "' is not in the electrode layout");
  return it->second;
}

std::vector<std::string> ElectrodeLayout::channel_order() const {
  std::vector<std::pair<GridCell, std::string>> cells;
  for (const auto& [name, cell] : placements_) cells.emplace_back(cell, name);
  std::sort(cells.begin(), cells.end());
  std::vector<std::string> names;
  for (auto& c : cells) names.push_back(std::move(c.second));
  return names;
}

ElectrodeLayout parse_layout(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long long line_no = 0;
  std::optional<ElectrodeLayout> layout;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string head;
    if (!(fields >> head)) continue;
    long long a = 0, b = 0;
    if (!(fields >> a >> b) || a < 0 || b < 0) {
      throw FormatError("layout line " + std::to_string(line_no) + ": expected '<name> <row> <col>'", line_no);
    }
    std::string extra;
    if (fields >> extra) throw FormatError("layout line " + std::to_string(line_no) + ": trailing text", line_no);
    if (head == "grid") {
      if (layout) throw FormatError("layout line " + std::to_string(line_no) + ": duplicate grid header", line_no);
      layout.emplace(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
      continue;
    }
    if (!layout) throw FormatError("layout line " + std::to_string(line_no) + ": electrode before 'grid H W'", line_no);
    layout->place(head, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  if (!layout) throw FormatError("layout has no 'grid H W' header");
  return *std::move(layout);
}

ElectrodeLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_layout(buf.str());
}

Recording bandpass(const Recording& rec, const BandSpec& band) {
  rec.validate();
  const double nyquist = rec.rate_hz / 2.0;
  if (!(band.lo_hz > 0.0 && band.lo_hz < band.hi_hz)) throw ArgumentError("band '" + band.name + "' needs 0 < lo < hi");
  if (band.hi_hz >= nyquist) {
    throw ArgumentError("band '" + band.name + "' upper edge " + std::to_string(band.hi_hz) +
                        " Hz is not below the Nyquist frequency " + std::to_string(nyquist) + " Hz");
  }
  Recording out = rec;
  if (rec.length() == 0) return out;
  RealFft fft(rec.length());
  for (std::size_t c = 0; c < rec.channels(); ++c) fft.mask(out.samples.row(c), rec.rate_hz, band.lo_hz, band.hi_hz);
  return out;
}

double differential_entropy(std::span<const double> window, double eps) {
  if (window.size() < 2) throw ArgumentError("differential entropy needs at least 2 samples");
  if (!(eps > 0.0)) throw ArgumentError("variance floor must be positive");
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= static_cast<double>(window.size());
  double ss = 0.0;
  for (double v : window) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(window.size() - 1);
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * std::max(var, eps));
}

std::vector<FeatureMap> extract_features(const Recording& rec, const std::vector<BandSpec>& bands,
                                         const ElectrodeLayout& layout, const FeatureOptions& options) {
  rec.validate();
  validate_bands(bands);
  if (!(options.window_s > 0.0 && options.stride_s > 0.0)) throw ArgumentError("window and stride must be positive");
  const auto window = static_cast<std::size_t>(std::llround(options.window_s * rec.rate_hz));
  const auto stride = static_cast<std::size_t>(std::llround(options.stride_s * rec.rate_hz));
  if (window < 2 || stride < 1) throw ArgumentError("window too short for the sampling rate");
  if (rec.length() < window) {
    throw ArgumentError("recording of " + std::to_string(rec.duration_s()) + " s is shorter than the " +
                        std::to_string(options.window_s) + " s window");
  }
  std::vector<GridCell> cells;
  cells.reserve(rec.channels());
  for (const auto& name : rec.channel_names) cells.push_back(layout.cell_of(name));

  const std::size_t count = (rec.length() - window) / stride + 1;
  const std::size_t h = layout.grid_h(), w = layout.grid_w(), nb = bands.size();
  std::vector<FeatureMap> maps(count);
  for (std::size_t i = 0; i < count; ++i) {
    maps[i].values = Tensor({h, w, nb});
    maps[i].window_index = i;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    const Recording filtered = bandpass(rec, bands[b]);
    for (std::size_t c = 0; c < rec.channels(); ++c) {
      const auto series = filtered.samples.row(c);
      const std::size_t offset = (cells[c].row * w + cells[c].col) * nb + b;
      for (std::size_t i = 0; i < count; ++i) {
        maps[i].values[offset] = differential_entropy(series.subspan(i * stride, window), options.eps);
      }
    }
  }
  return maps;
}

Tensor stack_maps(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw ArgumentError("no feature maps to stack");
  const Shape inner = maps.front().values.dims();
  Shape dims{maps.size()};
  dims.insert(dims.end(), inner.begin(), inner.end());
  Buffer data;
  data.reserve(shape_numel(dims));
  for (const auto& m : maps) {
    if (m.values.dims() != inner) throw ShapeError("feature maps differ in shape");
    data.insert(data.end(), m.values.storage().begin(), m.values.storage().end());
  }
  return Tensor(std::move(dims), std::move(data));
}

}  // namespace msan::signal
