#pragma once

// Wavelet scattering front-end: Morlet-type filter banks and order-1/2
// scattering coefficient matrices for fixed-length mono segments.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace stx {

struct Signal {
  std::vector<double> samples;
  int sample_rate = 0;

  // Throws Data / InvalidArgument when empty, non-finite or rate <= 0.
  void validate() const;
  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct ScatteringConfig {
  int J = 8;                      // invariance scale, octaves
  std::vector<int> Q{8, 1};       // wavelets per octave, one entry per order
  int M = 2;                      // maximal order
  std::size_t segment_len = 40000;
  int oversampling = 0;
  bool log_coeffs = false;        // opt-in log(eps + x) on the output
  double log_eps = 1e-6;

  void validate() const;
  std::size_t hop() const { return std::size_t{1} << (J - oversampling); }
  std::size_t frame_count() const { return segment_len / hop(); }
};

struct BandPassFilter {
  int index = 0;            // position in this order's bank, 0 = highest frequency
  double xi = 0.0;          // center frequency, cycles per sample
  double sigma = 0.0;       // Gaussian width in cycles per sample
  double center_hz = 0.0;
  double scale = 1.0;       // dilation 2^(index / Q)
  std::vector<double> response;  // real frequency response on the padded grid
};

struct PathDescriptor {
  int order = 0;
  std::vector<int> scales;  // filter index per order, length == order

  friend bool operator==(const PathDescriptor&, const PathDescriptor&) = default;
  std::string label() const;
};

struct FilterBank {
  int sample_rate = 0;
  std::size_t segment_len = 0;
  std::size_t padded_len = 0;
  std::size_t pad_left = 0;
  std::size_t hop = 1;
  std::size_t frames = 0;
  std::vector<std::vector<BandPassFilter>> psi;  // psi[m] is the order m+1 bank
  std::vector<double> phi;
  std::vector<PathDescriptor> paths;

  std::size_t path_count() const { return paths.size(); }
  std::size_t order_path_count(int order) const;

  // Per-order Littlewood-Paley sum |phi|^2 + 1/2 sum_l (|psi_l(w)|^2 + |psi_l(-w)|^2),
  // maximized over frequency. Bounded by 1 after construction.
  double littlewood_paley_max(int order) const;
};

struct ScatteringMatrix {
  Eigen::MatrixXd values;  // paths x frames
  std::vector<PathDescriptor> path_index;
  double frame_rate = 0.0;

  std::size_t paths() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t frames() const { return static_cast<std::size_t>(values.cols()); }
  void validate() const;
};

// Signed frequency of DFT bin k on an n-point grid, in [-0.5, 0.5).
double bin_frequency(std::size_t k, std::size_t n);

// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

FilterBank build_filter_bank(const ScatteringConfig& config, int sample_rate);

// Reflection-pads the segment onto the bank's padded grid.
std::vector<double> reflect_pad(const std::vector<double>& x, std::size_t pad_left, std::size_t padded_len);

ScatteringMatrix scattering_transform(const Signal& signal, const FilterBank& bank,
                                      const ScatteringConfig& config);

// Same contract computed with naive DFTs and time-domain circular convolution.
// Quadratic in the padded length; meant for verification on short segments.
ScatteringMatrix scattering_transform_direct(const Signal& signal, const FilterBank& bank,
                                             const ScatteringConfig& config);

Eigen::VectorXd path_average(const ScatteringMatrix& matrix);

// Debug dump: header `path_order,scales,frame_0..frame_{F-1}`, 9 significant digits.
void write_scattering_csv(std::ostream& out, const ScatteringMatrix& matrix);

}  // namespace stx
