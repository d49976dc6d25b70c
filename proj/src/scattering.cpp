#include "stx/scattering.hpp"

#include "stx/error.hpp"
#include "stx/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <sstream>

namespace stx {
namespace {

using cplx = std::complex<double>;
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// Width of the low-pass Gaussian at J = 0, in cycles per sample.
constexpr double kPhiSigma0 = 0.1;

double xi_max(int q) { return std::max(1.0 / (1.0 + std::pow(2.0, 3.0 / q)), 0.35); }

double half_width(double xi, int q) { return xi * (1.0 - std::pow(2.0, -1.0 / q)); }

double gaussian(double w, double sigma) { return std::exp(-w * w / (2.0 * sigma * sigma)); }

std::vector<BandPassFilter> make_order_bank(int J, int q, std::size_t padded_len, int sample_rate) {
  const double hwhm_to_sigma = 1.0 / std::sqrt(2.0 * std::log(2.0));
  std::vector<BandPassFilter> bank;
  const int count = J * q;
  bank.reserve(count);
  for (int j = 0; j < count; ++j) {
    BandPassFilter f;
    f.index = j;
    f.scale = std::pow(2.0, static_cast<double>(j) / q);
    f.xi = xi_max(q) / f.scale;
    f.sigma = half_width(f.xi, q) * hwhm_to_sigma;
    f.center_hz = f.xi * sample_rate;
    // Morlet correction: subtract a scaled Gaussian at DC so the response vanishes at 0.
    const double beta = gaussian(f.xi, f.sigma);
    f.response.resize(padded_len);
    for (std::size_t k = 0; k < padded_len; ++k) {
      const double w = bin_frequency(k, padded_len);
      f.response[k] = gaussian(w - f.xi, f.sigma) - beta * gaussian(w, f.sigma);
    }
    bank.push_back(std::move(f));
  }
  return bank;
}

// Half the two-sided energy of the bank at bin k (real input signals see both w and -w).
double bank_energy(const std::vector<BandPassFilter>& bank, std::size_t k, std::size_t n) {
  const std::size_t mirror = (n - k) % n;
  double acc = 0.0;
  for (const auto& f : bank) acc += f.response[k] * f.response[k] + f.response[mirror] * f.response[mirror];
  return 0.5 * acc;
}

// Rescales the wavelets so |phi|^2 + bank energy <= 1 at every bin.
void normalize_littlewood_paley(std::vector<BandPassFilter>& bank, const std::vector<double>& phi) {
  const std::size_t n = phi.size();
  double gain2 = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = bank_energy(bank, k, n);
    if (e <= 1e-300) continue;
    const double room = std::max(0.0, 1.0 - phi[k] * phi[k]);
    gain2 = std::min(gain2, room / e);
  }
  // Keep a hair of headroom so rounding never pushes the bound above 1.
  const double gain = std::sqrt(gain2) * (1.0 - 1e-12);
  for (auto& f : bank)
    for (auto& v : f.response) v *= gain;
}

bool admissible(const BandPassFilter& first, int q1, const BandPassFilter& second, int q2) {
  if (second.xi >= first.xi) return false;
  // The envelope |x * psi_1| occupies roughly [0, full bandwidth of psi_1].
  const double envelope_bw = 2.0 * half_width(first.xi, q1);
  return second.xi - half_width(second.xi, q2) < envelope_bw;
}

std::size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

void check_inputs(const Signal& signal, const FilterBank& bank, const ScatteringConfig& config) {
  signal.validate();
  require(signal.size() == config.segment_len, ErrorKind::Shape,
          "signal length " + std::to_string(signal.size()) + " != segment_len " +
              std::to_string(config.segment_len));
  require(bank.segment_len == config.segment_len && bank.hop == config.hop() &&
              bank.psi.size() == static_cast<std::size_t>(config.M),
          ErrorKind::Shape, "filter bank was built for a different configuration");
  require(signal.sample_rate == bank.sample_rate, ErrorKind::Shape, "sample rate differs from filter bank");
}

void finish(ScatteringMatrix& out, const ScatteringConfig& config) {
  if (config.log_coeffs) out.values = (out.values.array() + config.log_eps).log().matrix();
  require(out.values.allFinite(), ErrorKind::Numeric, "non-finite scattering coefficient");
}

// Low-pass, subsample by `hop` and crop to the segment frames, all in the
// Fourier domain: folding the spectrum P/hop-periodically is equivalent to
// sampling every hop-th output point.
void lowpass_frames(std::vector<cplx>& spectrum, const FilterBank& bank, RowRef row) {
  const std::size_t n = bank.padded_len;
  const std::size_t m = n / bank.hop;
  std::vector<cplx> folded(m, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) folded[k % m] += spectrum[k] * bank.phi[k];
  fft::inverse(folded);
  const double inv_hop = 1.0 / static_cast<double>(bank.hop);
  const std::size_t first = bank.pad_left / bank.hop;
  for (std::size_t f = 0; f < bank.frames; ++f) row[f] = std::max(0.0, folded[first + f].real() * inv_hop);
}

std::vector<cplx> to_complex(const std::vector<double>& x) {
  std::vector<cplx> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return cplx{v, 0.0}; });
  return out;
}

// |IFFT(spectrum * filter)| followed by a forward FFT, i.e. the spectrum of the next-layer envelope.
std::vector<cplx> envelope_spectrum(const std::vector<cplx>& spectrum, const std::vector<double>& filter) {
  std::vector<cplx> work(spectrum.size());
  for (std::size_t k = 0; k < work.size(); ++k) work[k] = spectrum[k] * filter[k];
  fft::inverse(work);
  for (auto& v : work) v = cplx{std::abs(v), 0.0};
  fft::forward(work);
  return work;
}

// Naive circular convolution helpers for the verification path.
struct DirectKernel {
  std::vector<cplx> twiddle;  // e^{+2 pi i m / n}

  explicit DirectKernel(std::size_t n) : twiddle(n) {
    for (std::size_t m = 0; m < n; ++m) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
      twiddle[m] = cplx{std::cos(a), std::sin(a)};
    }
  }

  std::vector<cplx> taps(const std::vector<double>& response) const {
    const std::size_t n = twiddle.size();
    std::vector<cplx> h(n);
    for (std::size_t t = 0; t < n; ++t) {
      cplx acc{0.0, 0.0};
      for (std::size_t k = 0; k < n; ++k) acc += response[k] * twiddle[(k * t) % n];
      h[t] = acc / static_cast<double>(n);
    }
    return h;
  }

  static cplx convolve_at(const std::vector<cplx>& h, const std::vector<double>& x, std::size_t t) {
    const std::size_t n = x.size();
    cplx acc{0.0, 0.0};
    for (std::size_t m = 0; m < n; ++m) acc += h[m] * x[(t + n - m) % n];
    return acc;
  }

  static std::vector<double> modulus_conv(const std::vector<cplx>& h, const std::vector<double>& x) {
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = std::abs(convolve_at(h, x, t));
    return out;
  }
};

void direct_frames(const std::vector<cplx>& phi_taps, const std::vector<double>& x, const FilterBank& bank,
                   RowRef row) {
  for (std::size_t f = 0; f < bank.frames; ++f) {
    const std::size_t t = bank.pad_left + f * bank.hop;
    row[f] = std::max(0.0, DirectKernel::convolve_at(phi_taps, x, t).real());
  }
}

}  // namespace

void Signal::validate() const {
  require(sample_rate > 0, ErrorKind::InvalidArgument, "sample_rate must be positive");
  require(!samples.empty(), ErrorKind::Data, "signal is empty");
  for (std::size_t i = 0; i < samples.size(); ++i)
    require(std::isfinite(samples[i]), ErrorKind::Data, "non-finite sample at index " + std::to_string(i));
}

void ScatteringConfig::validate() const {
  require(J >= 1 && J < 31, ErrorKind::InvalidConfig, "J must be a positive integer");
  require(M == 1 || M == 2, ErrorKind::InvalidConfig, "M must be 1 or 2");
  require(Q.size() == static_cast<std::size_t>(M), ErrorKind::InvalidConfig, "Q must have one entry per order");
  for (int q : Q) require(q >= 1, ErrorKind::InvalidConfig, "Q entries must be positive");
  require(segment_len > 0, ErrorKind::InvalidConfig, "segment_len must be positive");
  require((std::size_t{1} << J) <= segment_len, ErrorKind::InvalidConfig, "2^J exceeds segment_len");
  require(oversampling >= 0 && oversampling <= J, ErrorKind::InvalidConfig, "oversampling must lie in [0, J]");
  require(log_eps > 0.0, ErrorKind::InvalidConfig, "log epsilon must be positive");
}

void ScatteringMatrix::validate() const {
  require(values.rows() == static_cast<Eigen::Index>(path_index.size()), ErrorKind::Shape,
          "row count does not match path index");
  require(values.allFinite(), ErrorKind::Data, "scattering matrix has non-finite entries");
}

std::string PathDescriptor::label() const {
  std::string s;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (i) s += ':';
    s += std::to_string(scales[i]);
  }
  return s.empty() ? "-" : s;
}

double bin_frequency(std::size_t k, std::size_t n) {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return 2 * k < n ? kk / nn : (kk - nn) / nn;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t FilterBank::order_path_count(int order) const {
  return static_cast<std::size_t>(
      std::count_if(paths.begin(), paths.end(), [order](const PathDescriptor& p) { return p.order == order; }));
}

double FilterBank::littlewood_paley_max(int order) const {
  const auto& bank = psi.at(static_cast<std::size_t>(order - 1));
  double worst = 0.0;
  for (std::size_t k = 0; k < padded_len; ++k)
    worst = std::max(worst, phi[k] * phi[k] + bank_energy(bank, k, padded_len));
  return worst;
}

FilterBank build_filter_bank(const ScatteringConfig& config, int sample_rate) {
  config.validate();
  require(sample_rate > 0, ErrorKind::InvalidArgument, "sample_rate must be positive");

  FilterBank bank;
  bank.sample_rate = sample_rate;
  bank.segment_len = config.segment_len;
  bank.hop = config.hop();
  bank.frames = config.frame_count();
  const std::size_t support = std::size_t{1} << config.J;
  bank.padded_len = next_pow2(config.segment_len + 2 * support);
  // pad_left is a multiple of the hop so output frames land on the folded grid.
  bank.pad_left = ((bank.padded_len - config.segment_len) / 2 / bank.hop) * bank.hop;

  const double phi_sigma = kPhiSigma0 / static_cast<double>(support);
  bank.phi.resize(bank.padded_len);
  for (std::size_t k = 0; k < bank.padded_len; ++k) bank.phi[k] = gaussian(bin_frequency(k, bank.padded_len), phi_sigma);

  for (int m = 0; m < config.M; ++m) {
    auto order_bank = make_order_bank(config.J, config.Q[m], bank.padded_len, sample_rate);
    normalize_littlewood_paley(order_bank, bank.phi);
    bank.psi.push_back(std::move(order_bank));
  }

  bank.paths.push_back(PathDescriptor{0, {}});
  for (const auto& f : bank.psi[0]) bank.paths.push_back(PathDescriptor{1, {f.index}});
  if (config.M == 2) {
    for (const auto& f1 : bank.psi[0])
      for (const auto& f2 : bank.psi[1])
        if (admissible(f1, config.Q[0], f2, config.Q[1])) bank.paths.push_back(PathDescriptor{2, {f1.index, f2.index}});
  }
  return bank;
}

std::vector<double> reflect_pad(const std::vector<double>& x, std::size_t pad_left, std::size_t padded_len) {
  std::vector<double> out(padded_len);
  const auto n = static_cast<long long>(x.size());
  for (std::size_t i = 0; i < padded_len; ++i)
    out[i] = x[reflect_index(static_cast<long long>(i) - static_cast<long long>(pad_left), n)];
  return out;
}

ScatteringMatrix scattering_transform(const Signal& signal, const FilterBank& bank, const ScatteringConfig& config) {
  check_inputs(signal, bank, config);

  ScatteringMatrix out;
  out.path_index = bank.paths;
  out.frame_rate = static_cast<double>(bank.sample_rate) / static_cast<double>(bank.hop);
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bank.paths.size()),
                                     static_cast<Eigen::Index>(bank.frames));

  auto spectrum = to_complex(reflect_pad(signal.samples, bank.pad_left, bank.padded_len));
  fft::forward(spectrum);

  Eigen::Index row = 0;
  {
    auto x0 = spectrum;
    lowpass_frames(x0, bank, out.values.row(row++));
  }

  // Paths are grouped by first-order filter, so each envelope is computed once.
  const std::size_t first_count = bank.psi[0].size();
  std::vector<std::vector<cplx>> envelopes(first_count);
  for (std::size_t i = 0; i < first_count; ++i) {
    envelopes[i] = envelope_spectrum(spectrum, bank.psi[0][i].response);
    auto tmp = envelopes[i];
    lowpass_frames(tmp, bank, out.values.row(row++));
  }
  for (std::size_t p = first_count + 1; p < bank.paths.size(); ++p) {
    const auto& path = bank.paths[p];
    auto second = envelope_spectrum(envelopes[static_cast<std::size_t>(path.scales[0])],
                                    bank.psi[1][static_cast<std::size_t>(path.scales[1])].response);
    lowpass_frames(second, bank, out.values.row(row++));
  }

  finish(out, config);
  return out;
}

ScatteringMatrix scattering_transform_direct(const Signal& signal, const FilterBank& bank,
                                             const ScatteringConfig& config) {
  check_inputs(signal, bank, config);

  ScatteringMatrix out;
  out.path_index = bank.paths;
  out.frame_rate = static_cast<double>(bank.sample_rate) / static_cast<double>(bank.hop);
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bank.paths.size()),
                                     static_cast<Eigen::Index>(bank.frames));

  const DirectKernel kernel(bank.padded_len);
  const auto phi_taps = kernel.taps(bank.phi);
  const auto x = reflect_pad(signal.samples, bank.pad_left, bank.padded_len);

  Eigen::Index row = 0;
  direct_frames(phi_taps, x, bank, out.values.row(row++));

  std::vector<std::vector<double>> first(bank.psi[0].size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    first[i] = DirectKernel::modulus_conv(kernel.taps(bank.psi[0][i].response), x);
    direct_frames(phi_taps, first[i], bank, out.values.row(row++));
  }
  if (bank.psi.size() > 1) {
    std::vector<std::vector<cplx>> second_taps(bank.psi[1].size());
    for (std::size_t p = first.size() + 1; p < bank.paths.size(); ++p) {
      const auto& path = bank.paths[p];
      auto& h = second_taps[static_cast<std::size_t>(path.scales[1])];
      if (h.empty()) h = kernel.taps(bank.psi[1][static_cast<std::size_t>(path.scales[1])].response);
      const auto u2 = DirectKernel::modulus_conv(h, first[static_cast<std::size_t>(path.scales[0])]);
      direct_frames(phi_taps, u2, bank, out.values.row(row++));
    }
  }

  finish(out, config);
  return out;
}

Eigen::VectorXd path_average(const ScatteringMatrix& matrix) {
  matrix.validate();
  require(matrix.values.cols() > 0, ErrorKind::Shape, "scattering matrix has no frames");
  return matrix.values.rowwise().mean();
}

void write_scattering_csv(std::ostream& out, const ScatteringMatrix& matrix) {
  std::ostringstream line;
  line.precision(9);
  out << "path_order,scales";
  for (std::size_t f = 0; f < matrix.frames(); ++f) out << ",frame_" << f;
  out << '\n';
  for (std::size_t r = 0; r < matrix.paths(); ++r) {
    line.str({});
    line << matrix.path_index[r].order << ',' << matrix.path_index[r].label();
    for (std::size_t f = 0; f < matrix.frames(); ++f)
      line << ',' << matrix.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
    out << line.str() << '\n';
  }
}

}  // namespace stx
