#include "emg2text/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "emg2text/errors.hpp"

namespace emg2text::dsp {

namespace {
constexpr double kPi = 3.14159265358979323846;
using cplx = std::complex<double>;
}  // namespace

uint64_t WindowSpec::window_samples(uint32_t sample_rate) const {
  return static_cast<uint64_t>(std::llround(window_ms * sample_rate / 1000.0));
}

uint64_t WindowSpec::hop_samples(uint32_t sample_rate) const {
  return static_cast<uint64_t>(std::llround(hop_ms * sample_rate / 1000.0));
}

uint64_t WindowSpec::frame_count(uint64_t samples, uint32_t sample_rate) const {
  const uint64_t w = window_samples(sample_rate);
  const uint64_t h = hop_samples(sample_rate);
  if (w < h || h < 1) throw ParamError("window spec requires window >= hop >= 1 sample");
  if (samples < w) return 0;
  return (samples - w) / h + 1;
}

ButterworthBandpass::ButterworthBandpass(double low_hz, double high_hz, int order, double sample_rate)
    : sample_rate_(sample_rate) {
  if (order < 1) throw ParamError("filter order must be >= 1");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < sample_rate / 2.0))
    throw ParamError("bandpass cutoffs must satisfy 0 < low < high < Nyquist");

  // Pre-warp the band edges so the bilinear transform lands the -3 dB
  // points exactly on low_hz / high_hz.
  const double fs2 = 2.0 * sample_rate;
  const double warped_low = fs2 * std::tan(kPi * low_hz / sample_rate);
  const double warped_high = fs2 * std::tan(kPi * high_hz / sample_rate);
  const double bw = warped_high - warped_low;
  const double w0_sq = warped_low * warped_high;

  // Analog lowpass prototype poles on the unit circle, left half-plane.
  std::vector<cplx> proto;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Lowpass-to-bandpass: each prototype pole p becomes the two roots of
  // s^2 - p*bw*s + w0^2 = 0. The quadratic has complex coefficients for
  // complex p, so the roots are re-paired by conjugacy after the
  // bilinear transform.
  std::vector<cplx> analog_poles;
  for (const cplx& p : proto) {
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    analog_poles.push_back((pb + disc) / 2.0);
    analog_poles.push_back((pb - disc) / 2.0);
  }

  // Bilinear transform. Analog zeros: `order` at s=0 (-> z=+1) plus the
  // implicit zeros at infinity (-> z=-1), so every section's numerator
  // is (z-1)(z+1). Gain: k_a * prod(fs2 - zeros) / prod(fs2 - poles)
  // with k_a = bw^order and the zero product equal to fs2^order.
  cplx gain_num = std::pow(cplx(bw * fs2, 0.0), order);
  cplx gain_den(1.0, 0.0);
  std::vector<cplx> digital_poles;
  for (const cplx& s : analog_poles) {
    digital_poles.push_back((fs2 + s) / (fs2 - s));
    gain_den *= (fs2 - s);
  }
  const double gain = (gain_num / gain_den).real();

  // Group the 2*order poles into real biquads: each upper-half-plane
  // pole pairs with its conjugate, remaining real poles pair among
  // themselves (sorted, so the grouping is deterministic).
  const double tol = 1e-9;
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const cplx& p : digital_poles) {
    if (p.imag() > tol)
      upper.push_back(p);
    else if (p.imag() >= -tol)
      reals.push_back(p.real());
  }
  std::sort(upper.begin(), upper.end(), [](const cplx& a, const cplx& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::sort(reals.begin(), reals.end());

  sections_.clear();
  for (const cplx& p : upper) {
    Biquad q{1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)};
    sections_.push_back(q);
  }
  for (size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad q{1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]};
    sections_.push_back(q);
  }
  sections_.front().b0 *= gain;
  sections_.front().b1 *= gain;
  sections_.front().b2 *= gain;
}

std::vector<double> ButterworthBandpass::apply(const std::vector<double>& x) const {
  std::vector<double> y = x;
  for (const Biquad& q : sections_) {
    // direct form II transposed
    double s1 = 0.0, s2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> ButterworthBandpass::apply_zero_phase(const std::vector<double>& x) const {
  std::vector<double> y = apply(x);
  std::reverse(y.begin(), y.end());
  y = apply(y);
  std::reverse(y.begin(), y.end());
  return y;
}

double ButterworthBandpass::magnitude_at(double hz) const {
  const double w = 2.0 * kPi * hz / sample_rate_;
  const cplx z = std::polar(1.0, w);
  const cplx z2 = z * z;
  cplx h(1.0, 0.0);
  for (const Biquad& q : sections_) {
    h *= (q.b0 * z2 + q.b1 * z + q.b2) / (z2 + q.a1 * z + q.a2);
  }
  return std::abs(h);
}

EmgSegment subtract_reference(const io::EmgRecording& rec) {
  if (rec.channels < 2) throw ParamError("reference subtraction needs at least 2 channels");
  if (rec.reference_index >= rec.channels) throw ParamError("reference index out of range");
  EmgSegment seg;
  seg.channels = rec.channels - 1;
  seg.samples = rec.samples;
  seg.sample_rate = rec.sample_rate;
  seg.data.resize(static_cast<size_t>(seg.channels) * seg.samples);
  uint32_t out_ch = 0;
  for (uint32_t ch = 0; ch < rec.channels; ++ch) {
    if (ch == rec.reference_index) continue;
    for (uint64_t t = 0; t < rec.samples; ++t)
      seg.at(out_ch, t) = rec.at(ch, t) - rec.at(rec.reference_index, t);
    ++out_ch;
  }
  return seg;
}

void bandpass(EmgSegment& seg, double low_hz, double high_hz, int order, bool zero_phase) {
  ButterworthBandpass filter(low_hz, high_hz, order, seg.sample_rate);
  for (uint32_t ch = 0; ch < seg.channels; ++ch) {
    std::vector<double> x(seg.data.begin() + ch * seg.samples, seg.data.begin() + (ch + 1) * seg.samples);
    std::vector<double> y = zero_phase ? filter.apply_zero_phase(x) : filter.apply(x);
    std::copy(y.begin(), y.end(), seg.data.begin() + ch * seg.samples);
  }
}

EmgSegment segment(const EmgSegment& full, uint64_t start_sample, uint64_t end_sample) {
  if (start_sample >= end_sample || end_sample > full.samples)
    throw ParamError("segment bounds [" + std::to_string(start_sample) + ", " + std::to_string(end_sample) +
                     ") out of range for " + std::to_string(full.samples) + " samples");
  EmgSegment out;
  out.channels = full.channels;
  out.samples = end_sample - start_sample;
  out.sample_rate = full.sample_rate;
  out.data.resize(static_cast<size_t>(out.channels) * out.samples);
  for (uint32_t ch = 0; ch < full.channels; ++ch)
    for (uint64_t t = 0; t < out.samples; ++t) out.at(ch, t) = full.at(ch, start_sample + t);
  return out;
}

void znormalize(EmgSegment& seg) {
  if (seg.samples < 2) throw ParamError("z-normalization needs at least 2 samples");
  const double n = static_cast<double>(seg.samples);
  for (uint32_t ch = 0; ch < seg.channels; ++ch) {
    double mean = 0.0;
    for (uint64_t t = 0; t < seg.samples; ++t) mean += seg.at(ch, t);
    mean /= n;
    double var = 0.0;
    for (uint64_t t = 0; t < seg.samples; ++t) {
      const double d = seg.at(ch, t) - mean;
      var += d * d;
    }
    const double std_dev = std::sqrt(var / n);
    if (std_dev < 1e-8) {
      for (uint64_t t = 0; t < seg.samples; ++t) seg.at(ch, t) = 0.0;
    } else {
      for (uint64_t t = 0; t < seg.samples; ++t) seg.at(ch, t) = (seg.at(ch, t) - mean) / std_dev;
    }
  }
}

std::vector<std::vector<double>> windows(const EmgSegment& seg, const WindowSpec& spec) {
  const uint64_t w = spec.window_samples(seg.sample_rate);
  const uint64_t h = spec.hop_samples(seg.sample_rate);
  const uint64_t frames = spec.frame_count(seg.samples, seg.sample_rate);
  if (frames == 0)
    throw DataError("segment of " + std::to_string(seg.samples) + " samples is shorter than one window (" +
                    std::to_string(w) + " samples)");
  std::vector<std::vector<double>> out(frames);
  for (uint64_t k = 0; k < frames; ++k) {
    auto& block = out[k];
    block.resize(static_cast<size_t>(seg.channels) * w);
    const uint64_t start = k * h;
    for (uint32_t ch = 0; ch < seg.channels; ++ch)
      for (uint64_t t = 0; t < w; ++t) block[ch * w + t] = seg.at(ch, start + t);
  }
  return out;
}

}  // namespace emg2text::dsp
