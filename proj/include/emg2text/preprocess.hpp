#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "emg2text/signal_io.hpp"

namespace emg2text::dsp {

// One sentence's multichannel EMG after reference subtraction.
struct EmgSegment {
  uint32_t channels = 0;
  uint64_t samples = 0;
  uint32_t sample_rate = 0;
  std::vector<double> data;  // channel-major

  double at(uint32_t channel, uint64_t sample) const { return data[channel * samples + sample]; }
  double& at(uint32_t channel, uint64_t sample) { return data[channel * samples + sample]; }
};

// Sliding-window geometry; defaults follow the 50 ms / 20 ms analysis grid.
struct WindowSpec {
  double window_ms = 50.0;
  double hop_ms = 20.0;

  uint64_t window_samples(uint32_t sample_rate) const;
  uint64_t hop_samples(uint32_t sample_rate) const;
  // floor((samples - window) / hop) + 1; trailing partial window dropped
  uint64_t frame_count(uint64_t samples, uint32_t sample_rate) const;
};

// Digital Butterworth bandpass as a cascade of biquad sections, designed
// from the analog prototype via pre-warped bilinear transform. An
// analog order of n yields 2n digital poles (n sections).
class ButterworthBandpass {
 public:
  ButterworthBandpass(double low_hz, double high_hz, int order, double sample_rate);

  // Single-pass causal filtering, zero initial state.
  std::vector<double> apply(const std::vector<double>& x) const;
  // Forward-backward application (squared magnitude response, zero phase).
  std::vector<double> apply_zero_phase(const std::vector<double>& x) const;

  // |H(e^{j 2 pi f / fs})| evaluated from the designed coefficients.
  double magnitude_at(double hz) const;

  struct Biquad {
    double b0, b1, b2;  // numerator
    double a1, a2;      // denominator (a0 normalized to 1)
  };
  const std::vector<Biquad>& sections() const { return sections_; }

 private:
  std::vector<Biquad> sections_;
  double sample_rate_;
};

// channel i of the output = channel i of the input minus the reference
// channel, samplewise; the reference channel itself is dropped.
EmgSegment subtract_reference(const io::EmgRecording& rec);

// In-place per-channel bandpass.
void bandpass(EmgSegment& seg, double low_hz = 80.0, double high_hz = 1000.0, int order = 3,
              bool zero_phase = false);

// Copy of [start_sample, end_sample) across all channels.
EmgSegment segment(const EmgSegment& full, uint64_t start_sample, uint64_t end_sample);

// Per channel subtract mean, divide by population standard deviation.
// Channels with std below 1e-8 are zeroed.
void znormalize(EmgSegment& seg);

// Channel-major copies of each analysis window, frame k covering
// [k*hop, k*hop + window).
std::vector<std::vector<double>> windows(const EmgSegment& seg, const WindowSpec& spec);

}  // namespace emg2text::dsp
