#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "emg2text/errors.hpp"
#include "emg2text/preprocess.hpp"
#include "emg2text/rng.hpp"

using namespace emg2text;

namespace {

constexpr double kPi = 3.14159265358979323846;

dsp::EmgSegment make_segment(uint32_t channels, const std::vector<double>& channel_major, uint32_t rate = 5000) {
  dsp::EmgSegment seg;
  seg.channels = channels;
  seg.samples = channel_major.size() / channels;
  seg.sample_rate = rate;
  seg.data = channel_major;
  return seg;
}

// Steady-state amplitude of a filtered unit sine, estimated by
// quadrature demodulation over the second half of the signal (peak
// picking is biased when the period divides the sample rate).
double measured_sine_gain(const dsp::ButterworthBandpass& filter, double hz, double fs) {
  const size_t n = static_cast<size_t>(fs) * 4;
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs);
  const std::vector<double> y = filter.apply(x);
  double in_phase = 0.0, quadrature = 0.0;
  for (size_t i = n / 2; i < n; ++i) {
    const double phase = 2.0 * kPi * hz * static_cast<double>(i) / fs;
    in_phase += y[i] * std::sin(phase);
    quadrature += y[i] * std::cos(phase);
  }
  const double half = static_cast<double>(n) / 2.0;
  return 2.0 * std::hypot(in_phase, quadrature) / half;
}

}  // namespace

TEST_CASE("reference subtraction") {
  SUBCASE("elementwise example") {
    io::EmgRecording rec;
    rec.channels = 2;
    rec.samples = 2;
    rec.sample_rate = 5000;
    rec.reference_index = 1;
    rec.data = {1.0, 2.0, 0.5, 0.5};
    const dsp::EmgSegment seg = dsp::subtract_reference(rec);
    CHECK(seg.channels == 1);
    CHECK(seg.at(0, 0) == doctest::Approx(0.5));
    CHECK(seg.at(0, 1) == doctest::Approx(1.5));
  }

  SUBCASE("channels equal to reference cancel to zero") {
    io::EmgRecording rec;
    rec.channels = 3;
    rec.samples = 4;
    rec.sample_rate = 5000;
    rec.reference_index = 2;
    rec.data.assign(12, 0.7);
    const dsp::EmgSegment seg = dsp::subtract_reference(rec);
    for (double v : seg.data) CHECK(v == 0.0);
  }

  SUBCASE("32 to 31 channels matches an independent elementwise oracle") {
    Rng rng(11);
    io::EmgRecording rec;
    rec.channels = 32;
    rec.samples = 100;
    rec.sample_rate = 5000;
    rec.reference_index = 31;
    rec.data.resize(32 * 100);
    for (auto& v : rec.data) v = rng.next_normal();

    const dsp::EmgSegment seg = dsp::subtract_reference(rec);
    REQUIRE(seg.channels == 31);
    for (uint32_t ch = 0; ch < 31; ++ch)
      for (uint64_t t = 0; t < 100; ++t) {
        const double expected = rec.data[ch * 100 + t] - rec.data[31 * 100 + t];
        CHECK(seg.at(ch, t) == expected);
      }
  }
}

TEST_CASE("butterworth bandpass design") {
  const double fs = 5000.0;
  const dsp::ButterworthBandpass filter(80.0, 1000.0, 3, fs);

  SUBCASE("DC input is rejected after the transient") {
    std::vector<double> x(20000, 1.0);
    const std::vector<double> y = filter.apply(x);
    double tail = 0.0;
    for (size_t i = x.size() / 2; i < x.size(); ++i) tail = std::max(tail, std::abs(y[i]));
    CHECK(tail < 1e-3);
  }

  SUBCASE("300 Hz sine matches the analytic magnitude response within 1%") {
    const double analytic = filter.magnitude_at(300.0);
    const double measured = measured_sine_gain(filter, 300.0, fs);
    CHECK(measured == doctest::Approx(analytic).epsilon(0.01));
  }

  SUBCASE("band edges sit at -3 dB within 0.2 dB") {
    for (double edge : {80.0, 1000.0}) {
      const double gain_db = 20.0 * std::log10(filter.magnitude_at(edge));
      CHECK(std::abs(gain_db - (-3.0102999566398)) <= 0.2);
      const double measured = measured_sine_gain(filter, edge, fs);
      CHECK(20.0 * std::log10(measured) == doctest::Approx(gain_db).epsilon(0.01));
    }
  }

  SUBCASE("cutoffs beyond Nyquist are parameter errors") {
    CHECK_THROWS_AS(dsp::ButterworthBandpass(80.0, 2600.0, 3, fs), ParamError);
    CHECK_THROWS_AS(dsp::ButterworthBandpass(0.0, 1000.0, 3, fs), ParamError);
    CHECK_THROWS_AS(dsp::ButterworthBandpass(1000.0, 80.0, 3, fs), ParamError);
  }

  SUBCASE("linearity within 1e-9 relative") {
    Rng rng(3);
    std::vector<double> x(2000), y(2000);
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.next_normal();
      y[i] = rng.next_normal();
    }
    const double a = 1.7, b = -0.4;
    std::vector<double> combined(x.size());
    for (size_t i = 0; i < x.size(); ++i) combined[i] = a * x[i] + b * y[i];
    const auto fx = filter.apply(x);
    const auto fy = filter.apply(y);
    const auto fc = filter.apply(combined);
    double max_err = 0.0, scale = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      max_err = std::max(max_err, std::abs(fc[i] - (a * fx[i] + b * fy[i])));
      scale = std::max(scale, std::abs(fc[i]));
    }
    CHECK(max_err <= 1e-9 * std::max(scale, 1.0));
  }

  SUBCASE("bounded input stays bounded over 1e6 samples") {
    Rng rng(5);
    std::vector<double> x(1000000);
    for (auto& v : x) v = rng.next_double() * 2.0 - 1.0;
    const auto y = filter.apply(x);
    double peak = 0.0;
    for (double v : y) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 100.0);
  }

  SUBCASE("zero phase application squares the magnitude response") {
    const double hz = 300.0;
    const size_t n = 20000;
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs);
    const auto y = filter.apply_zero_phase(x);
    double peak = 0.0;
    for (size_t i = n / 4; i < 3 * n / 4; ++i) peak = std::max(peak, std::abs(y[i]));
    const double expected = filter.magnitude_at(hz) * filter.magnitude_at(hz);
    CHECK(peak == doctest::Approx(expected).epsilon(0.02));
  }
}

TEST_CASE("segmentation") {
  Rng rng(9);
  std::vector<double> data(3 * 50);
  for (auto& v : data) v = rng.next_normal();
  const dsp::EmgSegment full = make_segment(3, data);

  SUBCASE("full copy") {
    const dsp::EmgSegment out = dsp::segment(full, 0, 50);
    CHECK(out.data == full.data);
  }

  SUBCASE("single-sample boundary") {
    const dsp::EmgSegment out = dsp::segment(full, 49, 50);
    CHECK(out.samples == 1);
    for (uint32_t ch = 0; ch < 3; ++ch) CHECK(out.at(ch, 0) == full.at(ch, 49));
  }

  SUBCASE("random slice equals an independent copy loop") {
    const dsp::EmgSegment out = dsp::segment(full, 10, 37);
    REQUIRE(out.samples == 27);
    for (uint32_t ch = 0; ch < 3; ++ch)
      for (uint64_t t = 0; t < 27; ++t) CHECK(out.at(ch, t) == full.at(ch, 10 + t));
  }

  SUBCASE("data is copied, not aliased") {
    dsp::EmgSegment out = dsp::segment(full, 0, 50);
    out.at(0, 0) += 1.0;
    CHECK(out.at(0, 0) != full.at(0, 0));
  }

  SUBCASE("out-of-range bounds error") {
    CHECK_THROWS_AS(dsp::segment(full, 10, 51), ParamError);
    CHECK_THROWS_AS(dsp::segment(full, 20, 20), ParamError);
  }
}

TEST_CASE("z-normalization") {
  SUBCASE("three-point closed form with population std") {
    dsp::EmgSegment seg = make_segment(1, {1.0, 2.0, 3.0});
    dsp::znormalize(seg);
    CHECK(seg.at(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(seg.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(seg.at(0, 2) == doctest::Approx(1.224744871391589).epsilon(1e-12));
  }

  SUBCASE("constant channel floors to zero") {
    dsp::EmgSegment seg = make_segment(2, {4.0, 4.0, 4.0, 1.0, 2.0, 3.0});
    dsp::znormalize(seg);
    CHECK(seg.at(0, 0) == 0.0);
    CHECK(seg.at(0, 2) == 0.0);
    CHECK(seg.at(1, 0) != 0.0);
  }

  SUBCASE("random channel statistics recomputed independently") {
    Rng rng(21);
    std::vector<double> data(5 * 400);
    for (auto& v : data) v = 3.0 + 2.5 * rng.next_normal();
    dsp::EmgSegment seg = make_segment(5, data);
    dsp::znormalize(seg);
    for (uint32_t ch = 0; ch < 5; ++ch) {
      double mean = 0.0;
      for (uint64_t t = 0; t < 400; ++t) mean += seg.at(ch, t);
      mean /= 400.0;
      double var = 0.0;
      for (uint64_t t = 0; t < 400; ++t) var += (seg.at(ch, t) - mean) * (seg.at(ch, t) - mean);
      var /= 400.0;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
  }

  SUBCASE("idempotence within 1e-9") {
    Rng rng(22);
    std::vector<double> data(2 * 300);
    for (auto& v : data) v = rng.next_normal() * 7.0 - 2.0;
    dsp::EmgSegment once = make_segment(2, data);
    dsp::znormalize(once);
    dsp::EmgSegment twice = once;
    dsp::znormalize(twice);
    for (size_t i = 0; i < once.data.size(); ++i) CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-9);
  }
}

TEST_CASE("window framing") {
  dsp::WindowSpec spec;  // 50 ms / 20 ms
  CHECK(spec.window_samples(5000) == 250);
  CHECK(spec.hop_samples(5000) == 100);

  SUBCASE("frame-count arithmetic") {
    std::vector<double> data(1000, 0.0);
    const dsp::EmgSegment seg = make_segment(1, data);
    CHECK(spec.frame_count(1000, 5000) == 8);
    CHECK(dsp::windows(seg, spec).size() == 8);
  }

  SUBCASE("exactly one frame at the window size") {
    const dsp::EmgSegment seg = make_segment(1, std::vector<double>(250, 1.0));
    CHECK(dsp::windows(seg, spec).size() == 1);
  }

  SUBCASE("249 samples is an error") {
    const dsp::EmgSegment seg = make_segment(1, std::vector<double>(249, 1.0));
    CHECK_THROWS_AS(dsp::windows(seg, spec), DataError);
  }

  SUBCASE("frame k starts exactly at k*hop") {
    std::vector<double> ramp(701);
    for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    const dsp::EmgSegment seg = make_segment(1, ramp);
    const auto frames = dsp::windows(seg, spec);
    REQUIRE(frames.size() == 5);
    for (size_t k = 0; k < frames.size(); ++k) {
      CHECK(frames[k].front() == doctest::Approx(static_cast<double>(k * 100)));
      CHECK(frames[k].back() == doctest::Approx(static_cast<double>(k * 100 + 249)));
    }
  }
}
