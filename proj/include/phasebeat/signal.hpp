#pragma once
// 1-D physiological signal processing in double precision: standardization,
// smoothness-priors detrending, zero-phase Butterworth bandpass, padded
// periodogram spectra, spectral heart rate, derivatives, peak/valley
// statistics, and affine maps between the rPPG and ABP domains.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/fft.hpp"

namespace phasebeat {

struct physio_signal {
    std::vector<double> samples;
    double rate = 0.0;  // Hz

    std::size_t size() const { return samples.size(); }
    void validate() const {
        require(rate > 0, "physio_signal: rate must be positive");
        require(samples.size() >= 2, "physio_signal: needs at least 2 samples");
        for (double v : samples)
            require(std::isfinite(v), "physio_signal: non-finite sample");
    }
};

struct power_spectrum_t {
    std::vector<double> frequencies;  // Hz, ascending, uniform spacing
    std::vector<double> power;        // non-negative
};

struct extrema_sets_t {
    std::vector<std::int64_t> peaks;
    std::vector<std::int64_t> valleys;
    std::vector<std::int64_t> refined_peaks;
    std::vector<std::int64_t> refined_valleys;
};

// ---- moments -------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Population standard deviation.
inline double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / double(v.size()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size() && a.size() >= 2, "pearson: length mismatch");
    const double ma = mean_of(a), mb = mean_of(b);
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    const double denom = std::sqrt(da * db);
    require(denom > 0, "pearson: zero variance");
    return num / denom;
}

inline physio_signal standardize(const physio_signal& s) {
    s.validate();
    const double m = mean_of(s.samples);
    const double sd = sd_of(s.samples);
    if (sd < 1e-12 * std::max(1.0, std::fabs(m)))
        throw numeric_error("standardize: zero variance");
    physio_signal out{std::vector<double>(s.samples.size()), s.rate};
    for (std::size_t i = 0; i < s.samples.size(); ++i) out.samples[i] = (s.samples[i] - m) / sd;
    return out;
}

// ---- detrend ---------------------------------------------------------------------

// Smoothness-priors detrend: z - (I + lambda^2 D2' D2)^-1 z, with D2 the
// (n-2) x n second-difference operator. The system matrix is symmetric
// positive-definite with bandwidth 2, solved by banded Cholesky.
inline physio_signal detrend(const physio_signal& s, double lambda) {
    s.validate();
    const std::int64_t n = static_cast<std::int64_t>(s.samples.size());
    require(n >= 3, "detrend: needs at least 3 samples");
    const double l2 = lambda * lambda;
    // Band storage: d0 diagonal, d1 first sub/super, d2 second.
    std::vector<double> d0(static_cast<std::size_t>(n), 1.0),
        d1(static_cast<std::size_t>(n - 1), 0.0), d2(static_cast<std::size_t>(n - 2), 0.0);
    for (std::int64_t r = 0; r < n - 2; ++r) {
        const double c[3] = {1.0, -2.0, 1.0};
        for (int p = 0; p < 3; ++p) {
            d0[static_cast<std::size_t>(r + p)] += l2 * c[p] * c[p];
            if (p + 1 < 3) d1[static_cast<std::size_t>(r + p)] += l2 * c[p] * c[p + 1];
            if (p + 2 < 3) d2[static_cast<std::size_t>(r + p)] += l2 * c[p] * c[p + 2];
        }
    }
    // Cholesky A = L L': L has the same bandwidth.
    std::vector<double> l0(static_cast<std::size_t>(n)), l1(static_cast<std::size_t>(n - 1)),
        l2b(static_cast<std::size_t>(n - 2));
    for (std::int64_t i = 0; i < n; ++i) {
        double a = d0[static_cast<std::size_t>(i)];
        if (i >= 1) a -= l1[static_cast<std::size_t>(i - 1)] * l1[static_cast<std::size_t>(i - 1)];
        if (i >= 2) a -= l2b[static_cast<std::size_t>(i - 2)] * l2b[static_cast<std::size_t>(i - 2)];
        l0[static_cast<std::size_t>(i)] = std::sqrt(a);
        if (i + 1 < n) {
            double b = d1[static_cast<std::size_t>(i)];
            if (i >= 1) b -= l1[static_cast<std::size_t>(i - 1)] * l2b[static_cast<std::size_t>(i - 1)];
            l1[static_cast<std::size_t>(i)] = b / l0[static_cast<std::size_t>(i)];
        }
        if (i + 2 < n)
            l2b[static_cast<std::size_t>(i)] = d2[static_cast<std::size_t>(i)] / l0[static_cast<std::size_t>(i)];
    }
    // Solve L y = z, then L' t = y.
    std::vector<double> y(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = s.samples[static_cast<std::size_t>(i)];
        if (i >= 1) acc -= l1[static_cast<std::size_t>(i - 1)] * y[static_cast<std::size_t>(i - 1)];
        if (i >= 2) acc -= l2b[static_cast<std::size_t>(i - 2)] * y[static_cast<std::size_t>(i - 2)];
        y[static_cast<std::size_t>(i)] = acc / l0[static_cast<std::size_t>(i)];
    }
    std::vector<double> trend(static_cast<std::size_t>(n));
    for (std::int64_t i = n - 1; i >= 0; --i) {
        double acc = y[static_cast<std::size_t>(i)];
        if (i + 1 < n) acc -= l1[static_cast<std::size_t>(i)] * trend[static_cast<std::size_t>(i + 1)];
        if (i + 2 < n) acc -= l2b[static_cast<std::size_t>(i)] * trend[static_cast<std::size_t>(i + 2)];
        trend[static_cast<std::size_t>(i)] = acc / l0[static_cast<std::size_t>(i)];
    }
    physio_signal out{std::vector<double>(static_cast<std::size_t>(n)), s.rate};
    for (std::int64_t i = 0; i < n; ++i)
        out.samples[static_cast<std::size_t>(i)] =
            s.samples[static_cast<std::size_t>(i)] - trend[static_cast<std::size_t>(i)];
    return out;
}

// ---- bandpass --------------------------------------------------------------------

namespace detail {

struct biquad {
    double b0, b1, b2, a1, a2;  // normalized (a0 == 1)
};

enum class filter_kind { lowpass, highpass };

// One second-order section of a Butterworth filter with quality factor q,
// corner fc, sampling rate fs (bilinear transform with frequency prewarping).
inline biquad butter_section(filter_kind kind, double fc, double fs, double q) {
    const double w0 = 2.0 * 3.14159265358979323846 * fc / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    biquad s{};
    if (kind == filter_kind::lowpass) {
        s.b0 = (1.0 - cw) / 2.0 / a0;
        s.b1 = (1.0 - cw) / a0;
        s.b2 = s.b0;
    } else {
        s.b0 = (1.0 + cw) / 2.0 / a0;
        s.b1 = -(1.0 + cw) / a0;
        s.b2 = s.b0;
    }
    s.a1 = (-2.0 * cw) / a0;
    s.a2 = (1.0 - alpha) / a0;
    return s;
}

// 4th-order Butterworth as two cascaded sections (pole-pair Q factors).
inline std::vector<biquad> butter4(filter_kind kind, double fc, double fs) {
    require(fc > 0 && fc < fs / 2, "butter4: corner must be inside (0, fs/2)");
    return {butter_section(kind, fc, fs, 0.54119610014620),
            butter_section(kind, fc, fs, 1.30656296487638)};
}

inline void run_cascade(const std::vector<biquad>& sections, std::vector<double>& x) {
    for (const auto& s : sections) {
        double z1 = 0.0, z2 = 0.0;  // transposed direct form II state
        for (auto& v : x) {
            const double in = v;
            v = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * v + z2;
            z2 = s.b2 * in - s.a2 * v;
        }
    }
}

// Mirror index without repeating the edge sample.
inline std::int64_t mirror_index(std::int64_t i, std::int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Forward-backward run of a cascade with reflection padding on both ends.
inline std::vector<double> filtfilt(const std::vector<biquad>& sections,
                                    const std::vector<double>& x, std::int64_t pad) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    std::vector<double> buf(static_cast<std::size_t>(n + 2 * pad));
    for (std::int64_t i = 0; i < n + 2 * pad; ++i)
        buf[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(mirror_index(i - pad, n))];
    run_cascade(sections, buf);
    std::reverse(buf.begin(), buf.end());
    run_cascade(sections, buf);
    std::reverse(buf.begin(), buf.end());
    return {buf.begin() + pad, buf.begin() + pad + n};
}

}  // namespace detail

// Zero-phase bandpass: a 4th-order high-pass and a 4th-order low-pass, each
// run forward then backward with one second of reflection padding. Corners
// sit outside the passband (0.67 * lo, 1.40 * hi) so that the two-pass
// magnitude stays within +-1 dB across [lo, hi] while reaching >= 20 dB
// attenuation at lo/2 and 2 * hi.
inline physio_signal bandpass(const physio_signal& s, double lo, double hi) {
    s.validate();
    require(lo > 0 && hi > lo, "bandpass: bad band");
    require(s.rate > 2.0 * hi, "bandpass: sample rate must exceed 2 * hi");
    const std::int64_t pad = static_cast<std::int64_t>(std::lround(s.rate));
    // Subtract the window mean first: the stop band removes DC anyway, and a
    // zero-mean input keeps the zero-state start-up transient of the
    // high-pass sections from leaking into the retained region.
    std::vector<double> v = s.samples;
    const double m = mean_of(v);
    for (auto& x : v) x -= m;
    auto hp = detail::butter4(detail::filter_kind::highpass, 0.67 * lo, s.rate);
    auto lp = detail::butter4(detail::filter_kind::lowpass, 1.40 * hi, s.rate);
    v = detail::filtfilt(hp, v, pad);
    v = detail::filtfilt(lp, v, pad);
    return {std::move(v), s.rate};
}

// ---- spectra and heart rate --------------------------------------------------------

// One-sided periodogram of the zero-padded signal: P_k = |X_k|^2 / (N * rate),
// frequencies k * rate / pad_to for k = 0 .. pad_to / 2.
inline power_spectrum_t power_spectrum(const physio_signal& s, std::int64_t pad_to = 2048) {
    s.validate();
    require(static_cast<std::int64_t>(s.samples.size()) <= pad_to,
            "power_spectrum: signal longer than pad_to");
    require(is_pow2(static_cast<std::size_t>(pad_to)), "power_spectrum: pad_to must be a power of two");
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(pad_to), {0.0, 0.0});
    for (std::size_t i = 0; i < s.samples.size(); ++i) buf[i] = {s.samples[i], 0.0};
    fft_pow2(buf);
    power_spectrum_t ps;
    const std::int64_t bins = pad_to / 2 + 1;
    ps.frequencies.resize(static_cast<std::size_t>(bins));
    ps.power.resize(static_cast<std::size_t>(bins));
    const double scale = 1.0 / (double(s.samples.size()) * s.rate);
    for (std::int64_t k = 0; k < bins; ++k) {
        ps.frequencies[static_cast<std::size_t>(k)] = double(k) * s.rate / double(pad_to);
        ps.power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]) * scale;
    }
    return ps;
}

// 60 x argmax-frequency restricted to [lo, hi] (inclusive); first maximum wins.
inline double hr_from_spectrum(const power_spectrum_t& ps, double lo = 0.5, double hi = 3.0) {
    require(!ps.frequencies.empty() && ps.frequencies.size() == ps.power.size(),
            "hr_from_spectrum: malformed spectrum");
    double best = -1.0, best_f = 0.0;
    for (std::size_t k = 0; k < ps.frequencies.size(); ++k) {
        const double f = ps.frequencies[k];
        if (f < lo || f > hi) continue;
        if (ps.power[k] > best) {
            best = ps.power[k];
            best_f = f;
        }
    }
    if (best < 1e-12) throw numeric_error("hr_from_spectrum: no dominant frequency in band");
    return 60.0 * best_f;
}

inline double hr_of(const physio_signal& s, std::int64_t pad_to = 2048, double lo = 0.5,
                    double hi = 3.0) {
    return hr_from_spectrum(power_spectrum(s, pad_to), lo, hi);
}

// ---- derivatives -------------------------------------------------------------------

// Central differences on the interior, one-sided at the edges; output has the
// same length and is in units per second.
inline physio_signal derivative(const physio_signal& s, int order = 1) {
    s.validate();
    require(order == 1 || order == 2, "derivative: order must be 1 or 2");
    auto diff1 = [](const physio_signal& in) {
        const std::size_t n = in.samples.size();
        physio_signal out{std::vector<double>(n), in.rate};
        out.samples[0] = (in.samples[1] - in.samples[0]) * in.rate;
        out.samples[n - 1] = (in.samples[n - 1] - in.samples[n - 2]) * in.rate;
        for (std::size_t i = 1; i + 1 < n; ++i)
            out.samples[i] = (in.samples[i + 1] - in.samples[i - 1]) * in.rate / 2.0;
        return out;
    };
    auto out = diff1(s);
    if (order == 2) out = diff1(out);
    return out;
}

// ---- extrema -----------------------------------------------------------------------

// Raw sets: strict sign changes of the discrete slope on interior samples.
// Refined sets: peaks at or above the mean peak level, valleys at or below the
// mean valley level (inclusive, so an all-equal set survives refinement).
inline extrema_sets_t extrema_sets(const physio_signal& s) {
    s.validate();
    require(s.samples.size() >= 3, "extrema_sets: needs at least 3 samples");
    extrema_sets_t e;
    const auto& y = s.samples;
    for (std::int64_t t = 1; t + 1 < static_cast<std::int64_t>(y.size()); ++t) {
        const double dl = y[static_cast<std::size_t>(t)] - y[static_cast<std::size_t>(t - 1)];
        const double dr = y[static_cast<std::size_t>(t + 1)] - y[static_cast<std::size_t>(t)];
        if (dl * dr < 0) {
            if (y[static_cast<std::size_t>(t)] > y[static_cast<std::size_t>(t - 1)])
                e.peaks.push_back(t);
            else
                e.valleys.push_back(t);
        }
    }
    if (!e.peaks.empty()) {
        double m = 0;
        for (auto t : e.peaks) m += y[static_cast<std::size_t>(t)];
        m /= double(e.peaks.size());
        for (auto t : e.peaks)
            if (y[static_cast<std::size_t>(t)] >= m) e.refined_peaks.push_back(t);
    }
    if (!e.valleys.empty()) {
        double m = 0;
        for (auto t : e.valleys) m += y[static_cast<std::size_t>(t)];
        m /= double(e.valleys.size());
        for (auto t : e.valleys)
            if (y[static_cast<std::size_t>(t)] <= m) e.refined_valleys.push_back(t);
    }
    return e;
}

struct pv_result {
    double p = 0.0;
    double v = 0.0;
};

inline double mean_at(const std::vector<double>& y, const std::vector<std::int64_t>& idx) {
    double m = 0;
    for (auto t : idx) m += y[static_cast<std::size_t>(t)];
    return m / double(idx.size());
}

// Mean refined peak and valley levels; throws when a refined set is empty.
inline pv_result pv_levels(const physio_signal& s) {
    const auto e = extrema_sets(s);
    if (e.refined_peaks.empty() || e.refined_valleys.empty())
        throw numeric_error("pv_levels: empty refined extrema set");
    return {mean_at(s.samples, e.refined_peaks), mean_at(s.samples, e.refined_valleys)};
}

// Loss-side variant: refined sets first, raw sets as fallback, nullopt when a
// raw set is empty too (the caller skips the term for that window).
struct pv_indices {
    std::vector<std::int64_t> peaks;
    std::vector<std::int64_t> valleys;
    bool used_fallback = false;
};

inline std::optional<pv_indices> pv_indices_or_fallback(const physio_signal& s) {
    const auto e = extrema_sets(s);
    pv_indices out;
    out.peaks = e.refined_peaks.empty() ? e.peaks : e.refined_peaks;
    out.valleys = e.refined_valleys.empty() ? e.valleys : e.refined_valleys;
    out.used_fallback = e.refined_peaks.empty() || e.refined_valleys.empty();
    if (out.peaks.empty() || out.valleys.empty()) return std::nullopt;
    return out;
}

// ---- ABP-domain maps ----------------------------------------------------------------

// Affine map sending min(y_a) -> dbp_hat and max(y_a) -> sbp_hat.
inline physio_signal scale_rppg_to_abp(const physio_signal& y_a, double sbp_hat, double dbp_hat) {
    y_a.validate();
    require(sbp_hat > dbp_hat, "scale_rppg_to_abp: sbp_hat must exceed dbp_hat");
    const auto [mn_it, mx_it] = std::minmax_element(y_a.samples.begin(), y_a.samples.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) throw numeric_error("scale_rppg_to_abp: flat signal");
    physio_signal out{std::vector<double>(y_a.samples.size()), y_a.rate};
    for (std::size_t i = 0; i < y_a.samples.size(); ++i)
        out.samples[i] = dbp_hat + (sbp_hat - dbp_hat) * (y_a.samples[i] - mn) / (mx - mn);
    return out;
}

// Window ground truth: SBP = mean refined-peak level, DBP = mean refined-valley level.
inline std::pair<double, double> gt_bp_from_abp(const physio_signal& abp) {
    const auto pv = pv_levels(abp);
    return {pv.p, pv.v};
}

// standardize -> detrend -> bandpass; every spectral estimate in the project
// runs on this chain, never on raw traces, whose DC leakage otherwise swamps
// the band edge.
//
// Default lambda = 500 at 25 Hz: the detrend knee (-3 dB of the detrended
// output) must sit below the 0.5 Hz passband edge or the band-edge PSD argmax
// tilts upward by ~2 bins. lambda = 500 puts the knee at 0.22 Hz; 100 would
// put it at 0.496 Hz, right at the edge.
inline physio_signal preprocess_rppg(const physio_signal& s, double lambda = 500.0,
                                     double lo = 0.5, double hi = 3.0) {
    return bandpass(detrend(standardize(s), lambda), lo, hi);
}

// The pseudo target the stage-1 heads chase: the preprocessed pressure wave.
inline physio_signal pseudo_ppg_from_abp(const physio_signal& abp, double lambda = 500.0,
                                         double lo = 0.5, double hi = 3.0) {
    return preprocess_rppg(abp, lambda, lo, hi);
}

// Exact integer decimation: keeps every factor-th sample. Callers are
// responsible for the signal being oversampled enough that aliasing is moot.
inline physio_signal decimate(const physio_signal& s, std::int64_t factor) {
    s.validate();
    require(factor >= 1, "decimate: factor must be positive");
    physio_signal out{{}, s.rate / double(factor)};
    out.samples.reserve(s.samples.size() / static_cast<std::size_t>(factor));
    for (std::size_t i = 0; i < s.samples.size(); i += static_cast<std::size_t>(factor))
        out.samples.push_back(s.samples[i]);
    return out;
}

// Integer-lag cross-correlation delay: returns d maximizing sum_t a(t) b(t+d),
// d in [-max_lag, max_lag]. Positive d means b lags a by d samples.
inline std::int64_t xcorr_delay(const physio_signal& a, const physio_signal& b,
                                std::int64_t max_lag) {
    require(a.samples.size() == b.samples.size(), "xcorr_delay: length mismatch");
    const std::int64_t n = static_cast<std::int64_t>(a.samples.size());
    require(max_lag < n, "xcorr_delay: max_lag too large");
    double best = -1e300;
    std::int64_t best_d = 0;
    for (std::int64_t d = -max_lag; d <= max_lag; ++d) {
        double acc = 0;
        for (std::int64_t t = 0; t < n; ++t) {
            const std::int64_t u = t + d;
            if (u < 0 || u >= n) continue;
            acc += a.samples[static_cast<std::size_t>(t)] * b.samples[static_cast<std::size_t>(u)];
        }
        if (acc > best) {
            best = acc;
            best_d = d;
        }
    }
    return best_d;
}

// ---- serialization -------------------------------------------------------------------

inline void write_csv(const std::vector<double>& col, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "write_csv: cannot open " + path);
    f.precision(17);
    for (double v : col) f << v << "\n";
}

inline std::vector<double> read_csv(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "read_csv: cannot open " + path);
    std::vector<double> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double v;
        require(static_cast<bool>(ss >> v), "read_csv: malformed row in " + path);
        out.push_back(v);
    }
    return out;
}

inline nlohmann::json signal_to_json(const physio_signal& s) {
    return {{"rate", s.rate}, {"samples", s.samples}};
}

inline physio_signal signal_from_json(const nlohmann::json& j) {
    require(j.contains("rate") && j.contains("samples"), "signal_from_json: missing fields");
    physio_signal s{j.at("samples").get<std::vector<double>>(), j.at("rate").get<double>()};
    s.validate();
    return s;
}

inline void spectrum_to_csv(const power_spectrum_t& ps, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "spectrum_to_csv: cannot open " + path);
    f.precision(17);
    f << "frequency,power\n";
    for (std::size_t i = 0; i < ps.frequencies.size(); ++i)
        f << ps.frequencies[i] << "," << ps.power[i] << "\n";
}

}  // namespace phasebeat
