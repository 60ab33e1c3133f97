// Training objectives: in-band spectral distance, a differentiable soft
// heart-rate error, time-domain and extrema-level distances for the two
// pulse channels, and the bounded-pressure composite with affine waveform
// reconstruction.

#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "phasebeat/common.hpp"
#include "phasebeat/nn_ops.hpp"
#include "phasebeat/signal.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

struct loss_weights {
    double lambda1 = 0.0001;  // heart-rate term
    double lambda2 = 100.0;   // spectral term
    double delta = 1.0;       // Huber knee, mmHg

    void validate() const {
        require(lambda1 > 0 && lambda2 > 0 && delta > 0, "loss_weights: must be positive");
    }
};

// Zero-padding length shared by both periodograms inside every spectral term.
inline constexpr std::int64_t loss_pad = 2048;

// Inclusive bin range [k_lo, k_hi] of the pulse band: every k with
// lo <= k * rate / nfft <= hi.
inline std::pair<std::int64_t, std::int64_t> band_bin_range(std::int64_t nfft, double rate,
                                                            double lo = 0.5, double hi = 3.0) {
    require(nfft > 0 && rate > 0 && lo > 0 && hi > lo, "band_bin_range: bad arguments");
    const auto k_lo = static_cast<std::int64_t>(std::ceil(lo * double(nfft) / rate));
    const auto k_hi = static_cast<std::int64_t>(std::floor(hi * double(nfft) / rate));
    require(k_lo <= k_hi && k_hi <= nfft / 2, "band_bin_range: empty band");
    return {k_lo, k_hi};
}

template <typename S>
tensor<S> signal_tensor(const physio_signal& s) {
    s.validate();
    const auto n = static_cast<std::int64_t>(s.samples.size());
    std::vector<S> v(s.samples.begin(), s.samples.end());
    return tensor<S>::from({n}, std::move(v));
}

// Blackman window scaled so its power matches the rectangular convention
// (sum of squares equals the sample count), keeping the periodogram's
// 1 / (T * rate) normalization valid for the windowed signal.
template <typename S>
std::vector<S> detail_loss_window(std::int64_t t) {
    require(t >= 2, "loss window: too short");
    const double pi = 3.14159265358979323846;
    std::vector<double> w(static_cast<std::size_t>(t));
    double power = 0;
    for (std::int64_t i = 0; i < t; ++i) {
        const double u = 2.0 * pi * double(i) / double(t - 1);
        w[static_cast<std::size_t>(i)] = 0.42 - 0.5 * std::cos(u) + 0.08 * std::cos(2.0 * u);
        power += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    }
    const double g = std::sqrt(double(t) / power);
    std::vector<S> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = S(w[i] * g);
    return out;
}

// Windowed periodogram restricted to the pulse band. The window matters: a
// bare rectangular window lets the conjugate spectral image's sidelobes
// interfere with the tone's own main lobe, which makes in-band power
// phase-sensitive at the several-percent level for windows this short and
// would couple the phase-free facial objective to phase. The Blackman taper
// pushes that interference below 1e-4 of the peak.
template <typename S>
tensor<S> band_psd(const tensor<S>& y, double rate, std::int64_t pad = loss_pad) {
    const auto t = y.shape()[0];
    tensor<S> w = tensor<S>::from({t}, detail_loss_window<S>(t));
    const auto [k_lo, k_hi] = band_bin_range(pad, rate);
    return slice0(periodogram(mul(y, w), pad, rate), k_lo, k_hi - k_lo + 1);
}

// L2 distance between the in-band periodograms of prediction and target.
template <typename S>
tensor<S> l_freq(const tensor<S>& y_hat, const tensor<S>& y, double rate,
                 std::int64_t pad = loss_pad) {
    require(y_hat.shape() == y.shape() && y_hat.shape().size() == 1, "l_freq: length mismatch");
    return l2_norm(sub(band_psd(y_hat, rate, pad), band_psd(y, rate, pad)));
}

// Differentiable in-band heart rate: the hard argmax has zero gradient
// almost everywhere, so training scores each band bin by its power relative
// to the in-band peak (peak index held constant) and takes the
// softmax-weighted expectation of bin frequency. A clean tone concentrates
// the weights on its symmetric main lobe, keeping the expectation within a
// beat of the argmax; normalizing by the peak rather than the band total
// keeps the score contrast independent of how widely leakage spreads power.
template <typename S>
tensor<S> soft_hr_bpm(const tensor<S>& y_hat, double rate, std::int64_t pad = loss_pad,
                      double temperature = 10.0) {
    require(temperature > 0, "soft_hr_bpm: bad temperature");
    tensor<S> p = band_psd(y_hat, rate, pad);
    const auto n = p.numel();
    std::int64_t k_star = 0;
    for (std::int64_t k = 1; k < n; ++k)
        if (p.value()[static_cast<std::size_t>(k)] > p.value()[static_cast<std::size_t>(k_star)])
            k_star = k;
    tensor<S> w = softmax(scale(div(p, gather_mean(p, {k_star})), S(temperature)), 0);
    const auto k_lo = band_bin_range(pad, rate).first;
    std::vector<S> bpm(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k)
        bpm[static_cast<std::size_t>(k)] = S(60.0 * double(k_lo + k) * rate / double(pad));
    return sum(mul(w, tensor<S>::from({n}, std::move(bpm))));
}

// Evaluation-side heart-rate error.
inline double l_hr(double hr_hat, double hr) { return std::fabs(hr_hat - hr); }

// Training-side heart-rate error against a constant target, in BPM.
template <typename S>
tensor<S> l_hr_soft(const tensor<S>& y_hat, double hr, double rate, std::int64_t pad = loss_pad,
                    double temperature = 10.0) {
    return abs_t(add_scalar(soft_hr_bpm(y_hat, rate, pad, temperature), S(-hr)));
}

// Time-domain L2 distance.
template <typename S>
tensor<S> l_time(const tensor<S>& y_hat, const tensor<S>& y) {
    require(y_hat.shape() == y.shape() && y_hat.shape().size() == 1, "l_time: length mismatch");
    return l2_norm(sub(y_hat, y));
}

// Distance between mean peak and mean valley levels. Index sets come from
// the current sample values and are held constant during differentiation;
// only the gathered values backpropagate. Returns nullopt when either signal
// yields no usable extrema, in which case the caller contributes zero. The
// square root is exact at the optimum, so its derivative blows up there; a
// zero residual on real data means the run has already converged.
template <typename S>
std::optional<tensor<S>> l_pv(const tensor<S>& y_hat, const physio_signal& y) {
    require(y_hat.shape().size() == 1 &&
                y_hat.shape()[0] == static_cast<std::int64_t>(y.samples.size()),
            "l_pv: length mismatch");
    const auto target = pv_indices_or_fallback(y);
    if (!target) return std::nullopt;
    physio_signal yh{std::vector<double>(y_hat.value().begin(), y_hat.value().end()), y.rate};
    const auto pred = pv_indices_or_fallback(yh);
    if (!pred) return std::nullopt;
    const double p_y = mean_at(y.samples, target->peaks);
    const double v_y = mean_at(y.samples, target->valleys);
    tensor<S> dp = add_scalar(gather_mean(y_hat, pred->peaks), S(-p_y));
    tensor<S> dv = add_scalar(gather_mean(y_hat, pred->valleys), S(-v_y));
    return sqrt_t(add(square(dp), square(dv)));
}

template <typename S>
struct stage1_terms {
    tensor<S> freq, hr, pv, total;
    tensor<S> time;  // acral objective only
    bool pv_skipped = false;
    bool has_time = false;
};

// Facial objective: lambda1 * L_HR + lambda2 * L_freq + L_pv. No time-domain
// term, so the predicted phase is unconstrained.
template <typename S>
stage1_terms<S> l_facial(const tensor<S>& y_hat_f, const physio_signal& y, double hr,
                         const loss_weights& w = {}, std::int64_t pad = loss_pad) {
    w.validate();
    stage1_terms<S> t;
    tensor<S> yc = signal_tensor<S>(y);
    t.freq = l_freq(y_hat_f, yc, y.rate, pad);
    t.hr = l_hr_soft(y_hat_f, hr, y.rate, pad);
    auto pv = l_pv(y_hat_f, y);
    t.pv_skipped = !pv.has_value();
    t.pv = pv ? *pv : tensor<S>::zeros({1});
    t.total = add(scale(t.hr, S(w.lambda1)), add(scale(t.freq, S(w.lambda2)), t.pv));
    return t;
}

// Acral objective: the facial terms plus the time-domain distance that pins
// the predicted phase to the delayed target.
template <typename S>
stage1_terms<S> l_acral(const tensor<S>& y_hat_a, const physio_signal& y, double hr,
                        const loss_weights& w = {}, std::int64_t pad = loss_pad) {
    stage1_terms<S> t = l_facial(y_hat_a, y, hr, w, pad);
    t.time = l_time(y_hat_a, signal_tensor<S>(y));
    t.has_time = true;
    t.total = add(t.total, t.time);
    return t;
}

// Affine reconstruction of the pressure waveform from the acral pulse shape:
// u is the min-max normalized shape held constant, so gradients flow only
// through the two pressure scalars.
template <typename S>
tensor<S> l_abp(const physio_signal& y_a, const tensor<S>& sbp_hat, const tensor<S>& dbp_hat,
                const physio_signal& abp) {
    require(y_a.samples.size() == abp.samples.size(), "l_abp: length mismatch");
    require(sbp_hat.numel() == 1 && dbp_hat.numel() == 1, "l_abp: expects scalar pressures");
    const auto [mn_it, mx_it] = std::minmax_element(y_a.samples.begin(), y_a.samples.end());
    const double mn = *mn_it, mx = *mx_it;
    require(mx > mn, "l_abp: flat pulse shape");
    const auto t = static_cast<std::int64_t>(y_a.samples.size());
    std::vector<S> u(static_cast<std::size_t>(t)), um(static_cast<std::size_t>(t));
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = S((y_a.samples[i] - mn) / (mx - mn));
        um[i] = S(1) - u[i];
    }
    tensor<S> y_s = add(mul(dbp_hat, tensor<S>::from({t}, std::move(um))),
                        mul(sbp_hat, tensor<S>::from({t}, std::move(u))));
    return l2_norm(sub(y_s, signal_tensor<S>(abp)));
}

template <typename S>
struct stage2_terms {
    tensor<S> sbp, dbp, abp, total;
};

// Pressure objective: Huber penalties on both pressures plus the waveform
// reconstruction distance.
template <typename S>
stage2_terms<S> l_bp(const tensor<S>& sbp_hat, const tensor<S>& dbp_hat, double sbp, double dbp,
                     const physio_signal& y_a, const physio_signal& abp,
                     const loss_weights& w = {}) {
    w.validate();
    stage2_terms<S> t;
    t.sbp = huber(sbp_hat, S(sbp), S(w.delta));
    t.dbp = huber(dbp_hat, S(dbp), S(w.delta));
    t.abp = l_abp(y_a, sbp_hat, dbp_hat, abp);
    t.total = add(add(t.sbp, t.dbp), t.abp);
    return t;
}

}  // namespace phasebeat
