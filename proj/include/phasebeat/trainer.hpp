// Two-stage optimization. Stage 1 fits the video network to paired pulse
// targets; stage 2 freezes it and fits the pressure network to its output
// signals. Both loops are single-threaded and bitwise reproducible for a
// fixed (seed, config, dataset) triple.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/augment.hpp"
#include "phasebeat/bbp_net.hpp"
#include "phasebeat/checkpoint.hpp"
#include "phasebeat/common.hpp"
#include "phasebeat/drp_net.hpp"
#include "phasebeat/losses.hpp"
#include "phasebeat/model_io.hpp"
#include "phasebeat/signal.hpp"
#include "phasebeat/synth.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

// Channel policy for the pressure stage. The single-channel variants feed
// one signal into both slots so the architecture is held fixed and only the
// information content changes; shuffled_acral pairs each window's facial
// signal with another window's acral signal, severing the delay coupling
// while preserving the marginal distribution.
enum class stage2_inputs { both, facial_only, acral_only, shuffled_acral };

inline const char* to_string(stage2_inputs v) {
    switch (v) {
        case stage2_inputs::facial_only: return "facial_only";
        case stage2_inputs::acral_only: return "acral_only";
        case stage2_inputs::shuffled_acral: return "shuffled_acral";
        default: return "both";
    }
}

inline stage2_inputs stage2_inputs_from_string(const std::string& s) {
    if (s == "both") return stage2_inputs::both;
    if (s == "facial_only") return stage2_inputs::facial_only;
    if (s == "acral_only") return stage2_inputs::acral_only;
    if (s == "shuffled_acral") return stage2_inputs::shuffled_acral;
    throw value_error("unknown stage2 input mode: " + s);
}

struct train_config {
    double lr = 1e-3;
    std::int64_t batch_size = 8;
    std::int64_t epochs = 60;
    std::uint64_t seed = 0;
    loss_weights weights;
    // Keep-only by default: augmentation is opt-in and training folds only.
    augment_ratios augmentation{1.0, 0.0, 0.0};
    std::int64_t checkpoint_every = 0;  // epochs between snapshots; 0 = final only
    double clip_norm = 5.0;
    stage2_inputs inputs = stage2_inputs::both;

    void validate() const {
        require(lr > 0, "train_config: lr must be positive");
        require(batch_size >= 1, "train_config: batch_size must be at least 1");
        require(epochs >= 1, "train_config: epochs must be at least 1");
        require(checkpoint_every >= 0, "train_config: negative checkpoint cadence");
        require(clip_norm > 0, "train_config: clip_norm must be positive");
        weights.validate();
        augmentation.validate();
    }
};

inline nlohmann::json train_config_json(const train_config& c) {
    return {{"lr", c.lr},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"weights",
             {{"lambda1", c.weights.lambda1},
              {"lambda2", c.weights.lambda2},
              {"delta", c.weights.delta}}},
            {"augmentation",
             {{"keep", c.augmentation.keep},
              {"slow", c.augmentation.slow},
              {"fast", c.augmentation.fast}}},
            {"checkpoint_every", c.checkpoint_every},
            {"clip_norm", c.clip_norm},
            {"stage2_inputs", to_string(c.inputs)}};
}

// Strict parse: every key optional, unknown keys rejected so config typos
// cannot silently fall back to defaults.
inline train_config train_config_from_json(const nlohmann::json& j) {
    train_config c;
    try {
        detail::reject_unknown_keys(j,
                                          {"lr", "batch_size", "epochs", "seed", "weights",
                                           "augmentation", "checkpoint_every", "clip_norm",
                                           "stage2_inputs"},
                                          "train config");
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.seed = j.value("seed", c.seed);
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            detail::reject_unknown_keys(w, {"lambda1", "lambda2", "delta"}, "weights");
            c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
            c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
            c.weights.delta = w.value("delta", c.weights.delta);
        }
        if (j.contains("augmentation")) {
            const auto& a = j.at("augmentation");
            detail::reject_unknown_keys(a, {"keep", "slow", "fast"}, "augmentation");
            c.augmentation.keep = a.value("keep", c.augmentation.keep);
            c.augmentation.slow = a.value("slow", c.augmentation.slow);
            c.augmentation.fast = a.value("fast", c.augmentation.fast);
        }
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        if (j.contains("stage2_inputs"))
            c.inputs = stage2_inputs_from_string(j.at("stage2_inputs").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw value_error(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- optimizer ---------------------------------------------------------------------------

template <typename S>
struct adam_state {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<S>> m, v;
};

// Standard bias-corrected update, reading each parameter's accumulated
// gradient buffer (an empty buffer counts as zeros). Moments are allocated
// lazily on the first step.
template <typename S>
void adam_step(param_list<S>& params, adam_state<S>& st, double lr) {
    require(lr > 0, "adam_step: lr must be positive");
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto n = static_cast<std::size_t>(params[i].second.numel());
            st.m[i].assign(n, S(0));
            st.v[i].assign(n, S(0));
        }
    }
    require(st.m.size() == params.size() && st.v.size() == params.size(),
            "adam_step: state does not match the parameter list");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = params[i].second;
        auto& val = t.value_mut();
        require(st.m[i].size() == val.size(), "adam_step: moment shape mismatch");
        const auto& g = t.grad();
        for (std::size_t k = 0; k < val.size(); ++k) {
            const double gk = g.empty() ? 0.0 : double(g[k]);
            const double mk = st.beta1 * double(st.m[i][k]) + (1.0 - st.beta1) * gk;
            const double vk = st.beta2 * double(st.v[i][k]) + (1.0 - st.beta2) * gk * gk;
            st.m[i][k] = S(mk);
            st.v[i][k] = S(vk);
            val[k] -= S(lr * (mk / bc1) / (std::sqrt(vk / bc2) + st.eps));
        }
    }
}

template <typename S>
double global_grad_norm(const param_list<S>& params) {
    double acc = 0;
    for (const auto& [name, t] : params)
        for (S g : t.grad()) acc += double(g) * double(g);
    return std::sqrt(acc);
}

// Scales every gradient so the global norm does not exceed max_norm; returns
// the pre-clip norm.
template <typename S>
double clip_gradients(param_list<S>& params, double max_norm) {
    require(max_norm > 0, "clip_gradients: max_norm must be positive");
    const double norm = global_grad_norm(params);
    if (norm > max_norm && std::isfinite(norm)) {
        const S f = S(max_norm / norm);
        for (auto& [name, t] : params) {
            auto& node = *t.impl();
            for (auto& g : node.grad) g *= f;
        }
    }
    return norm;
}

// ---- loss log ----------------------------------------------------------------------------

// One row per optimizer step, batch-mean components. Stage 1 leaves the
// pressure columns zero and stage 2 the pulse columns, so one schema covers
// both logs.
struct loss_row {
    std::int64_t step = 0;
    double freq_f = 0, freq_a = 0, hr_f = 0, hr_a = 0, time = 0, pv_f = 0, pv_a = 0;
    double bp_sbp = 0, bp_dbp = 0, abp = 0;

    double stage1_total(const loss_weights& w) const {
        return w.lambda1 * (hr_f + hr_a) + w.lambda2 * (freq_f + freq_a) + pv_f + pv_a + time;
    }
    double stage2_total() const { return bp_sbp + bp_dbp + abp; }
};

inline const char* loss_log_header() {
    return "step,l_freq_f,l_freq_a,l_hr_f,l_hr_a,l_time,l_pv_f,l_pv_a,l_bp_sbp,l_bp_dbp,l_abp";
}

inline void write_loss_log(const std::string& path, const std::vector<loss_row>& rows) {
    std::ofstream f(path);
    require(f.good(), "loss log: cannot open " + path);
    f << loss_log_header() << "\n";
    f.precision(17);
    for (const auto& r : rows)
        f << r.step << ',' << r.freq_f << ',' << r.freq_a << ',' << r.hr_f << ',' << r.hr_a << ','
          << r.time << ',' << r.pv_f << ',' << r.pv_a << ',' << r.bp_sbp << ',' << r.bp_dbp << ','
          << r.abp << "\n";
    require(f.good(), "loss log: write failed for " + path);
}

inline std::vector<loss_row> read_loss_log(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "loss log: cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(f, line)) && line == loss_log_header(),
            "loss log: bad header in " + path);
    std::vector<loss_row> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        loss_row r;
        double step = 0;
        double* fields[11] = {&step,    &r.freq_f, &r.freq_a, &r.hr_f,   &r.hr_a,  &r.time,
                              &r.pv_f,  &r.pv_a,   &r.bp_sbp, &r.bp_dbp, &r.abp};
        std::size_t pos = 0;
        for (int i = 0; i < 11; ++i) {
            const auto next = line.find(',', pos);
            require((next == std::string::npos) == (i == 10), "loss log: bad row in " + path);
            *fields[i] = std::stod(line.substr(pos, next - pos));
            pos = next + 1;
        }
        r.step = static_cast<std::int64_t>(std::llround(step));
        rows.push_back(r);
    }
    return rows;
}

// ---- shared loop helpers -------------------------------------------------------------------

namespace detail_train {

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                            std::int64_t epoch) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0xe0c0 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

[[noreturn]] inline void abort_non_finite(int stage, std::int64_t step, std::int64_t epoch,
                                          const std::vector<std::size_t>& batch,
                                          const std::vector<double>& window_totals,
                                          const std::string& out_dir) {
    nlohmann::json dump{{"stage", stage},
                        {"step", step},
                        {"epoch", epoch},
                        {"windows", batch},
                        {"window_totals", window_totals}};
    std::string where = "training aborted: non-finite loss at step " + std::to_string(step);
    if (!out_dir.empty()) {
        const auto path =
            (std::filesystem::path(out_dir) / ("stage" + std::to_string(stage) + "_bad_batch.json"))
                .string();
        std::ofstream f(path);
        if (f.good()) {
            f << dump.dump(2) << "\n";
            where += "; batch dump at " + path;
        }
    } else {
        where += "; batch " + dump.at("windows").dump();
    }
    throw train_error(where);
}

inline void ensure_dir(const std::string& out_dir) {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
}

}  // namespace detail_train

// Materializes the training windows for a set of plans under the configured
// augmentation ratios. One mode is drawn per source window (replacement
// semantics, set size preserved); keep-only ratios reproduce the plain
// windows, which is the default path.
inline std::vector<window_sample> build_training_windows(const std::vector<window_plan>& plans,
                                                         const augment_ratios& ratios,
                                                         std::uint64_t seed) {
    std::vector<double> hrs;
    hrs.reserve(plans.size());
    for (const auto& p : plans) hrs.push_back(p.spec.hr);
    const auto assignments = plan_augmentation(hrs, ratios, seed);
    auto realized = realize_augmentation(plans, assignments);
    std::vector<window_sample> out;
    out.reserve(realized.size());
    for (auto& r : realized) out.push_back(std::move(r.window));
    return out;
}

// ---- stage 1 -------------------------------------------------------------------------------

template <typename S>
struct stage1_result {
    drp_net<S> net;
    std::vector<loss_row> log;
};

// Per batch: forward the video network on each window, apply the facial and
// the acral objective against the window's pseudo pulse target and rate
// label, sum with equal weight, and take one clipped Adam step on the batch
// mean. Gradients accumulate window by window so only one forward graph is
// alive at a time.
template <typename S>
stage1_result<S> train_stage1(const std::vector<window_sample>& train, const drp_config& dcfg,
                              const train_config& tcfg, const std::string& out_dir = "") {
    tcfg.validate();
    require(!train.empty(), "train_stage1: empty training set");
    for (const auto& w : train) {
        w.validate();
        require(w.clip.frames == dcfg.frames && w.clip.height == dcfg.height &&
                    w.clip.width == dcfg.width,
                "train_stage1: window geometry does not match the network config");
    }
    detail_train::ensure_dir(out_dir);

    drp_net<S> net(dcfg, derive_seed(tcfg.seed, 0xd291));
    auto params = net.params();
    adam_state<S> opt;
    std::vector<loss_row> log;
    std::int64_t step = 0;
    const nlohmann::json ckpt_extra{
        {"model", "drp"}, {"config", drp_config_json(dcfg)}, {"layers", net.describe()}};

    for (std::int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto order = detail_train::epoch_order(train.size(), tcfg.seed, epoch);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tcfg.batch_size) {
            const std::size_t bn = std::min<std::size_t>(tcfg.batch_size, order.size() - b0);
            const std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b0 + bn);
            for (auto& [name, t] : params) t.zero_grad();

            loss_row row;
            row.step = ++step;
            std::vector<double> window_totals;
            double batch_total = 0;
            for (const std::size_t idx : batch) {
                const auto& w = train[idx];
                const auto out = net.forward(clip_tensor<S>(w.clip));
                const auto tf = l_facial(out.facial, w.pseudo_ppg, w.hr_gt, tcfg.weights);
                const auto ta = l_acral(out.acral, w.pseudo_ppg, w.hr_gt, tcfg.weights);
                const tensor<S> total = scale(add(tf.total, ta.total), S(1.0 / double(bn)));
                total.backward();
                const double wt = double(total.item()) * double(bn);
                window_totals.push_back(wt);
                batch_total += wt;
                row.freq_f += double(tf.freq.item()) / double(bn);
                row.freq_a += double(ta.freq.item()) / double(bn);
                row.hr_f += double(tf.hr.item()) / double(bn);
                row.hr_a += double(ta.hr.item()) / double(bn);
                row.time += double(ta.time.item()) / double(bn);
                row.pv_f += double(tf.pv.item()) / double(bn);
                row.pv_a += double(ta.pv.item()) / double(bn);
            }
            if (!std::isfinite(batch_total))
                detail_train::abort_non_finite(1, step, epoch, batch, window_totals, out_dir);
            clip_gradients(params, tcfg.clip_norm);
            adam_step(params, opt, tcfg.lr);
            log.push_back(row);
        }
        if (!out_dir.empty() && tcfg.checkpoint_every > 0 &&
            (epoch + 1) % tcfg.checkpoint_every == 0 && epoch + 1 < tcfg.epochs) {
            char name[48];
            std::snprintf(name, sizeof(name), "drp_epoch%04lld.ckpt",
                          static_cast<long long>(epoch + 1));
            save_checkpoint((std::filesystem::path(out_dir) / name).string(), params, ckpt_extra);
        }
    }
    if (!out_dir.empty()) {
        save_checkpoint((std::filesystem::path(out_dir) / "drp.ckpt").string(), params,
                        ckpt_extra);
        write_loss_log((std::filesystem::path(out_dir) / "stage1_loss.csv").string(), log);
    }
    return {std::move(net), std::move(log)};
}

// ---- stage 2 -------------------------------------------------------------------------------

template <typename S>
struct stage2_result {
    bbp_net<S> net;
    std::vector<loss_row> log;
};

// The frozen video network runs exactly once per window with graph capture
// disabled; its signals are cached as constants, so no stage-2 backward can
// reach a stage-1 gradient buffer. The acral slot's signal also provides the
// pulse shape for the waveform reconstruction penalty.
template <typename S>
stage2_result<S> train_stage2(const std::vector<window_sample>& train, const drp_net<S>& drp,
                              const bbp_config& bcfg, const train_config& tcfg,
                              const std::string& out_dir = "") {
    tcfg.validate();
    bcfg.validate();
    require(!train.empty(), "train_stage2: empty training set");
    detail_train::ensure_dir(out_dir);

    std::vector<physio_signal> facial(train.size()), acral(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& w = train[i];
        w.validate();
        no_grad_guard guard;
        const auto out = drp.forward(clip_tensor<S>(w.clip));
        facial[i] = physio_signal{
            std::vector<double>(out.facial.value().begin(), out.facial.value().end()),
            w.clip.rate};
        acral[i] = physio_signal{
            std::vector<double>(out.acral.value().begin(), out.acral.value().end()),
            w.clip.rate};
        // A saturated frozen network is a runtime training failure, not a
        // usage error, so it aborts the same way a non-finite loss does.
        for (double v : facial[i].samples)
            if (!std::isfinite(v))
                throw train_error("train_stage2: non-finite frozen facial signal in window " +
                                  std::to_string(i));
        for (double v : acral[i].samples)
            if (!std::isfinite(v))
                throw train_error("train_stage2: non-finite frozen acral signal in window " +
                                  std::to_string(i));
    }

    std::vector<std::size_t> acral_from(train.size());
    std::iota(acral_from.begin(), acral_from.end(), std::size_t{0});
    if (tcfg.inputs == stage2_inputs::shuffled_acral) {
        std::mt19937_64 rng(derive_seed(tcfg.seed, 0xab1a));
        std::shuffle(acral_from.begin(), acral_from.end(), rng);
    }

    std::vector<tensor<S>> inputs(train.size());
    std::vector<physio_signal> slot_acral(train.size());
    std::vector<physio_signal> abp_dec(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const physio_signal& f = tcfg.inputs == stage2_inputs::acral_only ? acral[i] : facial[i];
        const physio_signal& a =
            tcfg.inputs == stage2_inputs::facial_only ? facial[i] : acral[acral_from[i]];
        inputs[i] = build_bbp_input<S>(f, a);
        slot_acral[i] = a;
        abp_dec[i] = decimate(train[i].abp, train[i].spec.abp_factor());
    }

    bbp_net<S> net(bcfg, derive_seed(tcfg.seed, 0xbb92));
    auto params = net.params();
    const nlohmann::json ckpt_extra{{"model", "bbp"},
                                    {"config", bbp_config_json(bcfg)},
                                    {"inputs", to_string(tcfg.inputs)}};
    adam_state<S> opt;
    std::vector<loss_row> log;
    std::int64_t step = 0;

    for (std::int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto order = detail_train::epoch_order(train.size(), tcfg.seed, epoch);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tcfg.batch_size) {
            const std::size_t bn = std::min<std::size_t>(tcfg.batch_size, order.size() - b0);
            const std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b0 + bn);
            for (auto& [name, t] : params) t.zero_grad();

            loss_row row;
            row.step = ++step;
            std::vector<double> window_totals;
            double batch_total = 0;
            for (const std::size_t idx : batch) {
                const auto& w = train[idx];
                const auto out = net.forward(inputs[idx]);
                const auto terms = l_bp(out.sbp, out.dbp, w.sbp_gt, w.dbp_gt, slot_acral[idx],
                                        abp_dec[idx], tcfg.weights);
                const tensor<S> total = scale(terms.total, S(1.0 / double(bn)));
                total.backward();
                const double wt = double(total.item()) * double(bn);
                window_totals.push_back(wt);
                batch_total += wt;
                row.bp_sbp += double(terms.sbp.item()) / double(bn);
                row.bp_dbp += double(terms.dbp.item()) / double(bn);
                row.abp += double(terms.abp.item()) / double(bn);
            }
            if (!std::isfinite(batch_total))
                detail_train::abort_non_finite(2, step, epoch, batch, window_totals, out_dir);
            clip_gradients(params, tcfg.clip_norm);
            adam_step(params, opt, tcfg.lr);
            log.push_back(row);
        }
        if (!out_dir.empty() && tcfg.checkpoint_every > 0 &&
            (epoch + 1) % tcfg.checkpoint_every == 0 && epoch + 1 < tcfg.epochs) {
            char name[48];
            std::snprintf(name, sizeof(name), "bbp_epoch%04lld.ckpt",
                          static_cast<long long>(epoch + 1));
            save_checkpoint((std::filesystem::path(out_dir) / name).string(), params, ckpt_extra);
        }
    }
    if (!out_dir.empty()) {
        save_checkpoint((std::filesystem::path(out_dir) / "bbp.ckpt").string(), params,
                        ckpt_extra);
        write_loss_log((std::filesystem::path(out_dir) / "stage2_loss.csv").string(), log);
    }
    return {std::move(net), std::move(log)};
}

}  // namespace phasebeat
