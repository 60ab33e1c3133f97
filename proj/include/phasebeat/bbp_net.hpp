// Stage-2 network: consumes a six-channel stack of the two phase-shifted
// pulse signals plus their first and second derivatives, passes it through
// kernel-selecting depthwise-separable blocks, and regresses systolic and
// diastolic pressure through bounded sigmoid output layers.

#pragma once

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/init.hpp"
#include "phasebeat/nn_ops.hpp"
#include "phasebeat/signal.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

// Output range constraints. Predictions live strictly inside (lo, hi); the
// temperature tau flattens the sigmoid so mid-range targets stay in the
// near-linear region.
struct bp_bounds {
    double sbp_lo = 85.0, sbp_hi = 155.0;
    double dbp_lo = 45.0, dbp_hi = 95.0;
    double tau = 2.0;

    void validate() const {
        require(sbp_lo < sbp_hi && dbp_lo < dbp_hi, "bp_bounds: empty range");
        require(tau > 0, "bp_bounds: tau must be positive");
    }
};

struct bbp_config {
    std::int64_t in_channels = 6;
    std::vector<std::int64_t> block_channels = {32, 64, 64, 64};
    std::int64_t select_mid = 16;  // bottleneck width of the branch-selection MLP
    std::int64_t head_reduce = 4;  // channel reduction inside the head gates
    bp_bounds bounds;

    static bbp_config full() { return {}; }

    // Minimal profile for finite-difference gradient checks.
    static bbp_config tiny_profile() {
        bbp_config c;
        c.block_channels = {8, 12, 12, 12};
        c.select_mid = 4;
        c.head_reduce = 2;
        return c;
    }

    std::int64_t feature_channels() const { return block_channels.back(); }

    void validate() const {
        bounds.validate();
        require(in_channels > 0 && !block_channels.empty(), "bbp_config: bad channels");
        for (auto c : block_channels)
            require(c >= 4 && c % 2 == 0, "bbp_config: block channels must be even and >= 4");
        require(select_mid > 0, "bbp_config: bad select_mid");
        require(head_reduce > 0 && feature_channels() % head_reduce == 0,
                "bbp_config: head_reduce must divide the feature width");
    }
};

// lo + (hi - lo) * sigmoid(z / tau): strictly inside (lo, hi), strictly
// increasing in z, and exactly the midpoint at z = 0.
template <typename S>
tensor<S> scaled_sigmoid(const tensor<S>& z, double lo, double hi, double tau) {
    require(hi > lo && tau > 0, "scaled_sigmoid: bad bounds");
    return add_scalar(scale(sigmoid(scale(z, S(1.0 / tau))), S(hi - lo)), S(lo));
}

template <typename S>
struct bbp_outputs {
    tensor<S> sbp, dbp;      // bounded estimates, shape [1]
    tensor<S> z_sbp, z_dbp;  // unbounded head outputs, shape [1]
};

template <typename S>
class bbp_net {
  public:
    struct dws_branch {
        tensor<S> dw_w, dw_b;  // per-channel temporal taps
        tensor<S> pw_w, pw_b;  // pointwise channel mix
        std::int64_t k;
    };
    // Two depthwise-separable branches with kernels 3 and 5, blended by a
    // per-channel softmax computed from the pooled sum of both branches,
    // plus a residual path (pointwise projection when the width changes).
    struct msf_block {
        dws_branch b3, b5;
        tensor<S> fc1_w, fc1_b;  // C_out -> select_mid
        tensor<S> fc2_w, fc2_b;  // select_mid -> 2 * C_out
        tensor<S> proj_w, proj_b;
        bool has_proj = false;
        std::int64_t c_in = 0, c_out = 0;
    };
    // Bottleneck attention gate (channel branch via pooled MLP, temporal
    // branch via pointwise convolutions), residual add, then a mixing
    // convolution pooled down to one unbounded scalar.
    struct bp_head {
        tensor<S> ch1_w, ch1_b;  // C -> C/r
        tensor<S> ch2_w, ch2_b;  // C/r -> C
        tensor<S> t1_w, t1_b;    // pointwise C -> C/r
        tensor<S> t2_w, t2_b;    // pointwise C/r -> 1
        tensor<S> mix_w, mix_b;  // k = 3 convolution C -> C/2
        tensor<S> out_w, out_b;  // final linear C/2 -> 1
    };

    explicit bbp_net(bbp_config cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(derive_seed(seed, 0xbb9));
        stem_w_ = tensor<S>::zeros({cfg_.in_channels, cfg_.in_channels, 1}, true);
        stem_b_ = tensor<S>::zeros({cfg_.in_channels}, true);
        detail::fill_uniform(stem_w_, cfg_.in_channels, rng, detail::weight_gain);
        detail::fill_uniform(stem_b_, cfg_.in_channels, rng);
        std::int64_t c_in = cfg_.in_channels;
        for (auto c_out : cfg_.block_channels) {
            blocks_.push_back(make_block(c_in, c_out, rng));
            c_in = c_out;
        }
        sbp_head_ = make_head(rng);
        dbp_head_ = make_head(rng);
    }

    const bbp_config& config() const { return cfg_; }

    bbp_outputs<S> forward(const tensor<S>& x) const {
        require(x.shape().size() == 2 && x.shape()[0] == cfg_.in_channels,
                "bbp_net: bad input shape");
        tensor<S> h = hardswish(conv1d(x, stem_w_, stem_b_, 1, 0));
        for (const auto& blk : blocks_) h = run_block(blk, h);
        bbp_outputs<S> out;
        out.z_sbp = run_head(sbp_head_, h);
        out.z_dbp = run_head(dbp_head_, h);
        const auto& b = cfg_.bounds;
        out.sbp = scaled_sigmoid(out.z_sbp, b.sbp_lo, b.sbp_hi, b.tau);
        out.dbp = scaled_sigmoid(out.z_dbp, b.dbp_lo, b.dbp_hi, b.tau);
        return out;
    }

    tensor<S> run_block(const msf_block& blk, const tensor<S>& x) const {
        auto branch = [&](const dws_branch& br) {
            tensor<S> d = depthwise_conv1d(x, br.dw_w, br.dw_b, 1, same_pad(br.k, 1));
            return hardswish(conv1d(d, br.pw_w, br.pw_b, 1, 0));
        };
        tensor<S> b3 = branch(blk.b3);
        tensor<S> b5 = branch(blk.b5);
        tensor<S> s = gap_time(add(b3, b5));
        tensor<S> mid = hardswish(linear(s, blk.fc1_w, blk.fc1_b));
        tensor<S> w = softmax(reshape(linear(mid, blk.fc2_w, blk.fc2_b), {2, blk.c_out}), 0);
        tensor<S> w3 = reshape(slice0(w, 0, 1), {blk.c_out, 1});
        tensor<S> w5 = reshape(slice0(w, 1, 1), {blk.c_out, 1});
        tensor<S> sel = add(mul(b3, w3), mul(b5, w5));
        tensor<S> res = blk.has_proj ? conv1d(x, blk.proj_w, blk.proj_b, 1, 0) : x;
        return add(sel, res);
    }

    tensor<S> run_head(const bp_head& h, const tensor<S>& x) const {
        const std::int64_t c = cfg_.feature_channels();
        tensor<S> ch = linear(hardswish(linear(gap_time(x), h.ch1_w, h.ch1_b)), h.ch2_w, h.ch2_b);
        tensor<S> tm = conv1d(hardswish(conv1d(x, h.t1_w, h.t1_b, 1, 0)), h.t2_w, h.t2_b, 1, 0);
        tensor<S> gate = sigmoid(add(reshape(ch, {c, 1}), tm));
        tensor<S> y = add(x, mul(x, gate));
        tensor<S> m = hardswish(conv1d(y, h.mix_w, h.mix_b, 1, same_pad(3, 1)));
        return linear(gap_time(m), h.out_w, h.out_b);
    }

    param_list<S> params() {
        param_list<S> p;
        p.emplace_back("stem.weight", stem_w_);
        p.emplace_back("stem.bias", stem_b_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            auto& blk = blocks_[i];
            const std::string tag = "block." + std::to_string(i);
            auto br = [&p, &tag](const std::string& name, dws_branch& b) {
                p.emplace_back(tag + "." + name + ".dw.weight", b.dw_w);
                p.emplace_back(tag + "." + name + ".dw.bias", b.dw_b);
                p.emplace_back(tag + "." + name + ".pw.weight", b.pw_w);
                p.emplace_back(tag + "." + name + ".pw.bias", b.pw_b);
            };
            br("b3", blk.b3);
            br("b5", blk.b5);
            p.emplace_back(tag + ".select.0.weight", blk.fc1_w);
            p.emplace_back(tag + ".select.0.bias", blk.fc1_b);
            p.emplace_back(tag + ".select.1.weight", blk.fc2_w);
            p.emplace_back(tag + ".select.1.bias", blk.fc2_b);
            if (blk.has_proj) {
                p.emplace_back(tag + ".proj.weight", blk.proj_w);
                p.emplace_back(tag + ".proj.bias", blk.proj_b);
            }
        }
        auto hd = [&p](const std::string& tag, bp_head& h) {
            p.emplace_back(tag + ".ch.0.weight", h.ch1_w);
            p.emplace_back(tag + ".ch.0.bias", h.ch1_b);
            p.emplace_back(tag + ".ch.1.weight", h.ch2_w);
            p.emplace_back(tag + ".ch.1.bias", h.ch2_b);
            p.emplace_back(tag + ".t.0.weight", h.t1_w);
            p.emplace_back(tag + ".t.0.bias", h.t1_b);
            p.emplace_back(tag + ".t.1.weight", h.t2_w);
            p.emplace_back(tag + ".t.1.bias", h.t2_b);
            p.emplace_back(tag + ".mix.weight", h.mix_w);
            p.emplace_back(tag + ".mix.bias", h.mix_b);
            p.emplace_back(tag + ".out.weight", h.out_w);
            p.emplace_back(tag + ".out.bias", h.out_b);
        };
        hd("head_sbp", sbp_head_);
        hd("head_dbp", dbp_head_);
        return p;
    }

    // Realized architecture and the fixed input-channel order, for
    // reproducibility audits and checkpoint manifests.
    nlohmann::json describe() const {
        nlohmann::json blocks = nlohmann::json::array();
        for (const auto& blk : blocks_)
            blocks.push_back({{"in_channels", blk.c_in},
                              {"out_channels", blk.c_out},
                              {"kernels", {3, 5}},
                              {"select_mid", cfg_.select_mid},
                              {"residual", blk.has_proj ? "projected" : "identity"}});
        return {{"input_channels",
                 {"facial", "acral", "vpg_facial", "vpg_acral", "apg_facial", "apg_acral"}},
                {"blocks", blocks},
                {"head_reduce", cfg_.head_reduce},
                {"bounds",
                 {{"sbp", {cfg_.bounds.sbp_lo, cfg_.bounds.sbp_hi}},
                  {"dbp", {cfg_.bounds.dbp_lo, cfg_.bounds.dbp_hi}},
                  {"tau", cfg_.bounds.tau}}}};
    }

    msf_block& block(std::size_t i) { return blocks_.at(i); }
    std::size_t block_count() const { return blocks_.size(); }
    bp_head& sbp_head() { return sbp_head_; }
    bp_head& dbp_head() { return dbp_head_; }

  private:
    msf_block make_block(std::int64_t c_in, std::int64_t c_out, std::mt19937_64& rng) {
        msf_block blk;
        blk.c_in = c_in;
        blk.c_out = c_out;
        auto br = [&](std::int64_t k) {
            dws_branch b;
            b.k = k;
            b.dw_w = tensor<S>::zeros({c_in, k}, true);
            b.dw_b = tensor<S>::zeros({c_in}, true);
            b.pw_w = tensor<S>::zeros({c_out, c_in, 1}, true);
            b.pw_b = tensor<S>::zeros({c_out}, true);
            detail::fill_uniform(b.dw_w, k, rng, detail::weight_gain);
            detail::fill_uniform(b.dw_b, k, rng);
            detail::fill_uniform(b.pw_w, c_in, rng, detail::weight_gain);
            detail::fill_uniform(b.pw_b, c_in, rng);
            return b;
        };
        blk.b3 = br(3);
        blk.b5 = br(5);
        blk.fc1_w = tensor<S>::zeros({cfg_.select_mid, c_out}, true);
        blk.fc1_b = tensor<S>::zeros({cfg_.select_mid}, true);
        blk.fc2_w = tensor<S>::zeros({2 * c_out, cfg_.select_mid}, true);
        blk.fc2_b = tensor<S>::zeros({2 * c_out}, true);
        detail::fill_uniform(blk.fc1_w, c_out, rng, detail::weight_gain);
        detail::fill_uniform(blk.fc1_b, c_out, rng);
        detail::fill_uniform(blk.fc2_w, cfg_.select_mid, rng, detail::weight_gain);
        detail::fill_uniform(blk.fc2_b, cfg_.select_mid, rng);
        blk.has_proj = c_in != c_out;
        if (blk.has_proj) {
            blk.proj_w = tensor<S>::zeros({c_out, c_in, 1}, true);
            blk.proj_b = tensor<S>::zeros({c_out}, true);
            detail::fill_uniform(blk.proj_w, c_in, rng, detail::weight_gain);
            detail::fill_uniform(blk.proj_b, c_in, rng);
        }
        return blk;
    }

    bp_head make_head(std::mt19937_64& rng) {
        const std::int64_t c = cfg_.feature_channels();
        const std::int64_t r = c / cfg_.head_reduce;
        bp_head h;
        h.ch1_w = tensor<S>::zeros({r, c}, true);
        h.ch1_b = tensor<S>::zeros({r}, true);
        h.ch2_w = tensor<S>::zeros({c, r}, true);
        h.ch2_b = tensor<S>::zeros({c}, true);
        h.t1_w = tensor<S>::zeros({r, c, 1}, true);
        h.t1_b = tensor<S>::zeros({r}, true);
        h.t2_w = tensor<S>::zeros({1, r, 1}, true);
        h.t2_b = tensor<S>::zeros({1}, true);
        h.mix_w = tensor<S>::zeros({c / 2, c, 3}, true);
        h.mix_b = tensor<S>::zeros({c / 2}, true);
        h.out_w = tensor<S>::zeros({1, c / 2}, true);
        h.out_b = tensor<S>::zeros({1}, true);
        detail::fill_uniform(h.ch1_w, c, rng, detail::weight_gain);
        detail::fill_uniform(h.ch1_b, c, rng);
        detail::fill_uniform(h.ch2_w, r, rng, detail::weight_gain);
        detail::fill_uniform(h.ch2_b, r, rng);
        detail::fill_uniform(h.t1_w, c, rng, detail::weight_gain);
        detail::fill_uniform(h.t1_b, c, rng);
        detail::fill_uniform(h.t2_w, r, rng, detail::weight_gain);
        detail::fill_uniform(h.t2_b, r, rng);
        detail::fill_uniform(h.mix_w, 3 * c, rng, detail::weight_gain);
        detail::fill_uniform(h.mix_b, 3 * c, rng);
        detail::fill_uniform(h.out_w, c / 2, rng, detail::weight_gain);
        detail::fill_uniform(h.out_b, c / 2, rng);
        return h;
    }

    bbp_config cfg_;
    tensor<S> stem_w_, stem_b_;
    std::vector<msf_block> blocks_;
    bp_head sbp_head_, dbp_head_;
};

// Six-channel stack [facial, acral, VPG_f, VPG_a, APG_f, APG_a]: the two
// standardized pulse signals, then standardized first and second derivatives
// of those standardized channels. Throws on length mismatch or zero variance.
template <typename S>
tensor<S> build_bbp_input(const physio_signal& facial, const physio_signal& acral) {
    require(facial.samples.size() == acral.samples.size(), "build_bbp_input: length mismatch");
    require(facial.rate == acral.rate, "build_bbp_input: rate mismatch");
    const auto t = static_cast<std::int64_t>(facial.samples.size());
    const physio_signal ch0 = standardize(facial);
    const physio_signal ch1 = standardize(acral);
    const physio_signal chans[6] = {ch0,
                                    ch1,
                                    standardize(derivative(ch0, 1)),
                                    standardize(derivative(ch1, 1)),
                                    standardize(derivative(ch0, 2)),
                                    standardize(derivative(ch1, 2))};
    std::vector<S> data;
    data.reserve(static_cast<std::size_t>(6 * t));
    for (const auto& c : chans)
        for (double v : c.samples) data.push_back(static_cast<S>(v));
    return tensor<S>::from({6, t}, std::move(data));
}

}  // namespace phasebeat
