// Config (de)serialization and checkpoint-to-network loading. Checkpoints
// carry their architecture in the manifest, so a saved network can be rebuilt
// from the file pair alone.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/bbp_net.hpp"
#include "phasebeat/checkpoint.hpp"
#include "phasebeat/common.hpp"
#include "phasebeat/drp_net.hpp"

namespace phasebeat {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::vector<std::string> known,
                                const std::string& where) {
    for (const auto& [key, unused] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw value_error("unknown key \"" + key + "\" in " + where);
}

}  // namespace detail

inline nlohmann::json drp_config_json(const drp_config& c) {
    return {{"frames", c.frames},
            {"height", c.height},
            {"width", c.width},
            {"in_channels", c.in_channels},
            {"channels", c.channels},
            {"t_dilation", c.t_dilation},
            {"pool_after", c.pool_after},
            {"pool_kernel", c.pool_kernel},
            {"inter_tap", c.inter_tap}};
}

// Strict parse: every key optional against the defaults, unknown keys
// rejected, and the assembled config validated before use.
inline drp_config drp_config_from_json(const nlohmann::json& j) {
    drp_config c;
    try {
        detail::reject_unknown_keys(j,
                                    {"frames", "height", "width", "in_channels", "channels",
                                     "t_dilation", "pool_after", "pool_kernel", "inter_tap"},
                                    "pulse network config");
        c.frames = j.value("frames", c.frames);
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.in_channels = j.value("in_channels", c.in_channels);
        c.channels = j.value("channels", c.channels);
        c.t_dilation = j.value("t_dilation", c.t_dilation);
        c.pool_after = j.value("pool_after", c.pool_after);
        c.pool_kernel = j.value("pool_kernel", c.pool_kernel);
        c.inter_tap = j.value("inter_tap", c.inter_tap);
    } catch (const nlohmann::json::exception& e) {
        throw value_error(std::string("pulse network config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json bbp_config_json(const bbp_config& c) {
    return {{"in_channels", c.in_channels},
            {"block_channels", c.block_channels},
            {"select_mid", c.select_mid},
            {"head_reduce", c.head_reduce},
            {"bounds",
             {{"sbp_lo", c.bounds.sbp_lo},
              {"sbp_hi", c.bounds.sbp_hi},
              {"dbp_lo", c.bounds.dbp_lo},
              {"dbp_hi", c.bounds.dbp_hi},
              {"tau", c.bounds.tau}}}};
}

inline bbp_config bbp_config_from_json(const nlohmann::json& j) {
    bbp_config c;
    try {
        detail::reject_unknown_keys(
            j, {"in_channels", "block_channels", "select_mid", "head_reduce", "bounds"},
            "pressure network config");
        c.in_channels = j.value("in_channels", c.in_channels);
        c.block_channels = j.value("block_channels", c.block_channels);
        c.select_mid = j.value("select_mid", c.select_mid);
        c.head_reduce = j.value("head_reduce", c.head_reduce);
        if (j.contains("bounds")) {
            const auto& b = j.at("bounds");
            detail::reject_unknown_keys(b, {"sbp_lo", "sbp_hi", "dbp_lo", "dbp_hi", "tau"},
                                        "pressure bounds");
            c.bounds.sbp_lo = b.value("sbp_lo", c.bounds.sbp_lo);
            c.bounds.sbp_hi = b.value("sbp_hi", c.bounds.sbp_hi);
            c.bounds.dbp_lo = b.value("dbp_lo", c.bounds.dbp_lo);
            c.bounds.dbp_hi = b.value("dbp_hi", c.bounds.dbp_hi);
            c.bounds.tau = b.value("tau", c.bounds.tau);
        }
    } catch (const nlohmann::json::exception& e) {
        throw value_error(std::string("pressure network config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace detail {

inline nlohmann::json checkpoint_config(const std::string& path, const std::string& model) {
    const auto manifest = load_manifest(path);
    try {
        const auto& extra = manifest.at("extra");
        require(extra.at("model").get<std::string>() == model,
                "checkpoint: " + path + " does not hold a \"" + model + "\" model");
        return extra.at("config");
    } catch (const nlohmann::json::exception& e) {
        throw value_error("checkpoint manifest " + path + ".json: " + e.what());
    }
}

}  // namespace detail

// Rebuilds the network described by the manifest and fills in the stored
// parameter values. The seed only feeds the throwaway initialization.
template <typename S>
drp_net<S> load_drp_net(const std::string& path) {
    const auto cfg = drp_config_from_json(detail::checkpoint_config(path, "drp"));
    drp_net<S> net(cfg, 0);
    auto params = net.params();
    load_checkpoint(path, params);
    return net;
}

template <typename S>
bbp_net<S> load_bbp_net(const std::string& path) {
    const auto cfg = bbp_config_from_json(detail::checkpoint_config(path, "bbp"));
    bbp_net<S> net(cfg, 0);
    auto params = net.params();
    load_checkpoint(path, params);
    return net;
}

}  // namespace phasebeat
