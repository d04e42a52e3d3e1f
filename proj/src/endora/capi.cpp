#include "endora.h"

#include <fstream>
#include <sstream>

#include "endora/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

endora_status fail(endora_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
endora_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return ENDORA_OK;
    } catch (const endora::ContractError& e) {
        return fail(ENDORA_USAGE_ERROR, e.what());
    } catch (const endora::ConfigError& e) {
        return fail(ENDORA_USAGE_ERROR, e.what());
    } catch (const endora::NumericError& e) {
        return fail(ENDORA_NUMERIC_ERROR, e.what());
    } catch (const endora::DataError& e) {
        return fail(ENDORA_DATA_ERROR, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(ENDORA_USAGE_ERROR, std::string("config: ") + e.what());
    } catch (const std::exception& e) {
        return fail(ENDORA_DATA_ERROR, e.what());
    }
}

const char* require_arg(const char* s, const char* name) {
    if (!s) throw endora::ContractError(std::string(name) + " must not be null");
    return s;
}

endora::train::TrainConfig parse_train_config(const char* config_json) {
    if (!config_json || !*config_json) return {};
    std::string text(config_json);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{')
        return endora::train::TrainConfig::from_json(nlohmann::json::parse(text));
    std::ifstream in(text);
    if (!in) throw endora::DataError("cannot open config file: " + text);
    std::ostringstream buf;
    buf << in.rdbuf();
    return endora::train::TrainConfig::from_json(nlohmann::json::parse(buf.str()));
}

}  // namespace

struct endora_checkpoint {
    endora::pipeline::InspectInfo info;
    std::string config_json;
};

extern "C" {

const char* endora_version(void) { return endora::pipeline::kVersion; }

const char* endora_last_error(void) { return g_last_error.c_str(); }

endora_status endora_make_synthetic(const char* root, long videos, long frames, long size,
                                    uint64_t seed) {
    return guarded([&] {
        endora::pipeline::make_synthetic(require_arg(root, "root"), videos, frames, size, seed);
    });
}

endora_status endora_train(const char* config_json, const char* data_root, const char* out_dir) {
    return guarded([&] {
        auto cfg = parse_train_config(config_json);
        endora::pipeline::train_run(cfg, require_arg(data_root, "data_root"),
                                    require_arg(out_dir, "out_dir"));
    });
}

endora_status endora_sample(const char* checkpoint, long count, uint64_t seed, const char* out_dir,
                            int use_ema) {
    return guarded([&] {
        endora::pipeline::sample_run(require_arg(checkpoint, "checkpoint"), count, seed,
                                     require_arg(out_dir, "out_dir"), use_ema != 0);
    });
}

endora_status endora_eval(const char* real_root, const char* generated_root, long count,
                          long clip_len, uint64_t seed, const char* report_path) {
    return guarded([&] {
        endora::pipeline::eval_run(require_arg(real_root, "real_root"),
                                   require_arg(generated_root, "generated_root"), count, clip_len,
                                   seed, require_arg(report_path, "report_path"));
    });
}

endora_status endora_checkpoint_open(const char* path, endora_checkpoint** out) {
    return guarded([&] {
        require_arg(path, "path");
        if (!out) throw endora::ContractError("out must not be null");
        auto ck = std::make_unique<endora_checkpoint>();
        ck->info = endora::pipeline::inspect_checkpoint(path);
        ck->config_json = ck->info.config.dump(2);
        *out = ck.release();
    });
}

void endora_checkpoint_close(endora_checkpoint* ck) { delete ck; }

long endora_checkpoint_step(const endora_checkpoint* ck) { return ck ? ck->info.step : -1; }

long endora_checkpoint_param_count(const endora_checkpoint* ck) {
    return ck ? ck->info.param_count : -1;
}

const char* endora_checkpoint_config_json(const endora_checkpoint* ck) {
    return ck ? ck->config_json.c_str() : "";
}

}  // extern "C"
