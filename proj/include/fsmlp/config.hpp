#pragma once

#include <map>
#include <string>

#include "fsmlp/data.hpp"
#include "fsmlp/layers.hpp"
#include "fsmlp/model.hpp"
#include "fsmlp/training.hpp"

namespace fsmlp::cli {

// Config files are flat key=value lines grouped under [section] headers;
// '#' starts a comment. Keys flatten to "section.key". Unknown keys are hard
// errors so typos cannot silently change a run.
std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::string& origin);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct RunConfig {
    model::ModelConfig model;
    training::TrainConfig train;
    layers::MixerSpec mixer;
    std::string data_path;
    std::string dataset_kind = "auto";  // auto | ett | other
    bool raw_metrics = false;
    std::string out_root;  // defaults to $FSMLP_OUT or "runs"
    std::string run_name = "run";

    RunConfig();

    void apply(const std::map<std::string, std::string>& kv);
    void apply_one(const std::string& key, const std::string& value);

    // Full key set in a fixed order; loading this text reproduces the run.
    std::string resolved_text() const;

    data::SplitRatios ratios() const;
    std::string run_dir() const;
};

}  // namespace fsmlp::cli
