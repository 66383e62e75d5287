#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace hierflow {

// All hyperparameters in one place. A JSON config file mirrors the field
// names; CLI flags override file values.
struct ModelConfig {
    // patching
    std::size_t window = 36;       // W
    std::size_t stride = 8;        // S
    std::size_t embed_dim = 72;    // D
    std::size_t depth_kernel = 8;  // Q
    std::size_t channels = 8;      // A
    // forecasting horizon
    std::size_t lookback = 72;     // L
    std::size_t horizon = 36;      // T
    // hierarchy construction
    std::size_t top_k = 3;
    std::size_t clusters = 2;
    std::string prediction_layer = "bottom";  // bottom | bottom_top | all
    std::string aggregator = "mean";          // mean | sum
    // training
    double sql_z = 0.5;
    double learning_rate = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 42;
    double clip_norm = 5.0;
    std::size_t gru_hidden = 0;  // 0 -> A*D
    // data layout
    std::size_t slots_per_day = 72;
    double train_frac = 0.8;
    double val_frac = 0.1;

    std::size_t num_patches() const;           // N = floor((L-W)/S)+1
    std::size_t feature_dim() const;           // F = A*D
    std::size_t gru_hidden_or_default() const; // H

    void validate() const;

    static ModelConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static ModelConfig load(const std::string& file);

    std::uint64_t config_hash() const;
};

// Global seed fallback: explicit value > HIERFLOW_SEED env var > 42.
std::uint64_t resolve_seed(bool seed_was_set, std::uint64_t seed);

}  // namespace hierflow
