#include "hierflow/config.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hierflow/errors.hpp"

namespace hierflow {

std::size_t ModelConfig::num_patches() const {
    if (lookback < window)
        throw ConfigError("lookback L must be >= window W");
    return (lookback - window) / stride + 1;
}

std::size_t ModelConfig::feature_dim() const { return channels * embed_dim; }

std::size_t ModelConfig::gru_hidden_or_default() const {
    return gru_hidden == 0 ? feature_dim() : gru_hidden;
}

void ModelConfig::validate() const {
    if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
    if (lookback < window) throw ConfigError("lookback L must be >= window W");
    if (depth_kernel == 0 || depth_kernel > embed_dim)
        throw ConfigError("depth kernel Q must satisfy 1 <= Q <= D");
    if (channels == 0) throw ConfigError("channels A must be positive");
    if (horizon == 0) throw ConfigError("horizon T must be positive");
    if (sql_z <= 0.0 || sql_z >= 1.0) throw ConfigError("sql_z must lie in (0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (clusters == 0) throw ConfigError("clusters must be positive");
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
        throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
    if (prediction_layer != "bottom" && prediction_layer != "bottom_top" &&
        prediction_layer != "all")
        throw ConfigError("prediction_layer must be bottom|bottom_top|all");
    if (aggregator != "mean" && aggregator != "sum")
        throw ConfigError("aggregator must be mean|sum");
}

namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    read_if(j, "window", c.window);
    read_if(j, "stride", c.stride);
    read_if(j, "embed_dim", c.embed_dim);
    read_if(j, "depth_kernel", c.depth_kernel);
    read_if(j, "channels", c.channels);
    read_if(j, "lookback", c.lookback);
    read_if(j, "horizon", c.horizon);
    read_if(j, "top_k", c.top_k);
    read_if(j, "clusters", c.clusters);
    read_if(j, "prediction_layer", c.prediction_layer);
    read_if(j, "aggregator", c.aggregator);
    read_if(j, "sql_z", c.sql_z);
    read_if(j, "learning_rate", c.learning_rate);
    read_if(j, "epochs", c.epochs);
    read_if(j, "batch_size", c.batch_size);
    read_if(j, "seed", c.seed);
    read_if(j, "clip_norm", c.clip_norm);
    read_if(j, "gru_hidden", c.gru_hidden);
    read_if(j, "slots_per_day", c.slots_per_day);
    read_if(j, "train_frac", c.train_frac);
    read_if(j, "val_frac", c.val_frac);
    return c;
}

nlohmann::json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["window"] = window;
    j["stride"] = stride;
    j["embed_dim"] = embed_dim;
    j["depth_kernel"] = depth_kernel;
    j["channels"] = channels;
    j["lookback"] = lookback;
    j["horizon"] = horizon;
    j["top_k"] = top_k;
    j["clusters"] = clusters;
    j["prediction_layer"] = prediction_layer;
    j["aggregator"] = aggregator;
    j["sql_z"] = sql_z;
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["clip_norm"] = clip_norm;
    j["gru_hidden"] = gru_hidden;
    j["slots_per_day"] = slots_per_day;
    j["train_frac"] = train_frac;
    j["val_frac"] = val_frac;
    return j;
}

ModelConfig ModelConfig::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file: " + file);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

std::uint64_t ModelConfig::config_hash() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t resolve_seed(bool seed_was_set, std::uint64_t seed) {
    if (seed_was_set) return seed;
    if (const char* env = std::getenv("HIERFLOW_SEED")) return std::strtoull(env, nullptr, 10);
    return 42;
}

}  // namespace hierflow
