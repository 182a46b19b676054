#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "semcom/autodiff.hpp"

namespace semcom::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct ModelConfig {
    int layers = 3;
    int d_model = 128;
    int heads = 8;
    int d_ff = 512;
    int channel_dim = 16;  // complex symbols per token (c)
    int max_len = 32;      // N
    double dropout = 0.1;

    void validate() const;  // throws on inconsistent settings

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

enum class Init { zeros, ones, glorot, normal };

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameters with paired gradient buffers and Adam state. Iteration
// order is the name order, so updates are deterministic.
class ParamStore {
public:
    explicit ParamStore(uint64_t init_seed = 1) : init_seed_(init_seed) {}

    // Creates (seeded by name, not by creation order) or re-fetches with a
    // shape check.
    Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init);
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    Mat& get(const std::string& name);
    const Mat& get(const std::string& name) const;
    Mat& grad(const std::string& name);  // zero-allocated at the parameter shape

    void zero_grads();
    // One Adam update over every parameter; throws naming the parameter on a
    // non-finite gradient. Increments the shared step counter.
    void adam_step(const AdamConfig& cfg);

    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }
    uint64_t init_seed() const { return init_seed_; }

    const std::map<std::string, Mat>& params() const { return params_; }
    std::vector<std::string> names() const;
    size_t size() const { return params_.size(); }

private:
    struct AdamState {
        Mat m, v;
    };

    uint64_t init_seed_;
    int64_t step_ = 0;
    std::map<std::string, Mat> params_;
    std::map<std::string, Mat> grads_;
    std::map<std::string, AdamState> adam_;
};

// Standard sinusoidal table, len x d_model.
Mat positional_encoding(int len, int d_model);

// Binds store parameters into a tape as leaves, once per name. Frozen
// prefixes get null gradient sinks.
class ParamBinder {
public:
    ParamBinder(Tape& t, ParamStore& ps, bool training)
        : tape_(t), store_(ps), training_(training) {}

    void freeze_prefix(const std::string& prefix) { frozen_prefixes_.push_back(prefix); }
    Var operator[](const std::string& name);

    Tape& tape() { return tape_; }
    ParamStore& store() { return store_; }
    bool training() const { return training_; }

private:
    bool frozen(const std::string& name) const;

    Tape& tape_;
    ParamStore& store_;
    bool training_;
    std::vector<std::string> frozen_prefixes_;
    std::map<std::string, Var> bound_;
};

void create_dense_params(ParamStore& ps, const std::string& prefix, int in_dim, int out_dim);
void create_layer_norm_params(ParamStore& ps, const std::string& prefix, int dim);
void create_encoder_layer_params(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg);
void create_decoder_layer_params(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg);

// x (rows x in) -> x W + b using <prefix>.w / <prefix>.b.
Var dense(ParamBinder& b, const std::string& prefix, Var x);
Var layer_norm(ParamBinder& b, const std::string& prefix, Var x);

// Post-norm Transformer encoder layer over batch blocks of `len` rows.
// pad_mask (batch x len, 1 = real token) masks keys; null means no padding.
// drop_rng null disables dropout.
Var encoder_layer(ParamBinder& b, const std::string& prefix, Var z, int batch, int len,
                  const ModelConfig& cfg, const Mat* pad_mask, std::mt19937_64* drop_rng);

// Decoder layer: causal self-attention, cross-attention over `memory`
// (batch blocks of kv_len rows, mem_mask batch x kv_len), feed-forward.
Var decoder_layer(ParamBinder& b, const std::string& prefix, Var z, Var memory, int batch,
                  int q_len, int kv_len, const ModelConfig& cfg, const Mat* mem_mask,
                  std::mt19937_64* drop_rng);

// Checkpoint directory: manifest.json (step, shapes, caller metadata under
// "meta") plus one row-major little-endian float32 .bin per parameter.
void save_checkpoint(const std::string& dir, const ParamStore& ps, const nlohmann::json& meta);
// Loads every manifest parameter into `ps` (creating or shape-checking) and
// returns the manifest.
nlohmann::json load_checkpoint(const std::string& dir, ParamStore& ps);

}  // namespace semcom::nn
