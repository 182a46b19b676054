#include "semcom/nn.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "semcom/util.hpp"

namespace semcom::nn {

namespace fs = std::filesystem;
using nlohmann::json;

void ModelConfig::validate() const {
    if (layers < 1 || d_model < 1 || heads < 1 || d_ff < 1 || channel_dim < 1 || max_len < 3)
        throw std::invalid_argument("model config: every dimension must be positive (and max_len >= 3)");
    if (d_model % heads != 0)
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) + " heads");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("model config: dropout must be in [0,1)");
}

json ModelConfig::to_json() const {
    return json{{"layers", layers}, {"d_model", d_model}, {"heads", heads},
                {"d_ff", d_ff},     {"channel_dim", channel_dim}, {"max_len", max_len},
                {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.channel_dim = j.at("channel_dim").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.validate();
    return c;
}

Mat& ParamStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.rows() != rows || it->second.cols() != cols)
            throw std::invalid_argument("parameter " + name + " re-created with a different shape");
        return it->second;
    }
    Mat m(rows, cols);
    switch (init) {
        case Init::zeros:
            m.setZero();
            break;
        case Init::ones:
            m.setOnes();
            break;
        case Init::glorot: {
            auto rng = make_rng(init_seed_, {label("init"), label(name)});
            double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index i = 0; i < rows; ++i)
                for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
            break;
        }
        case Init::normal: {
            auto rng = make_rng(init_seed_, {label("init"), label(name)});
            std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
            for (Eigen::Index i = 0; i < rows; ++i)
                for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
            break;
        }
    }
    return params_.emplace(name, std::move(m)).first->second;
}

Mat& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

const Mat& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

Mat& ParamStore::grad(const std::string& name) {
    const Mat& p = get(name);
    auto it = grads_.find(name);
    if (it == grads_.end()) it = grads_.emplace(name, Mat::Zero(p.rows(), p.cols())).first;
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, g] : grads_) g.setZero();
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    ++step_;
    double t = static_cast<double>(step_);
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params_) {
        auto git = grads_.find(name);
        if (git == grads_.end()) continue;  // parameter never touched this run
        const Mat& g = git->second;
        if (!g.allFinite()) throw std::runtime_error("non-finite gradient for parameter " + name);
        auto ait = adam_.find(name);
        if (ait == adam_.end())
            ait = adam_.emplace(name, AdamState{Mat::Zero(p.rows(), p.cols()), Mat::Zero(p.rows(), p.cols())}).first;
        AdamState& st = ait->second;
        st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * g;
        st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        Mat mhat = st.m / bc1;
        Mat vhat = st.v / bc2;
        p.array() -= cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    }
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

Mat positional_encoding(int len, int d_model) {
    Mat pe(len, d_model);
    for (int pos = 0; pos < len; ++pos) {
        for (int i = 0; i < d_model; i += 2) {
            double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
            pe(pos, i) = std::sin(angle);
            if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

Var ParamBinder::operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Mat* sink = nullptr;
    if (training_ && !frozen(name)) sink = &store_.grad(name);
    Var v = tape_.leaf(store_.get(name), sink);
    bound_.emplace(name, v);
    return v;
}

bool ParamBinder::frozen(const std::string& name) const {
    for (const auto& p : frozen_prefixes_)
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

void create_dense_params(ParamStore& ps, const std::string& prefix, int in_dim, int out_dim) {
    ps.create(prefix + ".w", in_dim, out_dim, Init::glorot);
    ps.create(prefix + ".b", 1, out_dim, Init::zeros);
}

void create_layer_norm_params(ParamStore& ps, const std::string& prefix, int dim) {
    ps.create(prefix + ".g", 1, dim, Init::ones);
    ps.create(prefix + ".b", 1, dim, Init::zeros);
}

void create_encoder_layer_params(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg) {
    int d = cfg.d_model;
    for (const char* w : {".wq", ".wk", ".wv", ".wo"}) ps.create(prefix + w, d, d, Init::glorot);
    create_dense_params(ps, prefix + ".ff1", d, cfg.d_ff);
    create_dense_params(ps, prefix + ".ff2", cfg.d_ff, d);
    create_layer_norm_params(ps, prefix + ".ln1", d);
    create_layer_norm_params(ps, prefix + ".ln2", d);
}

void create_decoder_layer_params(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg) {
    int d = cfg.d_model;
    for (const char* w : {".self.wq", ".self.wk", ".self.wv", ".self.wo",
                          ".cross.wq", ".cross.wk", ".cross.wv", ".cross.wo"})
        ps.create(prefix + w, d, d, Init::glorot);
    create_dense_params(ps, prefix + ".ff1", d, cfg.d_ff);
    create_dense_params(ps, prefix + ".ff2", cfg.d_ff, d);
    create_layer_norm_params(ps, prefix + ".ln1", d);
    create_layer_norm_params(ps, prefix + ".ln2", d);
    create_layer_norm_params(ps, prefix + ".ln3", d);
}

Var dense(ParamBinder& b, const std::string& prefix, Var x) {
    Tape& t = b.tape();
    return t.add_rowvec(t.matmul(x, b[prefix + ".w"]), b[prefix + ".b"]);
}

Var layer_norm(ParamBinder& b, const std::string& prefix, Var x) {
    return b.tape().layer_norm(x, b[prefix + ".g"], b[prefix + ".b"]);
}

namespace {

Var maybe_dropout(ParamBinder& b, Var x, const ModelConfig& cfg, std::mt19937_64* rng) {
    if (!rng || cfg.dropout <= 0.0) return x;
    return b.tape().dropout(x, cfg.dropout, *rng);
}

}  // namespace

Var encoder_layer(ParamBinder& b, const std::string& prefix, Var z, int batch, int len,
                  const ModelConfig& cfg, const Mat* pad_mask, std::mt19937_64* drop_rng) {
    Tape& t = b.tape();
    Var q = t.matmul(z, b[prefix + ".wq"]);
    Var k = t.matmul(z, b[prefix + ".wk"]);
    Var v = t.matmul(z, b[prefix + ".wv"]);
    Var attn = t.multihead_attention(q, k, v, batch, len, len, cfg.heads, pad_mask, false);
    attn = t.matmul(attn, b[prefix + ".wo"]);
    attn = maybe_dropout(b, attn, cfg, drop_rng);
    z = layer_norm(b, prefix + ".ln1", t.add(z, attn));

    Var ff = dense(b, prefix + ".ff2", t.relu(dense(b, prefix + ".ff1", z)));
    ff = maybe_dropout(b, ff, cfg, drop_rng);
    return layer_norm(b, prefix + ".ln2", t.add(z, ff));
}

Var decoder_layer(ParamBinder& b, const std::string& prefix, Var z, Var memory, int batch,
                  int q_len, int kv_len, const ModelConfig& cfg, const Mat* mem_mask,
                  std::mt19937_64* drop_rng) {
    Tape& t = b.tape();
    Var q = t.matmul(z, b[prefix + ".self.wq"]);
    Var k = t.matmul(z, b[prefix + ".self.wk"]);
    Var v = t.matmul(z, b[prefix + ".self.wv"]);
    Var attn = t.multihead_attention(q, k, v, batch, q_len, q_len, cfg.heads, nullptr, true);
    attn = t.matmul(attn, b[prefix + ".self.wo"]);
    attn = maybe_dropout(b, attn, cfg, drop_rng);
    z = layer_norm(b, prefix + ".ln1", t.add(z, attn));

    Var cq = t.matmul(z, b[prefix + ".cross.wq"]);
    Var ck = t.matmul(memory, b[prefix + ".cross.wk"]);
    Var cv = t.matmul(memory, b[prefix + ".cross.wv"]);
    Var cross = t.multihead_attention(cq, ck, cv, batch, q_len, kv_len, cfg.heads, mem_mask, false);
    cross = t.matmul(cross, b[prefix + ".cross.wo"]);
    cross = maybe_dropout(b, cross, cfg, drop_rng);
    z = layer_norm(b, prefix + ".ln2", t.add(z, cross));

    Var ff = dense(b, prefix + ".ff2", t.relu(dense(b, prefix + ".ff1", z)));
    ff = maybe_dropout(b, ff, cfg, drop_rng);
    return layer_norm(b, prefix + ".ln3", t.add(z, ff));
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::string param_file_name(const std::string& param) {
    // Parameter names are dot-separated identifiers, safe as file names.
    return param + ".bin";
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParamStore& ps, const json& meta) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = 1;
    manifest["step"] = ps.step();
    manifest["meta"] = meta;
    json shapes = json::object();
    for (const auto& [name, p] : ps.params()) {
        shapes[name] = json::array({p.rows(), p.cols()});
        std::ofstream out(fs::path(dir) / param_file_name(name), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint file for " + name + " in " + dir);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.cols(); ++j) {
                float f = static_cast<float>(p(i, j));
                out.write(reinterpret_cast<const char*>(&f), sizeof(f));
            }
        }
    }
    manifest["params"] = std::move(shapes);
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

json load_checkpoint(const std::string& dir, ParamStore& ps) {
    auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open checkpoint manifest " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
    }
    if (manifest.value("format", 0) != 1)
        throw std::runtime_error("unsupported checkpoint format in " + manifest_path.string());

    for (const auto& [name, shape] : manifest.at("params").items()) {
        Eigen::Index rows = shape.at(0).get<Eigen::Index>();
        Eigen::Index cols = shape.at(1).get<Eigen::Index>();
        auto bin_path = fs::path(dir) / param_file_name(name);
        std::ifstream bin(bin_path, std::ios::binary);
        if (!bin) throw std::runtime_error("checkpoint is missing " + bin_path.string());
        Mat& p = ps.create(name, rows, cols, Init::zeros);
        std::vector<float> buf(static_cast<size_t>(rows * cols));
        bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (bin.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
            throw std::runtime_error("checkpoint file " + bin_path.string() + " is truncated");
        size_t idx = 0;
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) p(i, j) = static_cast<double>(buf[idx++]);
    }
    ps.set_step(manifest.at("step").get<int64_t>());
    return manifest;
}

}  // namespace semcom::nn
