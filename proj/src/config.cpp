#include "semcom/config.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "semcom/util.hpp"

namespace semcom {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
    Config c;
    c.values_ = {
        {"seed", "1"},

        {"corpus.kind", "micro"},
        {"corpus.dir", "data"},
        {"corpus.max_len", "16"},
        {"corpus.fixture_texts", "1000"},

        {"channel.kind", "awgn"},

        {"model.layers", "3"},
        {"model.d_model", "128"},
        {"model.heads", "8"},
        {"model.d_ff", "512"},
        {"model.channel_dim", "16"},
        {"model.dropout", "0.1"},

        {"train.snr_db", "0"},
        {"train.epochs", "10"},
        {"train.batch_size", "32"},
        {"train.lr", "1e-4"},

        {"extractor.w", "0.02"},
        {"extractor.snr_db", "0"},
        {"extractor.epochs", "10"},
        {"extractor.adapt_epochs", "10"},
        {"extractor.batch_size", "32"},
        {"extractor.lr", "1e-4"},

        {"space.d", "128"},
        {"space.K", "63"},
        {"space.tau", "0.2"},
        {"space.lr", "1e-3"},
        {"space.epochs", "10"},
        {"space.lambda", "1.16"},
        {"space.distance", "euclidean"},
        {"space.norm_reg", "0.01"},
        {"space.snr_db", "0"},

        {"relpred.hidden", "128"},
        {"relpred.lr", "1e-3"},
        {"relpred.epochs", "50"},
        {"relpred.batch_size", "32"},
        {"relpred.neg_ratio", "1"},

        {"sweep.snr_points", "-4,-2,0,2,4"},
        {"sweep.receivers", "baseline"},
        {"sweep.snr_specific", "false"},
        {"sweep.specific_dirs", ""},  // "snr=dir" entries, comma-separated
        {"sweep.scorer", "tf"},
        {"sweep.max_sentences", "0"},
        {"sweep.threads", "0"},
        {"sweep.trace", "false"},

        {"augment.endpoint", ""},
        {"augment.model_name", "gpt-3.5-turbo"},
        {"augment.timeout_s", "30"},
        {"augment.concurrency", "1"},
        {"augment.mock_fixtures", ""},
        {"augment.omit_fraction", "0"},
        {"augment.n_texts", "1000"},

        {"dump.samples", "8"},
        {"dump.snr_db", "0"},

        {"io.out_dir", "out"},
        {"io.kb", ""},
        {"io.kb_out", ""},
        {"io.codec_dir", ""},
        {"io.extractor_dir", ""},
        {"io.space_dir", ""},
        {"io.relpred_dir", ""},
        {"io.csv", ""},
        {"io.trace", ""},
        {"io.dump_csv", ""},
    };
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second = value;
}

void Config::load_file(const std::string& path) {
    std::istringstream lines(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        try {
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::apply_overrides(const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) {
        size_t eq = a.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override '" + a + "' is not of the form key=value");
        set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
    }
}

bool Config::has_value(const std::string& key) const { return !str(key).empty(); }

const std::string& Config::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second;
}

double Config::num(const std::string& key) const {
    const std::string& v = str(key);
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (trim(v.substr(used)).empty()) return d;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("config key '" + key + "' is not a number: '" + v + "'");
}

int Config::integer(const std::string& key) const {
    double d = num(key);
    int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw std::invalid_argument("config key '" + key + "' is not an integer");
    return i;
}

uint64_t Config::u64(const std::string& key) const {
    const std::string& v = str(key);
    try {
        size_t used = 0;
        unsigned long long x = std::stoull(v, &used);
        if (trim(v.substr(used)).empty()) return static_cast<uint64_t>(x);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("config key '" + key + "' is not an unsigned integer: '" + v +
                                "'");
}

bool Config::flag(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::str_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream parts(str(key));
    std::string item;
    while (std::getline(parts, item, ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<double> Config::num_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : str_list(key)) {
        try {
            size_t used = 0;
            double d = std::stod(s, &used);
            if (trim(s.substr(used)).empty()) {
                out.push_back(d);
                continue;
            }
        } catch (const std::exception&) {
        }
        throw std::invalid_argument("config key '" + key + "' has a non-numeric entry: '" + s +
                                    "'");
    }
    return out;
}

std::string Config::snapshot() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
}

uint64_t fingerprint_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<std::string> rels;
        for (const auto& entry : fs::recursive_directory_iterator(path))
            if (entry.is_regular_file())
                rels.push_back(fs::relative(entry.path(), path).generic_string());
        std::sort(rels.begin(), rels.end());
        uint64_t h = fnv1a("dir");
        for (const auto& rel : rels) {
            h = fnv1a(rel, h);
            h = fnv1a(read_file((fs::path(path) / rel).string()), h);
        }
        return h;
    }
    return fnv1a(read_file(path));
}

std::string run_manifest(const Config& cfg,
                         const std::vector<std::pair<std::string, std::string>>& inputs) {
    std::ostringstream out;
    out << "# run manifest; load with --config to replay\n";
    for (const auto& [name, path] : inputs)
        out << "# artifact " << name << " " << path << " fnv1a=" << hex64(fingerprint_path(path))
            << '\n';
    out << cfg.snapshot();
    return out.str();
}

}  // namespace semcom
