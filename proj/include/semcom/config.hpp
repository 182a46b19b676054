#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace semcom {

// Flat dotted-key configuration with layered precedence:
// defaults < config file < explicit set() calls. Every key a workflow may
// consume is declared in defaults(); anything else is rejected by name, so a
// typo cannot silently fall back to a default.
class Config {
public:
    static Config defaults();

    // "key = value" lines; '#' starts a comment; blank lines ignored.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    // Each entry "key=value" (first '=' splits).
    void apply_overrides(const std::vector<std::string>& assignments);

    bool has_value(const std::string& key) const;  // value non-empty
    const std::string& str(const std::string& key) const;
    double num(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;  // true/false/1/0/yes/no
    uint64_t u64(const std::string& key) const;
    std::vector<double> num_list(const std::string& key) const;       // comma-separated
    std::vector<std::string> str_list(const std::string& key) const;  // comma-separated

    // Sorted "key = value" lines; parseable by load_file, so a manifest can
    // replay the run that wrote it.
    std::string snapshot() const;

private:
    Config() = default;
    std::map<std::string, std::string> values_;
};

// FNV-1a over a file's bytes, or over every regular file (sorted relative
// path + contents) under a directory. Used for manifest input fingerprints.
uint64_t fingerprint_path(const std::string& path);

// Config snapshot plus commented fingerprints of the named inputs. The
// result is itself a loadable config file.
std::string run_manifest(const Config& cfg,
                         const std::vector<std::pair<std::string, std::string>>& inputs);

}  // namespace semcom
