#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vidgp/errors.hpp"
#include "vidgp/grid_field.hpp"

namespace vidgp::cli {

/// Typed, schema-validated key=value configuration. Unknown keys are errors;
/// every run directory receives the fully-resolved snapshot.
class RunConfig {
public:
    RunConfig(); // defaults

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value); // validates
    bool has(const std::string& key) const;

    const std::string& str(const std::string& key) const;
    long integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<int> int_list(const std::string& key) const;

    /// Deterministic snapshot (sorted keys) of every resolved value.
    std::string snapshot() const;
    void save_snapshot(const std::string& path) const;

    /// Schema iteration for CLI flag registration.
    std::vector<std::string> keys() const;
    const std::string& describe(const std::string& key) const;

private:
    struct Entry {
        std::string value;
        std::string kind; // int | real | bool | string | enum | intlist
        std::string help;
        std::vector<std::string> choices; // for enums
    };
    const Entry& entry(const std::string& key) const;
    std::map<std::string, Entry> entries_;
};

/// Subcommand entry points; each returns a process exit code and writes its
/// artifacts under out_dir. Input artifact paths come pre-parsed from flags.
int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);
int cmd_train_dgp(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir);
int cmd_train_surrogate(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& out_dir);
int cmd_infer(const RunConfig& cfg, const std::string& obs_path, const std::string& vae_path,
              const std::string& surrogate_path, const std::string& truth_path,
              const std::string& out_dir);
int cmd_gradcheck(const RunConfig& cfg, const std::string& vae_path, const std::string& obs_path,
                  const std::vector<std::pair<int, std::string>>& surrogate_models,
                  const std::string& out_dir);
int cmd_render(const std::string& field_path, const std::string& image_path);
int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path);

/// Min-max normalized 8-bit binary PGM (P5); row j = 0 comes first, matching
/// the field file layout. A constant field maps to pixel value 0.
std::string field_to_pgm(const ScalarField& field);

} // namespace vidgp::cli
