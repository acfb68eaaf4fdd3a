#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lsgpr/gp.hpp"

namespace lsgpr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kNumerical = 2;
inline constexpr int kPartial = 3;

// Runs one command line (without the program name), e.g.
// {"simulate", "--nodes", "40", "--out", "data"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Appends "--key value" for every entry of the JSON file named by --config
// whose flag is not already present. Accepts a flat object, a recorded run
// file with an "options" object, or any output that embeds one under "run".
std::vector<std::string> expand_config(const std::vector<std::string>& args);

// Shortest round-trip decimal form.
std::string format_double(double x);

// Embedding directories hold <id>.json per subject and manifest.csv; only
// subjects whose manifest status is "ok" are returned, in manifest order.
std::vector<Subject> load_embeddings(const std::filesystem::path& dir);
void save_embedding(const Subject& subject, const std::filesystem::path& path);
Subject load_embedding(const std::filesystem::path& path);

void save_model(const GpModel& model, const std::filesystem::path& path);
GpModel load_model(const std::filesystem::path& path);

}  // namespace lsgpr::cli
