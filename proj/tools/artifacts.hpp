#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathogan/error.hpp"

namespace pathogan::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public Error {
public:
    using Error::Error;
};

class ArtifactExists : public Error {
public:
    using Error::Error;
};

std::string tool_version();

struct RunContext {
    std::uint64_t seed = 7;
    bool deterministic = false;
    bool force = false;
    std::vector<std::string> command;
    std::string config_hash;  // of the loaded config document, empty without one
};

// Creates the parent directory; an existing file is an error unless --force.
void prepare_output(const RunContext& ctx, const fs::path& path);

// DependencyError naming the stage expected to have produced `path`.
void require_artifact(const fs::path& path, const std::string& producing_stage);

// <artifact>.provenance.json: tool version, stage, parameters, seed, config
// hash, command line and digests of the inputs.
void write_provenance(const RunContext& ctx, const fs::path& artifact, const std::string& stage, const json& params,
                      const std::vector<fs::path>& inputs);

fs::path provenance_path(const fs::path& artifact);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace pathogan::cli
