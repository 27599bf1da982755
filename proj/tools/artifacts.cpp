#include "artifacts.hpp"

#include <fstream>
#include <sstream>

#include "pathogan/dataset.hpp"
#include "pathogan/log.hpp"

#ifndef PATHOGAN_VERSION
#define PATHOGAN_VERSION "0.0.0"
#endif

namespace pathogan::cli {

std::string tool_version() { return PATHOGAN_VERSION; }

void prepare_output(const RunContext& ctx, const fs::path& path) {
    if (fs::exists(path) && !ctx.force)
        throw ArtifactExists("refusing to overwrite " + path.string() + " (pass --force to replace it)");
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
}

void require_artifact(const fs::path& path, const std::string& producing_stage) {
    if (!fs::exists(path))
        throw DependencyError("missing " + path.string() + "; run the '" + producing_stage + "' stage first");
}

fs::path provenance_path(const fs::path& artifact) {
    auto p = artifact;
    p += ".provenance.json";
    return p;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_provenance(const RunContext& ctx, const fs::path& artifact, const std::string& stage, const json& params,
                      const std::vector<fs::path>& inputs) {
    json in = json::array();
    for (const auto& p : inputs) {
        json entry = {{"path", p.string()}};
        if (fs::is_regular_file(p)) entry["digest"] = config_hash(read_text(p));
        in.push_back(entry);
    }
    std::string command;
    for (const auto& a : ctx.command) command += (command.empty() ? "" : " ") + a;
    const json record = {{"tool", "pathogan"},
                         {"version", tool_version()},
                         {"stage", stage},
                         {"artifact", artifact.filename().string()},
                         {"params", params},
                         {"seed", ctx.seed},
                         {"deterministic", ctx.deterministic},
                         {"stage_config_hash", config_hash(params.dump() + ";seed=" + std::to_string(ctx.seed))},
                         {"run_config_hash", ctx.config_hash},
                         {"command", command},
                         {"inputs", in}};
    write_text(provenance_path(artifact), record.dump(2) + "\n");
    log::info(stage + " wrote " + artifact.string());
}

}  // namespace pathogan::cli
