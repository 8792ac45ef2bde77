#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "chatcad/labeler.hpp"
#include "chatcad/llm.hpp"
#include "chatcad/throttle.hpp"

namespace chatcad {

// Single JSON config file. Relative paths resolve against the file's
// directory. Secrets never live here: backends name an environment variable.
struct PipelineConfig {
    std::filesystem::path storePath = "store";
    std::filesystem::path lexiconPath;  // empty: built-in lexicon
    std::filesystem::path cuesPath;     // empty: built-in cues
    std::vector<llm::BackendConfig> backends;
    int chatTurnCap = 20;
    labeler::UncertainPolicy uncertainPolicy = labeler::UncertainPolicy::AsPositive;
    std::vector<std::size_t> lengthBuckets = {10, 20, 40, 80, 160};
    llm::ThrottlePolicy throttlePolicy = llm::ThrottlePolicy::Wait;
    double throttleWaitBudgetSeconds = 3600.0;
    bool syncOnWrite = true;

    static PipelineConfig fromJson(const Json& j, const std::filesystem::path& baseDir = {});
    static PipelineConfig load(const std::filesystem::path& path);
};

}  // namespace chatcad
