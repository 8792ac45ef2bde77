#include "chatcad/config.hpp"

#include <fstream>

#include <fmt/format.h>

namespace chatcad {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

PipelineConfig PipelineConfig::fromJson(const Json& j, const std::filesystem::path& baseDir) {
    PipelineConfig c;
    try {
        c.storePath = resolve(baseDir, j.value("storePath", std::string("store")));
        c.lexiconPath = resolve(baseDir, j.value("lexiconPath", std::string()));
        c.cuesPath = resolve(baseDir, j.value("cuesPath", std::string()));
        c.chatTurnCap = j.value("chatTurnCap", 20);
        if (j.contains("uncertainPolicy")) {
            c.uncertainPolicy = labeler::policyFromName(j["uncertainPolicy"].get<std::string>());
        }
        if (j.contains("lengthBuckets")) c.lengthBuckets = j["lengthBuckets"].get<std::vector<std::size_t>>();
        if (j.contains("throttlePolicy")) {
            auto p = j["throttlePolicy"].get<std::string>();
            if (p == "Wait") c.throttlePolicy = llm::ThrottlePolicy::Wait;
            else if (p == "FailFast") c.throttlePolicy = llm::ThrottlePolicy::FailFast;
            else throw DomainError(fmt::format("unknown throttlePolicy '{}'", p));
        }
        c.throttleWaitBudgetSeconds = j.value("throttleWaitBudgetSeconds", 3600.0);
        c.syncOnWrite = j.value("syncOnWrite", true);
        for (const auto& b : j.value("backends", Json::array())) {
            auto backend = b.get<llm::BackendConfig>();
            backend.fixturePath = resolve(baseDir, backend.fixturePath).string();
            c.backends.push_back(std::move(backend));
        }
    } catch (const Json::exception& e) {
        throw DomainError(fmt::format("invalid config: {}", e.what()));
    }
    if (c.chatTurnCap < 2) throw DomainError("chatTurnCap must be >= 2");
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError(fmt::format("cannot open config '{}'", path.string()));
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DomainError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return fromJson(j, path.parent_path());
}

}  // namespace chatcad
