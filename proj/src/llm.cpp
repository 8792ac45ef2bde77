#include "chatcad/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "chatcad/bridge.hpp"

namespace chatcad::llm {

std::string_view roleName(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role roleFromName(std::string_view n) {
    if (n == "system") return Role::System;
    if (n == "user") return Role::User;
    if (n == "assistant") return Role::Assistant;
    throw DomainError(fmt::format("unknown chat role '{}'", n));
}

void to_json(Json& j, const ChatTurn& t) { j = Json{{"role", std::string(roleName(t.role))}, {"content", t.content}}; }

void from_json(const Json& j, ChatTurn& t) {
    t.role = roleFromName(j.at("role").get<std::string>());
    t.content = j.at("content").get<std::string>();
}

MockBehavior mockBehaviorFromName(std::string_view n) {
    if (n == "Echo") return MockBehavior::Echo;
    if (n == "TemplateRefine") return MockBehavior::TemplateRefine;
    if (n == "Scripted") return MockBehavior::Scripted;
    throw DomainError(fmt::format("unknown mock behavior '{}'", n));
}

namespace {

std::string_view mockBehaviorName(MockBehavior b) {
    switch (b) {
        case MockBehavior::Echo: return "Echo";
        case MockBehavior::TemplateRefine: return "TemplateRefine";
        case MockBehavior::Scripted: return "Scripted";
    }
    return "Echo";
}

}  // namespace

void BackendConfig::validate() const {
    if (backendId.empty()) throw DomainError("backendId must be non-empty");
    if (maxTokens < 1) throw DomainError(fmt::format("maxTokens must be >= 1, got {}", maxTokens));
    if (!(temperature >= 0.0)) throw DomainError(fmt::format("temperature must be >= 0, got {}", temperature));
    if (rateLimit && *rateLimit < 1) throw DomainError(fmt::format("rateLimit must be >= 1, got {}", *rateLimit));
    if (!(requestTimeoutSeconds > 0.0)) throw DomainError("requestTimeout must be positive");
    if (kind != "mock" && endpointUrl.empty()) throw DomainError("endpointUrl is required for HTTP backends");
}

void from_json(const Json& j, BackendConfig& c) {
    BackendConfig out;
    out.backendId = j.at("backendId").get<std::string>();
    out.kind = j.value("kind", std::string("openai"));
    out.endpointUrl = j.value("endpointUrl", std::string());
    out.apiKeyRef = j.value("apiKeyRef", std::string());
    out.model = j.value("model", std::string());
    out.maxTokens = j.value("maxTokens", 1024);
    out.temperature = j.value("temperature", 0.5);
    out.requestTimeoutSeconds = j.value("requestTimeout", 60.0);
    if (j.contains("rateLimit") && !j["rateLimit"].is_null()) out.rateLimit = j["rateLimit"].get<int>();
    if (j.contains("mockBehavior")) out.mockBehavior = mockBehaviorFromName(j["mockBehavior"].get<std::string>());
    out.fixturePath = j.value("fixturePath", std::string());
    out.validate();
    c = std::move(out);
}

void to_json(Json& j, const BackendConfig& c) {
    j = Json{{"backendId", c.backendId},
             {"kind", c.kind},
             {"endpointUrl", c.endpointUrl},
             {"apiKeyRef", c.apiKeyRef},
             {"model", c.model},
             {"maxTokens", c.maxTokens},
             {"temperature", c.temperature},
             {"requestTimeout", c.requestTimeoutSeconds}};
    if (c.rateLimit) j["rateLimit"] = *c.rateLimit;
    if (c.kind == "mock") {
        j["mockBehavior"] = std::string(mockBehaviorName(c.mockBehavior));
        if (!c.fixturePath.empty()) j["fixturePath"] = c.fixturePath;
    }
}

std::string_view errorKindName(ErrorKind k) {
    switch (k) {
        case ErrorKind::Retryable: return "Retryable";
        case ErrorKind::RateLimited: return "RateLimited";
        case ErrorKind::Permanent: return "Permanent";
        case ErrorKind::Protocol: return "Protocol";
        case ErrorKind::FixtureExhausted: return "FixtureExhausted";
        case ErrorKind::Throttled: return "Throttled";
    }
    return "Permanent";
}

void checkTurns(const std::vector<ChatTurn>& turns) {
    if (turns.empty()) throw DomainError("a completion needs at least one turn");
    if (turns.back().role != Role::User) throw DomainError("the last turn must come from the user");
    for (const auto& t : turns) {
        if (t.role != Role::System && t.content.empty()) throw DomainError("user and assistant turns must be non-empty");
    }
}

nlohmann::ordered_json buildRequest(const BackendConfig& config, const std::vector<ChatTurn>& turns) {
    nlohmann::ordered_json messages = nlohmann::ordered_json::array();
    for (const auto& t : turns) {
        nlohmann::ordered_json m;
        m["role"] = std::string(roleName(t.role));
        m["content"] = t.content;
        messages.push_back(std::move(m));
    }
    nlohmann::ordered_json body;
    body["model"] = config.model;
    body["messages"] = std::move(messages);
    body["max_tokens"] = config.maxTokens;
    body["temperature"] = config.temperature;
    return body;
}

std::string serializeRequest(const BackendConfig& config, const std::vector<ChatTurn>& turns) {
    return buildRequest(config, turns).dump();
}

std::vector<ChatTurn> parseRequestTurns(const std::string& body) {
    Json j = Json::parse(body);
    std::vector<ChatTurn> turns;
    for (const auto& m : j.at("messages")) turns.push_back(m.get<ChatTurn>());
    return turns;
}

CompletionResult parseResponse(const std::string& body, const std::string& backendId) {
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw LlmError(ErrorKind::Protocol, "response body is not a JSON object");
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw LlmError(ErrorKind::Protocol, "response has no choices");
    }
    const Json& first = (*choices)[0];
    CompletionResult r;
    r.backendId = backendId;
    r.rawResponse = body;
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object() && msg->contains("content") &&
                                          (*msg)["content"].is_string()) {
        r.text = (*msg)["content"].get<std::string>();
    } else if (auto text = first.find("text"); text != first.end() && text->is_string()) {
        r.text = text->get<std::string>();
    } else {
        throw LlmError(ErrorKind::Protocol, "response choice carries neither message.content nor text");
    }
    if (auto fr = first.find("finish_reason"); fr != first.end() && fr->is_string()) r.finishReason = fr->get<std::string>();
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
        r.promptTokens = usage->value("prompt_tokens", std::int64_t{0});
        r.completionTokens = usage->value("completion_tokens", std::int64_t{0});
    }
    return r;
}

// ---- transport ---------------------------------------------------------------

HttpResponse HttplibTransport::post(const HttpRequest& request) {
    static const std::regex urlPattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(request.url, m, urlPattern)) {
        throw LlmError(ErrorKind::Permanent, fmt::format("malformed endpoint URL '{}'", request.url));
    }
    std::string base = m[1].str();
    std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(base);
    auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(request.timeoutSeconds));
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  static_cast<time_t>(timeout.count() % 1000000));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            static_cast<time_t>(timeout.count() % 1000000));

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto res = client.Post(path, headers, request.body, "application/json");
    if (!res) {
        throw LlmError(ErrorKind::Retryable, fmt::format("transport failure: {}", httplib::to_string(res.error())));
    }
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) {
        std::string key = k;
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        out.headers[key] = v;
    }
    return out;
}

Sleeper realSleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

EnvLookup processEnv() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

// ---- HTTP backend ------------------------------------------------------------

HttpChatBackend::HttpChatBackend(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper,
                                 RetryPolicy retry, std::uint64_t jitterSeed, EnvLookup env)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      retry_(retry),
      env_(std::move(env)),
      rng_(jitterSeed) {
    config_.validate();
}

std::chrono::milliseconds HttpChatBackend::backoff(int attempt, std::optional<double> retryAfter) {
    double base = std::min(retry_.maxDelaySeconds, retry_.baseDelaySeconds * std::pow(2.0, attempt - 1));
    double u;
    {
        std::lock_guard lock(rngMutex_);
        u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    }
    double delay = base * (0.5 + 0.5 * u);
    if (retryAfter) delay = std::max(delay, *retryAfter);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(delay * 1000.0)));
}

namespace {

std::optional<double> parseRetryAfter(const std::map<std::string, std::string>& headers) {
    auto it = headers.find("retry-after");
    if (it == headers.end()) return std::nullopt;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

CompletionResult HttpChatBackend::complete(const std::vector<ChatTurn>& turns) {
    checkTurns(turns);
    HttpRequest request;
    request.url = config_.endpointUrl;
    request.body = serializeRequest(config_, turns);
    request.timeoutSeconds = config_.requestTimeoutSeconds;
    request.headers["Content-Type"] = "application/json";
    if (!config_.apiKeyRef.empty()) {
        auto key = env_(config_.apiKeyRef);
        if (!key) {
            throw LlmError(ErrorKind::Permanent,
                           fmt::format("environment variable '{}' holding the API key is not set", config_.apiKeyRef));
        }
        request.headers["Authorization"] = "Bearer " + *key;
    }

    for (int attempt = 1;; ++attempt) {
        auto started = std::chrono::steady_clock::now();
        try {
            HttpResponse res = transport_->post(request);
            if (res.status == 429) {
                throw LlmError(ErrorKind::RateLimited, "backend rate limit (HTTP 429)", parseRetryAfter(res.headers), 429);
            }
            if (res.status >= 500) {
                throw LlmError(ErrorKind::Retryable, fmt::format("backend server error (HTTP {})", res.status),
                               std::nullopt, res.status);
            }
            if (res.status >= 400) {
                throw LlmError(ErrorKind::Permanent, fmt::format("backend rejected request (HTTP {}): {}", res.status,
                                                                 res.body.substr(0, 200)),
                               std::nullopt, res.status);
            }
            if (res.status < 200 || res.status >= 300) {
                throw LlmError(ErrorKind::Protocol, fmt::format("unexpected HTTP status {}", res.status), std::nullopt,
                               res.status);
            }
            CompletionResult result = parseResponse(res.body, config_.backendId);
            result.latencyMs =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            result.attempts = attempt;
            return result;
        } catch (const LlmError& e) {
            if (!e.retryable() || attempt >= retry_.maxAttempts) throw;
            sleeper_(backoff(attempt, e.retryAfterSeconds()));
        }
    }
}

// ---- mock backend ------------------------------------------------------------

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> splitLines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// Lines of the "Network A (...):" block, up to the next blank line.
std::optional<std::vector<std::string>> classifierBlock(const std::string& text) {
    auto lines = splitLines(text);
    std::string header = std::string(bridge::kClassifierLabel) + " (";
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].rfind(header, 0) != 0 || lines[i].back() != ':') continue;
        std::vector<std::string> block;
        for (std::size_t k = i + 1; k < lines.size() && !lines[k].empty(); ++k) block.push_back(lines[k]);
        return block;
    }
    return std::nullopt;
}

std::vector<Observation> flaggedDiseases(const std::vector<std::string>& block) {
    std::array<bool, kDiseaseCount> flagged{};
    for (const auto& line : block) {
        for (auto d : kDiseases) {
            std::string name(displayName(d));
            if (line.rfind(name + " score: ", 0) == 0) {
                double v = std::stod(line.substr(name.size() + 8));
                if (v > bridge::kDefaultThreshold) flagged[indexOf(d)] = true;
            } else if (line == bridge::gradeClause(SeverityGrade::Likely, d) ||
                       line == bridge::gradeClause(SeverityGrade::Definitely, d)) {
                flagged[indexOf(d)] = true;
            }
        }
        const std::string p3Prefix = "Network diagnosis: ";
        if (line.rfind(p3Prefix, 0) == 0) {
            std::string rest = line.substr(p3Prefix.size());
            if (!rest.empty() && rest.back() == '.') rest.pop_back();
            std::istringstream items(rest);
            for (std::string item; std::getline(items, item, ',');) {
                item.erase(0, item.find_first_not_of(' '));
                for (auto d : kDiseases) {
                    if (item == displayName(d)) flagged[indexOf(d)] = true;
                }
            }
        }
    }
    std::vector<Observation> out;
    for (auto d : kDiseases) {
        if (flagged[indexOf(d)]) out.push_back(d);
    }
    return out;
}

std::string completionPayload(const std::string& backendId, const std::string& text) {
    nlohmann::ordered_json j;
    j["object"] = "chat.completion";
    j["model"] = backendId;
    nlohmann::ordered_json choice;
    choice["index"] = 0;
    choice["message"] = {{"role", "assistant"}, {"content", text}};
    choice["finish_reason"] = "stop";
    j["choices"] = nlohmann::ordered_json::array({choice});
    return j.dump();
}

}  // namespace

std::string templateRefine(const std::vector<ChatTurn>& turns) {
    std::optional<std::vector<std::string>> block;
    bool suppress = false;
    for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
        if (it->content.find("but without mentioning") != std::string::npos) suppress = true;
        if (!block) block = classifierBlock(it->content);
    }
    std::vector<Observation> flagged = block ? flaggedDiseases(*block) : std::vector<Observation>{};

    std::string out;
    if (flagged.empty()) {
        out = "FINDINGS: The lungs are clear. The heart and mediastinum are within normal limits.\n"
              "IMPRESSION: No acute cardiopulmonary process.";
    } else {
        std::vector<std::string> names;
        out = "FINDINGS:";
        for (auto d : flagged) {
            names.push_back(lower(std::string(displayName(d))));
            out += fmt::format(" There is {}.", names.back());
        }
        out += fmt::format("\nIMPRESSION: Findings consistent with {}.", bridge::joinLabels(names));
    }
    if (!suppress && block) out += fmt::format("\nThis is consistent with the prediction of {}.", bridge::kClassifierLabel);
    return out;
}

MockChatBackend::MockChatBackend(std::string backendId, MockBehavior behavior, std::vector<std::string> script)
    : id_(std::move(backendId)), behavior_(behavior), script_(std::move(script)) {}

std::vector<std::string> MockChatBackend::loadScript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError(fmt::format("cannot open scripted fixture '{}'", path));
    Json j = Json::parse(in);
    if (j.is_object()) j = j.at("responses");
    if (!j.is_array()) throw DomainError("scripted fixture must be an array of strings or {\"responses\": [...]}");
    return j.get<std::vector<std::string>>();
}

std::size_t MockChatBackend::callCount() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

CompletionResult MockChatBackend::complete(const std::vector<ChatTurn>& turns) {
    checkTurns(turns);
    std::string text;
    {
        std::lock_guard lock(mutex_);
        ++calls_;
        switch (behavior_) {
            case MockBehavior::Echo: text = turns.back().content; break;
            case MockBehavior::TemplateRefine: text = templateRefine(turns); break;
            case MockBehavior::Scripted:
                if (cursor_ >= script_.size()) {
                    throw LlmError(ErrorKind::FixtureExhausted,
                                   fmt::format("scripted backend '{}' has no responses left ({} used)", id_, cursor_));
                }
                text = script_[cursor_++];
                break;
        }
    }
    CompletionResult r;
    r.text = text;
    r.finishReason = "stop";
    r.backendId = id_;
    r.rawResponse = completionPayload(id_, text);
    return r;
}

std::unique_ptr<ChatBackend> makeBackend(const BackendConfig& config) {
    config.validate();
    if (config.kind == "mock") {
        std::vector<std::string> script;
        if (config.mockBehavior == MockBehavior::Scripted && !config.fixturePath.empty()) {
            script = MockChatBackend::loadScript(config.fixturePath);
        }
        return std::make_unique<MockChatBackend>(config.backendId, config.mockBehavior, std::move(script));
    }
    return std::make_unique<HttpChatBackend>(config, std::make_shared<HttplibTransport>());
}

}  // namespace chatcad::llm
