#pragma once

// Chat-completion backends: an HTTP client for the OpenAI-compatible wire
// format and a deterministic mock for tests and offline evaluation.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chatcad/types.hpp"

namespace chatcad::llm {

enum class Role : std::uint8_t { System, User, Assistant };

std::string_view roleName(Role r);
Role roleFromName(std::string_view n);

struct ChatTurn {
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatTurn&) const = default;
};

void to_json(Json& j, const ChatTurn& t);
void from_json(const Json& j, ChatTurn& t);

enum class MockBehavior : std::uint8_t { Echo, TemplateRefine, Scripted };

MockBehavior mockBehaviorFromName(std::string_view n);

struct BackendConfig {
    std::string backendId;
    std::string kind = "openai";  // "openai" or "mock"
    std::string endpointUrl;
    std::string apiKeyRef;  // name of the environment variable holding the key
    std::string model;
    int maxTokens = 1024;
    double temperature = 0.5;
    double requestTimeoutSeconds = 60.0;
    std::optional<int> rateLimit;  // requests per hour

    MockBehavior mockBehavior = MockBehavior::TemplateRefine;
    std::string fixturePath;  // Scripted responses

    void validate() const;
};

void from_json(const Json& j, BackendConfig& c);
void to_json(Json& j, const BackendConfig& c);

struct CompletionResult {
    std::string text;
    std::string finishReason;
    std::int64_t promptTokens = 0;
    std::int64_t completionTokens = 0;
    double latencyMs = 0.0;
    std::string backendId;
    std::string rawResponse;
    int attempts = 1;
};

enum class ErrorKind : std::uint8_t {
    Retryable,  // transport failure or 5xx
    RateLimited,
    Permanent,
    Protocol,
    FixtureExhausted,
    Throttled,
};

std::string_view errorKindName(ErrorKind k);

class LlmError : public std::runtime_error {
public:
    LlmError(ErrorKind kind, const std::string& message, std::optional<double> retryAfterSeconds = std::nullopt,
             int httpStatus = 0)
        : std::runtime_error(message), kind_(kind), retryAfter_(retryAfterSeconds), httpStatus_(httpStatus) {}

    ErrorKind kind() const { return kind_; }
    std::optional<double> retryAfterSeconds() const { return retryAfter_; }
    int httpStatus() const { return httpStatus_; }
    bool retryable() const { return kind_ == ErrorKind::Retryable || kind_ == ErrorKind::RateLimited; }

private:
    ErrorKind kind_;
    std::optional<double> retryAfter_;
    int httpStatus_;
};

// {"model","messages","max_tokens","temperature"} in that order.
nlohmann::ordered_json buildRequest(const BackendConfig& config, const std::vector<ChatTurn>& turns);
std::string serializeRequest(const BackendConfig& config, const std::vector<ChatTurn>& turns);
std::vector<ChatTurn> parseRequestTurns(const std::string& body);

// choices[0].message.content, falling back to choices[0].text.
CompletionResult parseResponse(const std::string& body, const std::string& backendId);

// Precondition shared by every backend: non-empty, last turn from the user.
void checkTurns(const std::vector<ChatTurn>& turns);

struct HttpRequest {
    std::string url;
    std::map<std::string, std::string> headers;
    std::string body;
    double timeoutSeconds = 60.0;
};

struct HttpResponse {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

class Transport {
public:
    virtual ~Transport() = default;
    // Throws LlmError(Retryable) when no response was received.
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

class HttplibTransport final : public Transport {
public:
    HttpResponse post(const HttpRequest& request) override;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper realSleeper();

struct RetryPolicy {
    int maxAttempts = 5;
    double baseDelaySeconds = 1.0;
    double maxDelaySeconds = 60.0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual const std::string& id() const = 0;
    virtual CompletionResult complete(const std::vector<ChatTurn>& turns) = 0;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup processEnv();

class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = realSleeper(),
                    RetryPolicy retry = {}, std::uint64_t jitterSeed = 0x5eed, EnvLookup env = processEnv());

    const std::string& id() const override { return config_.backendId; }
    CompletionResult complete(const std::vector<ChatTurn>& turns) override;

    const BackendConfig& config() const { return config_; }

private:
    std::chrono::milliseconds backoff(int attempt, std::optional<double> retryAfter);

    BackendConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    RetryPolicy retry_;
    EnvLookup env_;
    std::mutex rngMutex_;
    std::mt19937_64 rng_;
};

// Parses the bridge's prompt layout and writes a fixed-template report that
// mentions exactly the diseases Network A flags.
std::string templateRefine(const std::vector<ChatTurn>& turns);

class MockChatBackend final : public ChatBackend {
public:
    MockChatBackend(std::string backendId, MockBehavior behavior, std::vector<std::string> script = {});

    static std::vector<std::string> loadScript(const std::string& path);

    const std::string& id() const override { return id_; }
    CompletionResult complete(const std::vector<ChatTurn>& turns) override;

    MockBehavior behavior() const { return behavior_; }
    std::size_t callCount() const;

private:
    std::string id_;
    MockBehavior behavior_;
    std::vector<std::string> script_;
    mutable std::mutex mutex_;
    std::size_t cursor_ = 0;
    std::size_t calls_ = 0;
};

// Backend from config: "mock" builds a MockChatBackend, anything else HTTP.
std::unique_ptr<ChatBackend> makeBackend(const BackendConfig& config);

}  // namespace chatcad::llm
