#pragma once

// Grounded follow-up conversations about one exam. Each session freezes a
// context header (bridged network outputs + refined report) that prefixes
// every request sent to the backend.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "chatcad/llm.hpp"
#include "chatcad/store.hpp"
#include "chatcad/types.hpp"

namespace chatcad::chat {

inline constexpr std::string_view kFraming =
    "You are answering a patient's questions about the chest X-ray exam described below. Base your answers on the "
    "computer-aided diagnosis results and the refined report.";
inline constexpr std::string_view kSafetyFooter =
    "Your answers are general information and are not a substitute for professional medical advice.";

struct ChatSession {
    std::string sessionId;
    std::string caseId;
    std::string reportId;
    std::string contextHeader;
    std::vector<llm::ChatTurn> turns;  // user/assistant pairs
    std::string createdAt;

    bool operator==(const ChatSession&) const = default;
};

void to_json(Json& j, const ChatSession& s);
void from_json(const Json& j, ChatSession& s);

using Completer =
    std::function<llm::CompletionResult(const std::string& backendId, const std::vector<llm::ChatTurn>& turns)>;

class ChatService {
public:
    ChatService(RecordStore& store, Completer completer, int turnCap = 20);

    ChatSession openSession(const std::string& caseId, const std::string& reportId);

    // Appends the question and the answer together; nothing is stored when the
    // backend call fails.
    llm::ChatTurn ask(const std::string& sessionId, const std::string& question, const std::string& backendId);

    ChatSession session(const std::string& sessionId) const;

    static std::string contextHeader(const CaseRecord& record, const RefinedReport& report);

    // The most recent history (oldest Q/A pairs dropped beyond turnCap), then
    // the new question. The context header prefixes the first user turn.
    static std::vector<llm::ChatTurn> outgoingTurns(const ChatSession& session, const std::string& question,
                                                     int turnCap);

private:
    std::shared_ptr<std::mutex> sessionLock(const std::string& sessionId);

    RecordStore& store_;
    Completer completer_;
    int turnCap_;
    std::mutex locksMutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
    std::mutex createMutex_;
};

}  // namespace chatcad::chat
