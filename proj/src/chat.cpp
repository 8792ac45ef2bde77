#include "chatcad/chat.hpp"

#include <fmt/format.h>

#include "chatcad/bridge.hpp"

namespace chatcad::chat {

void to_json(Json& j, const ChatSession& s) {
    j = Json{{"sessionId", s.sessionId}, {"caseId", s.caseId},   {"reportId", s.reportId},
             {"contextHeader", s.contextHeader}, {"turns", s.turns}, {"createdAt", s.createdAt}};
}

void from_json(const Json& j, ChatSession& s) {
    s.sessionId = j.at("sessionId").get<std::string>();
    s.caseId = j.at("caseId").get<std::string>();
    s.reportId = j.at("reportId").get<std::string>();
    s.contextHeader = j.at("contextHeader").get<std::string>();
    s.turns = j.at("turns").get<std::vector<llm::ChatTurn>>();
    s.createdAt = j.value("createdAt", std::string());
}

ChatService::ChatService(RecordStore& store, Completer completer, int turnCap)
    : store_(store), completer_(std::move(completer)), turnCap_(turnCap) {
    if (turnCap_ < 2) throw DomainError("chat turn cap must be >= 2");
}

std::string ChatService::contextHeader(const CaseRecord& record, const RefinedReport& report) {
    auto bundle = bridge::composeQuery(record, report.promptDesign, report.suppressMention);
    return fmt::format("{} {}\n\n{}\n\nRefined report:\n{}", kFraming, kSafetyFooter,
                       bridge::renderNetworks(bundle.networkDescriptions), report.text);
}

std::vector<llm::ChatTurn> ChatService::outgoingTurns(const ChatSession& session, const std::string& question,
                                                      int turnCap) {
    std::vector<llm::ChatTurn> out;
    std::size_t cap = static_cast<std::size_t>(turnCap) / 2 * 2;
    std::size_t start = session.turns.size() > cap ? session.turns.size() - cap : 0;
    // Keep pairs intact.
    if (start % 2 != 0) ++start;
    for (std::size_t i = start; i < session.turns.size(); ++i) out.push_back(session.turns[i]);
    out.push_back({llm::Role::User, question});
    // Same layout as refinement: the context leads the first user turn.
    out.front().content = session.contextHeader + "\n\n" + out.front().content;
    return out;
}

std::shared_ptr<std::mutex> ChatService::sessionLock(const std::string& sessionId) {
    std::lock_guard guard(locksMutex_);
    auto& slot = locks_[sessionId];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

ChatSession ChatService::openSession(const std::string& caseId, const std::string& reportId) {
    auto caseJson = store_.get(RecordKind::Case, caseId);
    if (!caseJson) throw NotFoundError(fmt::format("case '{}' not found", caseId));
    auto reportJson = store_.get(RecordKind::Report, reportId);
    if (!reportJson) throw NotFoundError(fmt::format("report '{}' not found", reportId));
    auto report = reportJson->get<RefinedReport>();
    if (report.caseId != caseId) {
        throw NotFoundError(fmt::format("report '{}' does not belong to case '{}'", reportId, caseId));
    }

    ChatSession s;
    s.caseId = caseId;
    s.reportId = reportId;
    s.contextHeader = contextHeader(caseJson->get<CaseRecord>(), report);
    s.createdAt = utcTimestamp();

    std::lock_guard guard(createMutex_);
    s.sessionId = fmt::format("ses-{:06d}", store_.count(RecordKind::Session) + 1);
    store_.insert(RecordKind::Session, s.sessionId, s);
    return s;
}

ChatSession ChatService::session(const std::string& sessionId) const {
    auto j = store_.get(RecordKind::Session, sessionId);
    if (!j) throw NotFoundError(fmt::format("chat session '{}' not found", sessionId));
    return j->get<ChatSession>();
}

llm::ChatTurn ChatService::ask(const std::string& sessionId, const std::string& question, const std::string& backendId) {
    if (wordCount(question) == 0) throw DomainError("question must be non-empty");
    auto lock = sessionLock(sessionId);
    std::lock_guard guard(*lock);

    ChatSession s = session(sessionId);
    auto result = completer_(backendId, outgoingTurns(s, question, turnCap_));
    llm::ChatTurn answer{llm::Role::Assistant, result.text};
    if (answer.content.empty()) throw llm::LlmError(llm::ErrorKind::Protocol, "backend returned an empty answer");
    s.turns.push_back({llm::Role::User, question});
    s.turns.push_back(answer);
    store_.upsert(RecordKind::Session, sessionId, s);
    return answer;
}

}  // namespace chatcad::chat
