#include "chatcad/api.hpp"

#include <cctype>

#include <fmt/format.h>
#include <httplib.h>

namespace chatcad::api {

namespace {

ApiResponse json(int status, const Json& body) { return {status, body.dump()}; }

ApiResponse error(int status, std::string_view kind, std::string_view message) {
    return json(status, Json{{"error", {{"kind", kind}, {"message", message}}}});
}

std::string percentDecode(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
            std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
            out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::vector<std::string> splitPath(const std::string& path) {
    std::string p = path.substr(0, path.find('?'));
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= p.size()) {
        std::size_t next = p.find('/', pos);
        if (next == std::string::npos) next = p.size();
        if (next > pos) out.push_back(percentDecode(p.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

Json parseBody(const std::string& body) {
    if (body.empty()) return Json::object();
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded()) throw DomainError("request body is not valid JSON");
    return j;
}

std::string requireString(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
        throw DomainError(fmt::format("request field '{}' must be a string", key));
    }
    return j[key].get<std::string>();
}

Json runJson(const RunManifest& m, const std::optional<eval::EvalReport>& report) {
    return Json{{"runId", m.runId}, {"manifest", toJson(m)}, {"evalReport", report ? eval::toJson(*report) : Json()}};
}

}  // namespace

ApiResponse errorResponse(const std::exception& e) {
    if (auto* x = dynamic_cast<const NotFoundError*>(&e)) return error(404, "NotFound", x->what());
    if (auto* x = dynamic_cast<const ConflictError*>(&e)) return error(409, "Conflict", x->what());
    if (auto* x = dynamic_cast<const DomainError*>(&e)) return error(400, "InvalidRequest", x->what());
    if (auto* x = dynamic_cast<const llm::LlmError*>(&e)) {
        int status = (x->kind() == llm::ErrorKind::RateLimited || x->kind() == llm::ErrorKind::Throttled) ? 429 : 502;
        return error(status, llm::errorKindName(x->kind()), x->what());
    }
    if (auto* x = dynamic_cast<const Json::exception*>(&e)) return error(400, "InvalidRequest", x->what());
    return error(500, "Internal", e.what());
}

ApiResponse ApiRouter::handle(const std::string& method, const std::string& path, const std::string& body) const {
    try {
        auto segments = splitPath(path);
        if (segments.empty() || segments[0] != "api") return error(404, "NotFound", "unknown route");
        segments.erase(segments.begin());
        return route(method, segments, body);
    } catch (const std::exception& e) {
        return errorResponse(e);
    }
}

ApiResponse ApiRouter::route(const std::string& method, const std::vector<std::string>& seg,
                             const std::string& body) const {
    const std::size_t n = seg.size();
    const bool get = method == "GET";
    const bool post = method == "POST";

    if (n >= 1 && seg[0] == "cases") {
        if (n == 1 && get) {
            Json cases = Json::array();
            for (const auto& c : pipeline_.listCases()) cases.push_back(c);
            return json(200, Json{{"cases", cases}});
        }
        if (n == 1 && post) {
            IngestResult result;
            Json j = Json::parse(body, nullptr, false);
            if (!j.is_discarded() && j.is_array()) {
                result = pipeline_.ingestRows(j.get<std::vector<Json>>());
            } else if (!j.is_discarded() && j.is_object()) {
                result = pipeline_.ingestRows({j});
            } else {
                result = pipeline_.ingestJsonl(body);
            }
            int status = 201;
            if (result.accepted.empty()) {
                bool allConflicts = !result.rejected.empty();
                for (const auto& e : result.rejected) allConflicts &= e.kind == "conflict";
                status = allConflicts ? 409 : 400;
            }
            return json(status, toJson(result));
        }
        if (n == 2 && get) return json(200, pipeline_.getCase(seg[1]));
        if (n == 3 && get && seg[2] == "reports") {
            pipeline_.getCase(seg[1]);
            Json reports = Json::array();
            for (const auto& r : pipeline_.reportsForCase(seg[1])) reports.push_back(r);
            return json(200, Json{{"reports", reports}});
        }
        if (n == 3 && post && seg[2] == "refine") {
            Json req = parseBody(body);
            auto design = designFromName(req.value("design", std::string("P3")));
            auto outcome = pipeline_.refineCase(seg[1], design, requireString(req, "backendId"),
                                                req.value("suppressMention", false));
            return json(outcome.cached ? 200 : 201, Json{{"report", outcome.report}, {"cached", outcome.cached}});
        }
    }

    if (n == 2 && seg[0] == "reports" && get) return json(200, pipeline_.getReport(seg[1]));

    if (n >= 1 && seg[0] == "runs") {
        if (n == 1 && post) {
            Json req = parseBody(body);
            RunParams p;
            p.design = designFromName(req.value("design", std::string("P3")));
            p.backendId = requireString(req, "backendId");
            p.perCategory = req.value("perCategory", 50);
            p.seed = req.value("seed", std::uint64_t{0});
            p.suppressMention = req.value("suppressMention", false);
            auto outcome = pipeline_.runEvaluation(p);
            return json(201, runJson(outcome.manifest, outcome.report));
        }
        if (n == 2 && get) return json(200, runJson(pipeline_.getRun(seg[1]), pipeline_.getEvalReport(seg[1])));
    }

    if (n >= 1 && seg[0] == "chat") {
        if (n == 1 && post) {
            Json req = parseBody(body);
            auto session = pipeline_.chat().openSession(requireString(req, "caseId"), requireString(req, "reportId"));
            return json(201, session);
        }
        if (n == 2 && get) return json(200, pipeline_.chat().session(seg[1]));
        if (n == 3 && post && seg[2] == "messages") {
            Json req = parseBody(body);
            auto turn = pipeline_.chat().ask(seg[1], requireString(req, "question"), requireString(req, "backendId"));
            return json(200, Json{{"turn", turn}});
        }
    }

    if (n == 1 && seg[0] == "backends" && get) return json(200, Json{{"backends", pipeline_.backendIds()}});

    return error(404, "NotFound", fmt::format("no route for {} /api/{}", method, fmt::join(seg, "/")));
}

// ---- server ------------------------------------------------------------------

ApiServer::ApiServer(Pipeline& pipeline, std::filesystem::path staticDir)
    : router_(pipeline), staticDir_(std::move(staticDir)), server_(std::make_unique<httplib::Server>()) {
    configure();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::configure() {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ApiResponse out = router_.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body, out.contentType);
    };
    server_->Get(R"(/api/.*)", handler);
    server_->Post(R"(/api/.*)", handler);
    if (!staticDir_.empty()) server_->set_mount_point("/", staticDir_.string());
}

int ApiServer::start(const std::string& host, int port) {
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void ApiServer::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw std::runtime_error(fmt::format("cannot listen on {}:{}", host, port));
}

void ApiServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace chatcad::api
