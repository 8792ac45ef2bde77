#include <gtest/gtest.h>
#include <httplib.h>

#include "chatcad/api.hpp"
#include "support.hpp"

using namespace chatcad;
using namespace chatcad::api;
namespace t = chatcad::testing;

namespace {

struct ApiFixture : ::testing::Test {
    void SetUp() override {
        PipelineConfig c;
        c.storePath = dir.path() / "store";
        c.syncOnWrite = false;
        pipeline = std::make_unique<Pipeline>(c);
        pipeline->registerBackend(std::make_shared<llm::MockChatBackend>("template", llm::MockBehavior::TemplateRefine));
        pipeline->registerBackend(std::make_shared<llm::MockChatBackend>("echo", llm::MockBehavior::Echo));
        router = std::make_unique<ApiRouter>(*pipeline);
    }

    Json call(const std::string& method, const std::string& path, const Json& body, int expect) {
        auto r = router->handle(method, path, body.is_null() ? "" : body.dump());
        EXPECT_EQ(r.status, expect) << method << " " << path << " -> " << r.body;
        return Json::parse(r.body);
    }

    void expectError(const std::string& method, const std::string& path, const std::string& body, int status,
                     const std::string& kind) {
        auto r = router->handle(method, path, body);
        EXPECT_EQ(r.status, status) << method << " " << path << " -> " << r.body;
        auto j = Json::parse(r.body);
        ASSERT_TRUE(j.contains("error")) << r.body;
        EXPECT_EQ(j["error"]["kind"], kind);
        EXPECT_TRUE(j["error"]["message"].is_string());
    }

    t::TempDir dir;
    std::unique_ptr<Pipeline> pipeline;
    std::unique_ptr<ApiRouter> router;
};

}  // namespace

TEST_F(ApiFixture, IngestStatuses) {
    auto pool = t::syntheticPool(1);
    auto ok = call("POST", "/api/cases", Json(pool), 201);
    EXPECT_EQ(ok["accepted"].size(), 6u);
    auto dup = call("POST", "/api/cases", pool[0], 409);
    EXPECT_EQ(dup["rejected"][0]["kind"], "conflict");
    auto bad = call("POST", "/api/cases", Json{{"caseId", "x"}, {"scores", {{"Edema", 2.0}}}}, 400);
    EXPECT_EQ(bad["rejected"][0]["kind"], "schema");
    // Mixed batch still creates.
    auto mixed = router->handle("POST", "/api/cases",
                                Json{{"caseId", "new-1"}, {"draftReport", "x"}}.dump() + "\n" + pool[1].dump() + "\n");
    EXPECT_EQ(mixed.status, 201);
    EXPECT_EQ(Json::parse(mixed.body)["rejected"].size(), 1u);
}

TEST_F(ApiFixture, CaseAndReportRoutes) {
    call("POST", "/api/cases", Json(t::syntheticPool(1)), 201);
    auto c = call("GET", "/api/cases/syn-002", Json(), 200);
    EXPECT_EQ(c["caseId"], "syn-002");
    EXPECT_EQ(call("GET", "/api/cases", Json(), 200)["cases"].size(), 6u);
    expectError("GET", "/api/cases/nope", "", 404, "NotFound");

    auto first = call("POST", "/api/cases/syn-002/refine", Json{{"design", "P3"}, {"backendId", "template"}}, 201);
    EXPECT_FALSE(first["cached"]);
    auto again = call("POST", "/api/cases/syn-002/refine", Json{{"design", "P3"}, {"backendId", "template"}}, 200);
    EXPECT_TRUE(again["cached"]);
    EXPECT_EQ(first["report"], again["report"]);
    std::string reportId = first["report"]["reportId"];
    EXPECT_EQ(call("GET", "/api/reports/" + reportId, Json(), 200), first["report"]);
    EXPECT_EQ(call("GET", "/api/cases/syn-002/reports", Json(), 200)["reports"].size(), 1u);

    expectError("GET", "/api/reports/rpt-none", "", 404, "NotFound");
    expectError("POST", "/api/cases/nope/refine", R"({"backendId":"template"})", 404, "NotFound");
    expectError("POST", "/api/cases/syn-002/refine", R"({"backendId":"missing"})", 404, "NotFound");
    expectError("POST", "/api/cases/syn-002/refine", R"({"design":"P9","backendId":"template"})", 400,
                "InvalidRequest");
    expectError("POST", "/api/cases/syn-002/refine", "{not json", 400, "InvalidRequest");
    expectError("POST", "/api/cases/syn-002/refine", R"({"design":"P1"})", 400, "InvalidRequest");
}

TEST_F(ApiFixture, RunRoutes) {
    call("POST", "/api/cases", Json(t::syntheticPool(3)), 201);
    auto run = call("POST", "/api/runs", Json{{"design", "P3"}, {"backendId", "template"}, {"perCategory", 2}, {"seed", 4}},
                    201);
    std::string runId = run["runId"];
    EXPECT_EQ(run["manifest"]["caseIds"].size(), 12u);
    EXPECT_EQ(run["evalReport"]["n"], 12);
    auto fetched = call("GET", "/api/runs/" + runId, Json(), 200);
    EXPECT_EQ(fetched, run);
    expectError("GET", "/api/runs/run-missing", "", 404, "NotFound");
    expectError("POST", "/api/runs", R"({"backendId":"template","perCategory":9})", 400, "InvalidRequest");
}

TEST_F(ApiFixture, ChatRoutes) {
    call("POST", "/api/cases", Json(t::syntheticPool(1)), 201);
    auto rep = call("POST", "/api/cases/syn-001/refine", Json{{"backendId", "template"}}, 201)["report"];
    auto session = call("POST", "/api/chat", Json{{"caseId", "syn-001"}, {"reportId", rep["reportId"]}}, 201);
    std::string id = session["sessionId"];
    auto reply = call("POST", "/api/chat/" + id + "/messages", Json{{"question", "Is it serious?"}, {"backendId", "echo"}},
                      200);
    EXPECT_EQ(reply["turn"]["role"], "assistant");
    EXPECT_EQ(call("GET", "/api/chat/" + id, Json(), 200)["turns"].size(), 2u);
    expectError("POST", "/api/chat/" + id + "/messages", R"({"question":"","backendId":"echo"})", 400,
                "InvalidRequest");
    expectError("POST", "/api/chat", R"({"caseId":"syn-001","reportId":"rpt-x"})", 404, "NotFound");
    expectError("GET", "/api/chat/ses-424242", "", 404, "NotFound");
}

TEST_F(ApiFixture, UnknownRoutes) {
    expectError("GET", "/api/nothing", "", 404, "NotFound");
    expectError("DELETE", "/api/cases", "", 404, "NotFound");
    expectError("GET", "/elsewhere", "", 404, "NotFound");
    EXPECT_EQ(call("GET", "/api/backends", Json(), 200)["backends"], (Json{"echo", "template"}));
}

TEST(ErrorMapping, LlmKinds) {
    auto r = errorResponse(llm::LlmError(llm::ErrorKind::RateLimited, "slow down"));
    EXPECT_EQ(r.status, 429);
    EXPECT_EQ(Json::parse(r.body)["error"]["kind"], "RateLimited");
    EXPECT_EQ(errorResponse(llm::LlmError(llm::ErrorKind::Throttled, "x")).status, 429);
    EXPECT_EQ(errorResponse(llm::LlmError(llm::ErrorKind::Permanent, "x")).status, 502);
    EXPECT_EQ(errorResponse(std::runtime_error("boom")).status, 500);
}

TEST_F(ApiFixture, RealSocketRoundTrip) {
    ApiServer server(*pipeline);
    int port = server.start("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    httplib::Client client("127.0.0.1", port);
    auto posted = client.Post("/api/cases", Json(t::syntheticPool(1)).dump(), "application/json");
    ASSERT_TRUE(posted);
    EXPECT_EQ(posted->status, 201);
    auto got = client.Get("/api/cases/syn-004");
    ASSERT_TRUE(got);
    EXPECT_EQ(got->status, 200);
    EXPECT_EQ(Json::parse(got->body)["caseId"], "syn-004");
    auto missing = client.Get("/api/cases/none");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    server.stop();
}
