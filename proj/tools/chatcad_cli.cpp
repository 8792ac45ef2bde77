// chatcad command-line interface: bridge render, ingest, refine, eval, label,
// serve, chat.

#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "chatcad/api.hpp"
#include "chatcad/bridge.hpp"
#include "chatcad/eval.hpp"
#include "chatcad/labeler.hpp"
#include "chatcad/pipeline.hpp"

using namespace chatcad;

namespace {

std::string readAll(std::istream& in) { return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}; }

std::string readFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError(fmt::format("cannot open '{}'", path));
    return readAll(in);
}

std::vector<Json> readJsonl(const std::string& path) {
    std::istringstream in(readFile(path));
    std::vector<Json> rows;
    std::size_t lineNo = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DomainError(fmt::format("{}:{}: invalid JSON", path, lineNo));
        rows.push_back(std::move(j));
    }
    return rows;
}

labeler::Labeler makeLabeler(const std::string& lexiconPath, const std::string& cuesPath) {
    return {lexiconPath.empty() ? labeler::Lexicon::defaults() : labeler::Lexicon::load(lexiconPath),
            cuesPath.empty() ? labeler::CueSet::defaults() : labeler::CueSet::load(cuesPath)};
}

std::string firstString(const Json& row, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        if (row.contains(k) && row[k].is_string()) return row[k].get<std::string>();
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ChatCAD toolkit: bridge CAD outputs into LLM prompts, refine and evaluate reports, chat"};
    app.require_subcommand(1);

    std::string configPath;
    std::string design = "p3";
    bool suppress = false;

    // bridge render
    auto* bridgeCmd = app.add_subcommand("bridge", "Prompt rendering");
    bridgeCmd->require_subcommand(1);
    auto* render = bridgeCmd->add_subcommand("render", "Render the revision prompt for a CaseRecord read from stdin");
    render->add_option("--design", design, "p1, p2 or p3")->check(CLI::IsMember({"p1", "p2", "p3", "P1", "P2", "P3"}));
    render->add_flag("--suppress-mention", suppress, "Ask the model not to mention the networks");

    // ingest
    std::string inPath;
    auto* ingest = app.add_subcommand("ingest", "Ingest cases from JSONL or CSV");
    ingest->add_option("--config", configPath)->required();
    ingest->add_option("--in", inPath)->required();

    // refine
    std::string caseId, backendId;
    auto* refine = app.add_subcommand("refine", "Refine one case's report through a backend");
    refine->add_option("--config", configPath)->required();
    refine->add_option("--case", caseId)->required();
    refine->add_option("--backend", backendId)->required();
    refine->add_option("--design", design)->check(CLI::IsMember({"p1", "p2", "p3", "P1", "P2", "P3"}));
    refine->add_flag("--suppress-mention", suppress);

    // eval
    int perCategory = 50;
    std::uint64_t seed = 0;
    std::string outPath, policy = "AsPositive", lexiconPath, cuesPath;
    auto* evalCmd = app.add_subcommand("eval", "Run a sampled evaluation, or score an existing JSONL of reports");
    evalCmd->add_option("--config", configPath, "Pipeline config (sampled run mode)");
    evalCmd->add_option("--in", inPath, "JSONL of {caseId, refinedReport, draftReport, groundTruthLabels}");
    evalCmd->add_option("--backend", backendId);
    evalCmd->add_option("--design", design)->check(CLI::IsMember({"p1", "p2", "p3", "P1", "P2", "P3"}));
    evalCmd->add_option("--per-category", perCategory);
    evalCmd->add_option("--seed", seed);
    evalCmd->add_flag("--suppress-mention", suppress);
    evalCmd->add_option("--policy", policy)->check(CLI::IsMember({"AsPositive", "AsNegative"}));
    evalCmd->add_option("--lexicon", lexiconPath);
    evalCmd->add_option("--cues", cuesPath);
    evalCmd->add_option("--out", outPath, "Write the EvalReport JSON here instead of stdout");

    // label
    auto* label = app.add_subcommand("label", "Label free-text reports");
    label->add_option("--in", inPath)->required();
    label->add_option("--out", outPath)->required();
    label->add_option("--lexicon", lexiconPath);
    label->add_option("--cues", cuesPath);

    // serve
    std::string host = "127.0.0.1", staticDir;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--config", configPath)->required();
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--static", staticDir, "Directory of built UI assets");

    // chat
    std::string reportId, sessionId;
    auto* chatCmd = app.add_subcommand("chat", "Interactive grounded chat about one case (questions on stdin)");
    chatCmd->add_option("--config", configPath)->required();
    chatCmd->add_option("--backend", backendId)->required();
    chatCmd->add_option("--case", caseId);
    chatCmd->add_option("--report", reportId);
    chatCmd->add_option("--session", sessionId, "Continue an existing session");

    CLI11_PARSE(app, argc, argv);

    try {
        if (render->parsed()) {
            Json j = Json::parse(readAll(std::cin));
            if (!j.contains("createdAt")) j["createdAt"] = "";
            auto record = j.get<CaseRecord>();
            std::cout << bridge::composeQuery(record, designFromName(design), suppress).fullText;
            return 0;
        }
        if (label->parsed()) {
            auto labeler = makeLabeler(lexiconPath, cuesPath);
            std::ofstream out(outPath);
            if (!out) throw DomainError(fmt::format("cannot write '{}'", outPath));
            for (const auto& row : readJsonl(inPath)) {
                std::string id = firstString(row, {"caseId", "id", "reportId"});
                std::string text = firstString(row, {"text", "report", "refinedReport"});
                out << Json{{"caseId", id}, {"labels", labeler.label(text)}}.dump() << '\n';
            }
            return 0;
        }
        if (evalCmd->parsed() && !inPath.empty()) {
            auto labeler = makeLabeler(lexiconPath, cuesPath);
            std::vector<eval::EvalCase> cases;
            for (const auto& row : readJsonl(inPath)) {
                eval::EvalCase c;
                c.caseId = firstString(row, {"caseId"});
                c.refinedReport = firstString(row, {"refinedReport", "text"});
                if (row.contains("draftReport") && row["draftReport"].is_string()) c.draftReport = row["draftReport"];
                c.groundTruth = row.at("groundTruthLabels").get<LabelSet>();
                cases.push_back(std::move(c));
            }
            auto report = eval::evaluate(cases, labeler, labeler::policyFromName(policy), {"", "", "", 0});
            std::cout << eval::formatTable(report.metrics);
            if (outPath.empty()) {
                std::cout << eval::toJson(report).dump(2) << '\n';
            } else {
                std::ofstream(outPath) << eval::toJson(report).dump(2) << '\n';
            }
            return 0;
        }

        if (configPath.empty()) throw DomainError("--config is required");
        Pipeline pipeline(PipelineConfig::load(configPath));

        if (ingest->parsed()) {
            auto result = pipeline.ingestFile(inPath);
            std::cout << toJson(result).dump(2) << '\n';
            return result.rejected.empty() ? 0 : 2;
        }
        if (refine->parsed()) {
            auto outcome = pipeline.refineCase(caseId, designFromName(design), backendId, suppress);
            std::cerr << fmt::format("report {}{}\n", outcome.report.reportId, outcome.cached ? " (cached)" : "");
            std::cout << outcome.report.text << '\n';
            return 0;
        }
        if (evalCmd->parsed()) {
            if (backendId.empty()) throw DomainError("--backend is required for a sampled run");
            RunParams p{designFromName(design), backendId, perCategory, seed, suppress};
            auto outcome = pipeline.runEvaluation(p);
            std::cerr << fmt::format("run {} n={} failed={}\n", outcome.manifest.runId, outcome.report.n,
                                     outcome.report.failedCaseIds.size());
            std::cout << eval::formatTable(outcome.report.metrics);
            if (outPath.empty()) {
                std::cout << eval::toJson(outcome.report).dump(2) << '\n';
            } else {
                std::ofstream(outPath) << eval::toJson(outcome.report).dump(2) << '\n';
            }
            return 0;
        }
        if (serve->parsed()) {
            api::ApiServer server(pipeline, staticDir);
            std::cerr << fmt::format("serving on http://{}:{}\n", host, port);
            server.listen(host, port);
            return 0;
        }
        if (chatCmd->parsed()) {
            if (sessionId.empty()) {
                if (caseId.empty() || reportId.empty()) throw DomainError("--case and --report are required for a new session");
                sessionId = pipeline.chat().openSession(caseId, reportId).sessionId;
            }
            std::cerr << fmt::format("session {}\n", sessionId);
            for (std::string q; std::cerr << "> " && std::getline(std::cin, q);) {
                if (q.find_first_not_of(" \t") == std::string::npos) continue;
                try {
                    std::cout << pipeline.chat().ask(sessionId, q, backendId).content << "\n" << std::flush;
                } catch (const llm::LlmError& e) {
                    std::cerr << fmt::format("error ({}): {}\n", llm::errorKindName(e.kind()), e.what());
                }
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
