#pragma once

// JSON HTTP API over a Pipeline. Routing is transport-independent so tests
// can drive it directly; ApiServer binds it to a cpp-httplib server.

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "chatcad/pipeline.hpp"

namespace httplib {
class Server;
}

namespace chatcad::api {

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string contentType = "application/json";
};

class ApiRouter {
public:
    explicit ApiRouter(Pipeline& pipeline) : pipeline_(pipeline) {}

    ApiResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

private:
    ApiResponse route(const std::string& method, const std::vector<std::string>& segments, const std::string& body) const;

    Pipeline& pipeline_;
};

// Maps library exceptions onto status codes and {"error": {"kind", "message"}}.
ApiResponse errorResponse(const std::exception& e);

class ApiServer {
public:
    ApiServer(Pipeline& pipeline, std::filesystem::path staticDir = {});
    ~ApiServer();

    // Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host, int port);
    // Blocks the calling thread.
    void listen(const std::string& host, int port);
    void stop();

private:
    void configure();

    ApiRouter router_;
    std::filesystem::path staticDir_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace chatcad::api
