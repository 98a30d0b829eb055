#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "difftester/sim_backend.hpp"

namespace difftester {

/// In-process reference implementation of the server side of the decoder
/// protocol, answering from a simulation trace. Requests with a different
/// batch shape than the trace are served from targets truncated or padded to
/// the requested length (and cycled over the requested instance count).
class ReferenceServer {
public:
    explicit ReferenceServer(Trace trace);

    /// Reply line for one request line. Failures become error records.
    std::string handle(const std::string& line);

private:
    SimBackend& backend_for(std::size_t n, std::size_t length);

    Trace trace_;
    TokenSequence prompt_;
    bool initialized_ = false;
    std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<SimBackend>> backends_;
};

/// Answers newline-framed requests from `in_fd` on `out_fd` until EOF.
void serve_stream(ReferenceServer& server, int in_fd, int out_fd);

/// Accepts connections on `port` (0 picks a free one) and serves them one at a
/// time; `on_listen` receives the bound port. Stops after `max_connections`
/// connections when positive.
void serve_tcp(ReferenceServer& server, int port, int max_connections, const std::function<void(int)>& on_listen);

}  // namespace difftester
