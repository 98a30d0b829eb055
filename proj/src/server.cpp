#include "difftester/server.hpp"

#include <cerrno>
#include <cstring>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "difftester/errors.hpp"

namespace difftester {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

std::string error_record(const std::string& message) {
    ordered msg;
    msg["type"] = "error";
    msg["message"] = message;
    return msg.dump();
}

}  // namespace

ReferenceServer::ReferenceServer(Trace trace) : trace_(std::move(trace)) { trace_.validate(); }

SimBackend& ReferenceServer::backend_for(std::size_t n, std::size_t length) {
    auto& slot = backends_[{n, length}];
    if (!slot) {
        Trace shaped = trace_;
        shaped.targets.clear();
        for (std::size_t i = 0; i < n; ++i) {
            TokenSequence t = trace_.targets[i % trace_.targets.size()];
            t.resize(length, Trace::kPad);
            shaped.targets.push_back(std::move(t));
        }
        shaped.replay.clear();
        if (shaped.confidence_model == ConfidenceModel::FileReplay) shaped.confidence_model = ConfidenceModel::SeededUniform;
        slot = std::make_unique<SimBackend>(std::move(shaped));
    }
    return *slot;
}

std::string ReferenceServer::handle(const std::string& line) {
    json req;
    try {
        req = json::parse(line);
    } catch (const json::parse_error& e) {
        return error_record(std::string("request is not valid JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("type") || !req["type"].is_string())
        return error_record("request lacks a string 'type' field");
    const std::string type = req["type"];
    try {
        if (type == "init") {
            prompt_.clear();
            if (req.contains("prompt"))
                for (const json& id : req["prompt"]) prompt_.push_back(TokenId(id.get<std::uint32_t>()));
            initialized_ = true;
            ordered reply;
            reply["type"] = "init_ok";
            reply["vocab_size"] = trace_.vocab.size();
            reply["pad_id"] = Trace::kPad.value;
            reply["eos_id"] = Trace::kEos.value;
            reply["language_id"] = trace_.language_id;
            return reply.dump();
        }
        if (!initialized_) return error_record("session not initialized");
        if (type == "step") {
            const json& instances = req.at("instances");
            if (!instances.is_array() || instances.empty()) return error_record("step needs a non-empty 'instances' array");
            const std::size_t L = instances[0].at("tokens").size();
            BatchState batch;
            batch.prompt = prompt_;
            batch.step = req.at("step").get<int>();
            for (const json& inst : instances) {
                const json& tokens = inst.at("tokens");
                if (tokens.size() != L) return error_record("instances differ in length");
                InstanceState state(L);
                for (std::size_t pos = 0; pos < L; ++pos) {
                    if (tokens[pos].is_null()) continue;
                    const TokenId id(tokens[pos].get<std::uint32_t>());
                    if (!trace_.vocab.contains(id)) return error_record("unknown token id " + std::to_string(id.value));
                    state.commit(pos, id, batch.step);
                }
                batch.instances.push_back(std::move(state));
            }
            const auto proposals = backend_for(batch.size(), L).propose_at(batch, batch.step, trace_.seed);
            ordered reply;
            reply["type"] = "candidates";
            ordered out = ordered::array();
            for (const Proposal& p : proposals) {
                ordered entry;
                ordered cand = ordered::array();
                for (TokenId id : p.candidates) cand.push_back(id.value);
                entry["candidates"] = cand;
                entry["confidences"] = p.confidences;
                out.push_back(entry);
            }
            reply["instances"] = out;
            return reply.dump();
        }
        if (type == "detok") {
            TokenSequence ids;
            for (const json& id : req.at("ids")) ids.push_back(TokenId(id.get<std::uint32_t>()));
            const DetokenizedText det = detokenize(ids, trace_.vocab);
            ordered reply;
            reply["type"] = "detok_ok";
            reply["text"] = det.text;
            ordered spans = ordered::array();
            for (const CharSpan& s : det.offsets) spans.push_back({s.start, s.end});
            reply["offsets"] = spans;
            return reply.dump();
        }
        return error_record("unknown request type '" + type + "'");
    } catch (const json::exception& e) {
        return error_record(std::string("malformed request: ") + e.what());
    } catch (const Error& e) {
        return error_record(e.what());
    }
}

void serve_stream(ReferenceServer& server, int in_fd, int out_fd) {
    std::string buffer;
    char chunk[4096];
    while (true) {
        const ssize_t n = ::read(in_fd, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            const std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            const std::string reply = server.handle(line) + "\n";
            std::size_t sent = 0;
            while (sent < reply.size()) {
                const ssize_t w = ::write(out_fd, reply.data() + sent, reply.size() - sent);
                if (w < 0 && errno == EINTR) continue;
                if (w <= 0) return;
                sent += static_cast<std::size_t>(w);
            }
        }
    }
}

void serve_tcp(ReferenceServer& server, int port, int max_connections, const std::function<void(int)>& on_listen) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 4) != 0) {
        ::close(fd);
        throw TransportError(std::string("cannot listen on port ") + std::to_string(port) + ": " + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    if (on_listen) on_listen(ntohs(addr.sin_port));
    for (int served = 0; max_connections <= 0 || served < max_connections; ++served) {
        const int conn = ::accept(fd, nullptr, nullptr);
        if (conn < 0) {
            if (errno == EINTR) continue;
            break;
        }
        serve_stream(server, conn, conn);
        ::close(conn);
    }
    ::close(fd);
}

}  // namespace difftester
