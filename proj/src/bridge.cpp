#include "difftester/bridge.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "difftester/errors.hpp"
#include "difftester/line_index.hpp"

namespace difftester {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

void write_all(int fd, const std::string& data, bool socket) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = socket ? ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL)
                                 : ::write(fd, data.data() + sent, data.size() - sent);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("write to peer failed"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

// Reads from `fd` into `buffer` until a full line is available.
std::string read_line(int fd, std::string& buffer, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const std::size_t nl = buffer.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw TimeoutError("timed out waiting for a reply");
        pollfd pfd{fd, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("poll failed"));
        }
        if (ready == 0) throw TimeoutError("timed out waiting for a reply");
        char chunk[4096];
        const ssize_t n = ::read(fd, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("read from peer failed"));
        }
        if (n == 0) throw TransportError("peer closed the stream");
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Transports

ChildProcessTransport::ChildProcessTransport(const std::vector<std::string>& argv) {
    if (argv.empty()) throw TransportError("empty server command");
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) throw TransportError(sys_error("pipe"));
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw TransportError(sys_error("pipe"));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError(sys_error("fork"));
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        std::_Exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
}

ChildProcessTransport::~ChildProcessTransport() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0) {
        // EOF on stdin asks the server to exit; give it a moment before killing.
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
            ::usleep(10'000);
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
    }
}

void ChildProcessTransport::send_line(const std::string& line) { write_all(to_child_, line + "\n", false); }

std::string ChildProcessTransport::recv_line(std::chrono::milliseconds timeout) {
    return read_line(from_child_, buffer_, timeout);
}

TcpTransport::TcpTransport(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
        throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd_ < 0) continue;
        if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd_);
        fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw TransportError("cannot connect to " + host + ":" + service);
}

TcpTransport::~TcpTransport() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpTransport::send_line(const std::string& line) { write_all(fd_, line + "\n", true); }

std::string TcpTransport::recv_line(std::chrono::milliseconds timeout) { return read_line(fd_, buffer_, timeout); }

void InProcessTransport::send_line(const std::string& line) { pending_.push_back(handler_(line)); }

std::string InProcessTransport::recv_line(std::chrono::milliseconds) {
    if (pending_.empty()) throw TimeoutError("no reply pending");
    std::optional<std::string> reply = std::move(pending_.front());
    pending_.pop_front();
    if (!reply) throw TransportError("peer closed the stream");
    return *reply;
}

void RecordingTransport::send_line(const std::string& line) {
    last_request_ = line;
    inner_->send_line(line);
}

std::string RecordingTransport::recv_line(std::chrono::milliseconds timeout) {
    std::string reply = inner_->recv_line(timeout);
    ordered rec;
    rec["request"] = last_request_;
    rec["response"] = reply;
    log_ << rec.dump() << '\n';
    return reply;
}

ReplayTransport::ReplayTransport(std::istream& recording) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(recording, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            exchanges_.emplace_back(rec.at("request").get<std::string>(), rec.at("response").get<std::string>());
        } catch (const json::exception& e) {
            throw TransportError("malformed recording at line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void ReplayTransport::send_line(const std::string& line) {
    if (next_ >= exchanges_.size()) throw TransportError("recording exhausted");
    if (exchanges_[next_].first != line)
        throw ProtocolError("request " + std::to_string(next_) + " differs from the recording");
    awaiting_reply_ = true;
}

std::string ReplayTransport::recv_line(std::chrono::milliseconds) {
    if (!awaiting_reply_) throw TimeoutError("no reply pending");
    awaiting_reply_ = false;
    return exchanges_[next_++].second;
}

// ---------------------------------------------------------------------------
// Encoding

std::string encode_init_request(const TokenSequence& prompt) {
    ordered msg;
    msg["type"] = "init";
    if (!prompt.empty()) {
        ordered ids = ordered::array();
        for (TokenId id : prompt) ids.push_back(id.value);
        msg["prompt"] = ids;
    }
    return msg.dump();
}

std::string encode_step_request(const BatchState& batch) {
    ordered msg;
    msg["type"] = "step";
    msg["step"] = batch.step;
    ordered instances = ordered::array();
    for (const InstanceState& inst : batch.instances) {
        ordered tokens = ordered::array();
        for (const SlotState& s : inst.slots) {
            if (s.is_committed()) tokens.push_back(s.token().value);
            else tokens.push_back(nullptr);
        }
        ordered entry;
        entry["tokens"] = tokens;
        instances.push_back(entry);
    }
    msg["instances"] = instances;
    return msg.dump();
}

std::string encode_detok_request(std::span<const TokenId> ids) {
    ordered msg;
    msg["type"] = "detok";
    ordered arr = ordered::array();
    for (TokenId id : ids) arr.push_back(id.value);
    msg["ids"] = arr;
    return msg.dump();
}

// ---------------------------------------------------------------------------
// Client

namespace {

json parse_reply(const std::string& line, const std::string& expected_type) {
    json reply;
    try {
        reply = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("reply is not valid JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("type") || !reply["type"].is_string())
        throw ProtocolError("reply lacks a string 'type' field");
    const std::string type = reply["type"];
    if (type == "error") throw ProtocolError("server error: " + reply.value("message", std::string("(no message)")));
    if (type != expected_type) throw ProtocolError("expected '" + expected_type + "' reply, got '" + type + "'");
    return reply;
}

std::uint32_t require_id(const json& reply, const char* field) {
    if (!reply.contains(field)) throw HandshakeError(std::string("init_ok reply missing field '") + field + "'");
    const json& v = reply.at(field);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw HandshakeError(std::string("init_ok field '") + field + "' must be a non-negative integer");
    return v.get<std::uint32_t>();
}

}  // namespace

BridgeConnection::BridgeConnection(std::unique_ptr<LineTransport> transport, std::chrono::milliseconds timeout)
    : transport_(std::move(transport)), timeout_(timeout) {}

std::string BridgeConnection::exchange(const std::string& request) {
    transport_->send_line(request);
    return transport_->recv_line(timeout_);
}

BackendInfo BridgeConnection::init(const TokenSequence& prompt) {
    std::string line;
    try {
        line = exchange(encode_init_request(prompt));
    } catch (const TimeoutError& e) {
        throw HandshakeError(std::string("handshake failed: ") + e.what());
    }
    json reply;
    try {
        reply = parse_reply(line, "init_ok");
    } catch (const HandshakeError&) {
        throw;
    } catch (const ProtocolError& e) {
        throw HandshakeError(std::string("handshake failed: ") + e.what());
    }
    BackendInfo info;
    const std::uint32_t vocab = require_id(reply, "vocab_size");
    info.pad_id = TokenId(require_id(reply, "pad_id"));
    info.eos_id = TokenId(require_id(reply, "eos_id"));
    if (vocab == 0) throw HandshakeError("init_ok field 'vocab_size' must be positive");
    info.vocab_size = vocab;
    if (info.pad_id.value >= vocab || info.eos_id.value >= vocab)
        throw HandshakeError("init_ok pad_id/eos_id outside the vocabulary");
    if (reply.contains("language_id")) {
        if (!reply["language_id"].is_string()) throw HandshakeError("init_ok field 'language_id' must be a string");
        info.language_id = reply["language_id"].get<std::string>();
    }
    session_ = info;
    return info;
}

BackendInfo BridgeConnection::info() const {
    if (!session_) throw UsageError("bridge session not initialized");
    return *session_;
}

std::vector<Proposal> BridgeConnection::request_step(const BatchState& batch) {
    const BackendInfo session = info();
    std::string line;
    try {
        line = exchange(encode_step_request(batch));
    } catch (const TimeoutError& e) {
        throw ProtocolError(std::string("step request: ") + e.what());
    }
    const json reply = parse_reply(line, "candidates");
    if (!reply.contains("instances") || !reply["instances"].is_array())
        throw ProtocolError("candidates reply lacks an 'instances' array");
    const json& instances = reply["instances"];
    if (instances.size() != batch.size())
        throw ProtocolError("candidates reply has " + std::to_string(instances.size()) + " instances, expected " +
                            std::to_string(batch.size()));
    std::vector<Proposal> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const json& entry = instances[i];
        const InstanceState& inst = batch.instances[i];
        const std::size_t L = inst.length();
        if (!entry.is_object() || !entry.contains("candidates") || !entry.contains("confidences") ||
            !entry["candidates"].is_array() || !entry["confidences"].is_array())
            throw ProtocolError("instance " + std::to_string(i) + " lacks candidates/confidences arrays");
        const json& cand = entry["candidates"];
        const json& conf = entry["confidences"];
        if (cand.size() != L || conf.size() != L)
            throw ProtocolError("instance " + std::to_string(i) + " arrays have length " + std::to_string(cand.size()) +
                                "/" + std::to_string(conf.size()) + ", expected " + std::to_string(L));
        Proposal& p = out[i];
        p.candidates.resize(L);
        p.confidences.assign(L, 0.0);
        for (std::size_t pos = 0; pos < L; ++pos) {
            if (inst.slots[pos].is_committed()) {
                p.candidates[pos] = inst.slots[pos].token();
                continue;
            }
            if (!cand[pos].is_number_integer() || cand[pos].get<long long>() < 0 ||
                static_cast<std::size_t>(cand[pos].get<long long>()) >= session.vocab_size)
                throw ProtocolError("invalid candidate at instance " + std::to_string(i) + " position " +
                                    std::to_string(pos));
            if (!conf[pos].is_number())
                throw ProtocolError("non-numeric confidence at instance " + std::to_string(i) + " position " +
                                    std::to_string(pos));
            const double c = conf[pos].get<double>();
            if (!(c >= 0.0 && c <= 1.0))
                throw ProtocolError("confidence " + std::to_string(c) + " outside [0, 1] at instance " +
                                    std::to_string(i) + " position " + std::to_string(pos));
            p.candidates[pos] = TokenId(cand[pos].get<std::uint32_t>());
            p.confidences[pos] = c;
        }
    }
    return out;
}

DetokenizedText BridgeConnection::request_detok(std::span<const TokenId> ids) {
    const BackendInfo session = info();
    for (TokenId id : ids)
        if (id.value >= session.vocab_size) throw ProtocolError("detok of unknown id " + std::to_string(id.value));
    std::string line;
    try {
        line = exchange(encode_detok_request(ids));
    } catch (const TimeoutError& e) {
        throw ProtocolError(std::string("detok request: ") + e.what());
    }
    const json reply = parse_reply(line, "detok_ok");
    if (!reply.contains("text") || !reply["text"].is_string()) throw ProtocolError("detok_ok lacks 'text'");
    if (!reply.contains("offsets") || !reply["offsets"].is_array()) throw ProtocolError("detok_ok lacks 'offsets'");
    DetokenizedText out;
    out.text = reply["text"].get<std::string>();
    const json& offsets = reply["offsets"];
    if (offsets.size() != ids.size())
        throw ProtocolError("detok_ok has " + std::to_string(offsets.size()) + " spans for " +
                            std::to_string(ids.size()) + " ids");
    for (const json& s : offsets) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned())
            throw ProtocolError("detok span must be a [start, end] pair of non-negative integers");
        out.offsets.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    if (!offsets_consistent(out.offsets, out.text.size()))
        throw ProtocolError("detok spans overlap, leave gaps, or do not cover the text");
    return out;
}

}  // namespace difftester
