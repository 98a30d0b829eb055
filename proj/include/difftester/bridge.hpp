#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "difftester/backend.hpp"

namespace difftester {

/// Newline-framed text channel. Exactly one request is in flight at a time.
class LineTransport {
public:
    virtual ~LineTransport() = default;

    virtual void send_line(const std::string& line) = 0;
    /// Throws TimeoutError after `timeout`, TransportError when the peer closed.
    virtual std::string recv_line(std::chrono::milliseconds timeout) = 0;
};

/// Spawns `argv` and talks to it over its stdin/stdout.
class ChildProcessTransport final : public LineTransport {
public:
    explicit ChildProcessTransport(const std::vector<std::string>& argv);
    ~ChildProcessTransport() override;

    ChildProcessTransport(const ChildProcessTransport&) = delete;
    ChildProcessTransport& operator=(const ChildProcessTransport&) = delete;

    void send_line(const std::string& line) override;
    std::string recv_line(std::chrono::milliseconds timeout) override;

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

class TcpTransport final : public LineTransport {
public:
    TcpTransport(const std::string& host, int port);
    ~TcpTransport() override;

    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    void send_line(const std::string& line) override;
    std::string recv_line(std::chrono::milliseconds timeout) override;

private:
    int fd_ = -1;
    std::string buffer_;
};

/// Calls `handler` synchronously; a nullopt reply behaves like a closed stream.
class InProcessTransport final : public LineTransport {
public:
    using Handler = std::function<std::optional<std::string>(const std::string&)>;
    explicit InProcessTransport(Handler handler) : handler_(std::move(handler)) {}

    void send_line(const std::string& line) override;
    std::string recv_line(std::chrono::milliseconds timeout) override;

private:
    Handler handler_;
    std::deque<std::optional<std::string>> pending_;
};

/// Forwards to `inner` and appends {"request": ..., "response": ...} records to `log`.
class RecordingTransport final : public LineTransport {
public:
    RecordingTransport(std::unique_ptr<LineTransport> inner, std::ostream& log) : inner_(std::move(inner)), log_(log) {}

    void send_line(const std::string& line) override;
    std::string recv_line(std::chrono::milliseconds timeout) override;

private:
    std::unique_ptr<LineTransport> inner_;
    std::ostream& log_;
    std::string last_request_;
};

/// Serves responses from a recording; requests must match the recorded ones byte for byte.
class ReplayTransport final : public LineTransport {
public:
    explicit ReplayTransport(std::istream& recording);

    void send_line(const std::string& line) override;
    std::string recv_line(std::chrono::milliseconds timeout) override;

    std::size_t remaining() const { return exchanges_.size() - next_; }

private:
    std::vector<std::pair<std::string, std::string>> exchanges_;
    std::size_t next_ = 0;
    bool awaiting_reply_ = false;
};

/// Client side of the decoder wire protocol.
class BridgeConnection final : public DecoderBackend {
public:
    explicit BridgeConnection(std::unique_ptr<LineTransport> transport,
                              std::chrono::milliseconds timeout = std::chrono::seconds(30));

    /// Handshake. `prompt`, when non-empty, is forwarded in the init record.
    BackendInfo init(const TokenSequence& prompt = {});
    bool initialized() const { return session_.has_value(); }

    std::vector<Proposal> request_step(const BatchState& batch);
    DetokenizedText request_detok(std::span<const TokenId> ids);

    BackendInfo info() const override;
    std::vector<Proposal> propose(const BatchState& batch) override { return request_step(batch); }
    DetokenizedText detokenize(std::span<const TokenId> tokens) override { return request_detok(tokens); }

    /// Sends one raw request line and returns the raw reply, unvalidated.
    std::string exchange(const std::string& request);

private:

    std::unique_ptr<LineTransport> transport_;
    std::chrono::milliseconds timeout_;
    std::optional<BackendInfo> session_;
};

/// Wire encodings, exposed so servers and tests share them.
std::string encode_init_request(const TokenSequence& prompt);
std::string encode_step_request(const BatchState& batch);
std::string encode_detok_request(std::span<const TokenId> ids);

}  // namespace difftester
