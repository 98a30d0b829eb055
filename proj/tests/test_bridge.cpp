#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <future>
#include <thread>

#include <json.hpp>

#include "difftester/bridge.hpp"
#include "difftester/conformance.hpp"
#include "difftester/errors.hpp"
#include "difftester/parser.hpp"
#include "difftester/scheduler.hpp"
#include "difftester/server.hpp"

using namespace difftester;
using nlohmann::json;

namespace {

Trace demo_trace(std::uint64_t seed = 1, std::size_t L = 16) {
    TraceOptions o;
    o.length = L;
    o.seed = seed;
    o.name = "demo";
    return make_trace({"assert True\nassert f(1) == 2\n", "assert f(3) == 4\n"}, o);
}

std::unique_ptr<LineTransport> in_process(std::shared_ptr<ReferenceServer> server) {
    return std::make_unique<InProcessTransport>([server](const std::string& line) -> std::optional<std::string> {
        return server->handle(line);
    });
}

// Reference server whose replies are rewritten by `edit` before delivery.
std::unique_ptr<LineTransport> tampered(std::shared_ptr<ReferenceServer> server, std::function<void(json&)> edit) {
    return std::make_unique<InProcessTransport>([server, edit](const std::string& line) -> std::optional<std::string> {
        json reply = json::parse(server->handle(line));
        edit(reply);
        return reply.dump();
    });
}

std::unique_ptr<LineTransport> scripted(std::vector<std::optional<std::string>> replies) {
    auto queue = std::make_shared<std::vector<std::optional<std::string>>>(std::move(replies));
    return std::make_unique<InProcessTransport>([queue](const std::string&) -> std::optional<std::string> {
        if (queue->empty()) return std::nullopt;
        auto r = queue->front();
        queue->erase(queue->begin());
        return r;
    });
}

BatchState batch_of(std::size_t n, std::size_t L) {
    BatchState b;
    for (std::size_t i = 0; i < n; ++i) b.instances.emplace_back(L);
    return b;
}

}  // namespace

TEST_SUITE("bridge") {

TEST_CASE("wire encodings") {
    BatchState b = batch_of(1, 3);
    b.step = 4;
    b.instances[0].commit(1, TokenId(7), 0);
    CHECK(encode_step_request(b) == R"({"type":"step","step":4,"instances":[{"tokens":[null,7,null]}]})");
    CHECK(encode_init_request({}) == R"({"type":"init"})");
    CHECK(encode_init_request({TokenId(3)}) == R"({"type":"init","prompt":[3]})");
    const TokenSequence ids{TokenId(2), TokenId(5)};
    CHECK(encode_detok_request(ids) == R"({"type":"detok","ids":[2,5]})");
}

TEST_CASE("handshake") {
    auto server = std::make_shared<ReferenceServer>(demo_trace());
    BridgeConnection conn(in_process(server));
    CHECK_THROWS_AS(conn.info(), UsageError);
    const BackendInfo info = conn.init();
    CHECK(info.vocab_size == demo_trace().vocab.size());
    CHECK(info.pad_id == TokenId(0));
    CHECK(info.eos_id == TokenId(1));
    CHECK(conn.initialized());
}

TEST_CASE("handshake errors") {
    BridgeConnection missing(scripted({R"({"type":"init_ok","vocab_size":10,"eos_id":1})"}));
    try {
        missing.init();
        FAIL("expected HandshakeError");
    } catch (const HandshakeError& e) {
        CHECK(std::string(e.what()).find("pad_id") != std::string::npos);
    }
    BridgeConnection closed(scripted({std::nullopt}));
    CHECK_THROWS_AS(closed.init(), TransportError);
    BridgeConnection garbage(scripted({"not json"}));
    CHECK_THROWS_AS(garbage.init(), HandshakeError);
    BridgeConnection refused(scripted({R"({"type":"error","message":"model load failed"})"}));
    CHECK_THROWS_AS(refused.init(), HandshakeError);
}

TEST_CASE("step shape and range validation") {
    auto server = std::make_shared<ReferenceServer>(demo_trace(1, 16));
    BridgeConnection conn(in_process(server));
    conn.init();
    BatchState b = batch_of(1, 4);
    b.instances[0].commit(0, TokenId(2), 0);
    b.instances[0].commit(3, TokenId(3), 0);
    const auto props = conn.request_step(b);
    REQUIRE(props.size() == 1);
    CHECK(props[0].candidates.size() == 4);
    CHECK(props[0].confidences.size() == 4);

    BridgeConnection high(tampered(server, [](json& r) {
        if (r["type"] == "candidates") r["instances"][0]["confidences"][1] = 1.3;
    }));
    high.init();
    CHECK_THROWS_AS(high.request_step(b), ProtocolError);

    BridgeConnection short_reply(tampered(server, [](json& r) {
        if (r["type"] == "candidates") r["instances"][0]["candidates"].erase(0);
    }));
    short_reply.init();
    CHECK_THROWS_AS(short_reply.request_step(b), ProtocolError);

    BridgeConnection extra(tampered(server, [](json& r) {
        if (r["type"] == "candidates") r["instances"].push_back(r["instances"][0]);
    }));
    extra.init();
    CHECK_THROWS_AS(extra.request_step(b), ProtocolError);

    BridgeConnection out_of_vocab(tampered(server, [](json& r) {
        if (r["type"] == "candidates") r["instances"][0]["candidates"][1] = 100000;
    }));
    out_of_vocab.init();
    CHECK_THROWS_AS(out_of_vocab.request_step(b), ProtocolError);

    // Committed positions are ignored even when out of range.
    BridgeConnection ignored(tampered(server, [](json& r) {
        if (r["type"] == "candidates") r["instances"][0]["confidences"][0] = 7.0;
    }));
    ignored.init();
    CHECK_NOTHROW(ignored.request_step(b));
}

TEST_CASE("identical step requests give identical candidates") {
    auto server = std::make_shared<ReferenceServer>(demo_trace(42));
    BridgeConnection conn(in_process(server));
    conn.init();
    const BatchState b = batch_of(2, 16);
    const auto x = conn.request_step(b);
    const auto y = conn.request_step(b);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(x[i].candidates == y[i].candidates);
        CHECK(x[i].confidences == y[i].confidences);
    }
}

TEST_CASE("detok") {
    const Trace t = demo_trace();
    auto server = std::make_shared<ReferenceServer>(t);
    BridgeConnection conn(in_process(server));
    conn.init();
    const DetokenizedText empty = conn.request_detok({});
    CHECK(empty.text.empty());
    CHECK(empty.offsets.empty());

    const TokenSequence ids(t.targets[0].begin(), t.targets[0].begin() + 2);
    const DetokenizedText d = conn.request_detok(ids);
    CHECK(d.text == "assert True");
    CHECK(d.offsets == OffsetMap{{0, 6}, {6, 11}});

    const TokenSequence unknown{TokenId(static_cast<std::uint32_t>(t.vocab.size()))};
    CHECK_THROWS_AS(conn.request_detok(unknown), ProtocolError);

    BridgeConnection overlap(tampered(server, [](json& r) {
        if (r["type"] == "detok_ok") r["offsets"][1][0] = 3;
    }));
    overlap.init();
    CHECK_THROWS_AS(overlap.request_detok(ids), ProtocolError);
}

TEST_CASE("server error records surface as protocol errors and keep the session") {
    auto server = std::make_shared<ReferenceServer>(demo_trace());
    CHECK(json::parse(server->handle(R"({"type":"step","step":0,"instances":[]})"))["type"] == "error");
    BridgeConnection conn(in_process(server));
    conn.init();
    CHECK(json::parse(conn.exchange(R"({"type":"bogus"})"))["type"] == "error");
    CHECK(json::parse(conn.exchange("{")).at("type") == "error");
    CHECK_NOTHROW(conn.request_detok({}));
}

TEST_CASE("a failing bridge step leaves the batch unchanged") {
    const Trace t = demo_trace(3, 16);
    auto server = std::make_shared<ReferenceServer>(t);
    int calls = 0;
    BridgeConnection conn(tampered(server, [&calls](json& r) {
        if (r["type"] == "candidates" && ++calls == 2)
            for (auto& c : r["instances"][0]["confidences"]) c = -0.5;
    }));
    conn.init();
    SchedulerConfig c;
    c.length = 16;
    c.max_steps = 8;
    MiniParser parser;
    Scheduler s(c, parser);
    BatchState batch = new_batch({}, 2, c);
    s.decode_step(batch, conn);
    const BatchState before = batch;
    CHECK_THROWS_AS(s.decode_step(batch, conn), ProtocolError);
    CHECK(batch.step == before.step);
    CHECK(batch.instances[0].slots == before.instances[0].slots);
}

TEST_CASE("bridge-driven run matches the in-process simulation") {
    const Trace t = demo_trace(8, 32);
    SchedulerConfig c;
    c.length = 32;
    c.max_steps = 16;
    MiniParser parser;
    Scheduler s(c, parser);

    SimBackend sim(t);
    BatchState a = new_batch({}, 2, c);
    const RunReport ra = s.run(a, sim);

    auto server = std::make_shared<ReferenceServer>(t);
    BridgeConnection conn(in_process(server));
    conn.init();
    BatchState b = new_batch({}, 2, c);
    const RunReport rb = s.run(b, conn);
    CHECK(ra.per_step == rb.per_step);
    CHECK(ra.final_texts == rb.final_texts);
    CHECK_FALSE(rb.simulated);
}

TEST_CASE("conformance suite against the in-process reference server") {
    auto server = std::make_shared<ReferenceServer>(demo_trace());
    BridgeConnection conn(in_process(server));
    const auto checks = run_conformance(conn);
    for (const auto& c : checks) {
        CAPTURE(c.name);
        CAPTURE(c.detail);
        CHECK(c.passed);
    }
    CHECK(checks.size() == 6);
}

TEST_CASE("record and replay 20 sessions") {
    const std::filesystem::path dir = DIFFTESTER_DATA_DIR "/traces";
    std::vector<Trace> traces;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".json") traces.push_back(load_trace(e.path()));
    std::sort(traces.begin(), traces.end(), [](const Trace& a, const Trace& b) { return a.name < b.name; });
    REQUIRE_FALSE(traces.empty());
    for (int session = 0; session < 20; ++session) {
        Trace t = traces[static_cast<std::size_t>(session) % traces.size()];
        t.seed = 1000 + static_cast<std::uint64_t>(session);
        ConformanceOptions opt;
        opt.instances = 2 + static_cast<std::size_t>(session % 4);
        opt.length = 8 + 8 * static_cast<std::size_t>(session % 3);
        opt.seed = static_cast<std::uint64_t>(session);

        std::stringstream log;
        {
            BridgeConnection live(std::make_unique<RecordingTransport>(in_process(std::make_shared<ReferenceServer>(t)), log));
            REQUIRE(all_passed(run_conformance(live, opt)));
        }
        std::stringstream replay_in(log.str());
        auto replay = std::make_unique<ReplayTransport>(replay_in);
        ReplayTransport* raw = replay.get();
        BridgeConnection replayed(std::move(replay));
        CHECK(all_passed(run_conformance(replayed, opt)));
        CHECK(raw->remaining() == 0);
    }
}

TEST_CASE("replay rejects divergent requests") {
    std::stringstream log;
    {
        BridgeConnection live(std::make_unique<RecordingTransport>(in_process(std::make_shared<ReferenceServer>(demo_trace())), log));
        live.init();
    }
    std::stringstream in(log.str());
    BridgeConnection conn(std::make_unique<ReplayTransport>(in));
    CHECK_THROWS_AS(conn.init({TokenId(4)}), ProtocolError);
}

TEST_CASE("child process transport against the sim server") {
    const std::string trace_path = DIFFTESTER_DATA_DIR "/traces/python_sort_list.json";
    BridgeConnection conn(std::make_unique<ChildProcessTransport>(
        std::vector<std::string>{DIFFTESTER_SIM_SERVER, "--trace", trace_path}));
    CHECK(all_passed(run_conformance(conn)));

    BridgeConnection dead(std::make_unique<ChildProcessTransport>(std::vector<std::string>{"/bin/true"}));
    CHECK_THROWS_AS(dead.init(), TransportError);

    BridgeConnection slow(std::make_unique<ChildProcessTransport>(std::vector<std::string>{"/bin/sleep", "5"}),
                          std::chrono::milliseconds(100));
    CHECK_THROWS_AS(slow.init(), HandshakeError);
}

TEST_CASE("tcp transport") {
    auto server = std::make_shared<ReferenceServer>(demo_trace());
    std::promise<int> port;
    auto bound = port.get_future();
    std::thread t([&] { serve_tcp(*server, 0, 1, [&](int p) { port.set_value(p); }); });
    const int p = bound.get();
    {
        BridgeConnection conn(std::make_unique<TcpTransport>("127.0.0.1", p));
        CHECK(all_passed(run_conformance(conn)));
    }
    t.join();
    CHECK_THROWS_AS(TcpTransport("127.0.0.1", p), TransportError);
}

}
