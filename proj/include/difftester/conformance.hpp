#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "difftester/bridge.hpp"

namespace difftester {

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ConformanceOptions {
    std::size_t instances = 2;
    std::size_t length = 16;
    std::uint64_t seed = 7;  // picks the committed ids of the probe batch
};

/// Runs the protocol conformance checks against a fresh connection: init
/// shape, step shape and range, determinism of repeated steps, an
/// all-committed instance, detok of the empty sequence, offset concatenation,
/// and survival of a rejected request. The connection is initialized here.
std::vector<ConformanceCheck> run_conformance(BridgeConnection& connection, const ConformanceOptions& options = {});

bool all_passed(const std::vector<ConformanceCheck>& checks);

}  // namespace difftester
