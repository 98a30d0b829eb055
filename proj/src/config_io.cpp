#include "difftester/config_io.hpp"

#include <fstream>
#include <sstream>

#include "difftester/errors.hpp"

namespace difftester {

using nlohmann::json;

nlohmann::ordered_json config_to_json(const SchedulerConfig& c) {
    nlohmann::ordered_json j;
    j["length"] = c.length;
    j["max_steps"] = c.max_steps;
    j["retain_per_step"] = c.retain_per_step;
    j["tau"] = c.tau;
    j["step_size"] = c.step_size;
    j["schedule"] = c.schedule == StepSchedule::Fixed ? "fixed" : "linear";
    j["step_growth"] = c.step_growth;
    j["literal_types"] = c.literal_types;
    j["language_id"] = c.language_id;
    j["pad_id"] = c.pad_id.value;
    j["eos_id"] = c.eos_id.value;
    j["seed"] = c.seed;
    j["flops_per_forward"] = c.flops_per_forward;
    j["acceleration"] = c.acceleration;
    j["pad_fastforward"] = c.pad_fastforward;
    return j;
}

namespace {

template <typename T>
T field(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + key + "' has the wrong type");
    }
}

std::size_t count_field(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("config field '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace

SchedulerConfig config_from_json(const json& doc, SchedulerConfig c) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, v] : doc.items()) {
        if (key == "length") c.length = count_field(v, key);
        else if (key == "max_steps") c.max_steps = field<int>(v, key);
        else if (key == "retain_per_step") c.retain_per_step = count_field(v, key);
        else if (key == "tau") c.tau = field<double>(v, key);
        else if (key == "step_size") c.step_size = field<int>(v, key);
        else if (key == "schedule") {
            const auto s = field<std::string>(v, key);
            if (s == "fixed") c.schedule = StepSchedule::Fixed;
            else if (s == "linear") c.schedule = StepSchedule::Linear;
            else throw ConfigError("config field 'schedule' must be \"fixed\" or \"linear\"");
        } else if (key == "step_growth") c.step_growth = field<int>(v, key);
        else if (key == "literal_types") c.literal_types = field<std::set<std::string>>(v, key);
        else if (key == "language_id") c.language_id = field<std::string>(v, key);
        else if (key == "pad_id") c.pad_id = TokenId(static_cast<std::uint32_t>(count_field(v, key)));
        else if (key == "eos_id") c.eos_id = TokenId(static_cast<std::uint32_t>(count_field(v, key)));
        else if (key == "seed") c.seed = count_field(v, key);
        else if (key == "flops_per_forward") c.flops_per_forward = field<double>(v, key);
        else if (key == "acceleration") c.acceleration = field<bool>(v, key);
        else if (key == "pad_fastforward") c.pad_fastforward = field<bool>(v, key);
        else throw ConfigError("unknown config field '" + key + "'");
    }
    c.validate();
    return c;
}

SchedulerConfig parse_config(std::string_view document, SchedulerConfig base) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < e.byte && i < document.size(); ++i)
            if (document[i] == '\n') ++line;
        throw ParseError(std::string("malformed config: ") + e.what(), line);
    }
    return config_from_json(doc, std::move(base));
}

SchedulerConfig load_config(const std::filesystem::path& path, SchedulerConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

}  // namespace difftester
