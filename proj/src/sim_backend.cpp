#include "difftester/sim_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <array>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "difftester/errors.hpp"

namespace difftester {

using nlohmann::json;

std::string to_string(ConfidenceModel model) {
    switch (model) {
        case ConfidenceModel::SeededUniform: return "seeded-uniform";
        case ConfidenceModel::LocalityBiased: return "locality-biased";
        case ConfidenceModel::FileReplay: return "file-replay";
    }
    return "seeded-uniform";
}

ConfidenceModel confidence_model_from_string(const std::string& name) {
    if (name == "seeded-uniform") return ConfidenceModel::SeededUniform;
    if (name == "locality-biased") return ConfidenceModel::LocalityBiased;
    if (name == "file-replay") return ConfidenceModel::FileReplay;
    throw ConfigError("unknown confidence model '" + name + "'");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

double hashed_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t salt) {
    const std::uint64_t h = splitmix(seed ^ splitmix(a ^ splitmix(b ^ splitmix(c ^ splitmix(salt)))));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void Trace::validate() const {
    if (targets.empty()) throw ConfigError("trace '" + name + "' has no targets");
    const std::size_t L = targets.front().size();
    for (const auto& t : targets) {
        if (t.size() != L) throw ConfigError("trace '" + name + "' targets differ in length");
        for (TokenId id : t)
            if (!vocab.contains(id)) throw VocabularyError("trace '" + name + "' uses unknown token id " + std::to_string(id.value));
    }
    if (!(p_correct >= 0.0 && p_correct <= 1.0)) throw ConfigError("p_correct must lie in [0, 1]");
    if (!(pad_decay > 0.0 && pad_decay <= 1.0)) throw ConfigError("pad_decay must lie in (0, 1]");
    if (locality_bonus < 0.0) throw ConfigError("locality_bonus must be >= 0");
    if (vocab.size() < 2) throw ConfigError("trace vocabulary must reserve pad and eos");
}

Trace Trace::with_instances(std::size_t n) const {
    if (n < 1 || n > targets.size())
        throw ConfigError("trace '" + name + "' has " + std::to_string(targets.size()) + " targets, asked for " +
                          std::to_string(n));
    Trace out = *this;
    out.targets.resize(n);
    return out;
}

std::vector<std::string> Trace::target_texts() const {
    std::vector<std::string> out;
    for (const auto& t : targets) {
        std::string s;
        for (TokenId id : t)
            if (id != kPad && id != kEos) s += vocab.text(id);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
    static constexpr std::array<std::string_view, 24> kOps = {"**=", "//=", "==", "!=", "<=", ">=", "**", "//",
                                                              "+=",  "-=",  "*=", "/=", "->", "&&", "||", "<<",
                                                              ">>",  "++",  "--", "::", "%=", "&=", "|=", "^="};
    auto ident = [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\n') {
            out.emplace_back("\n");
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
        if (j == text.size() || text[j] == '\n') {
            out.emplace_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        std::size_t k = j;
        const unsigned char c = static_cast<unsigned char>(text[k]);
        if (c == '"' || c == '\'') {
            ++k;
            while (k < text.size() && text[k] != c && text[k] != '\n') k += text[k] == '\\' ? 2 : 1;
            k = std::min(text.size(), k + 1);
        } else if (std::isdigit(c)) {
            while (k < text.size() && (ident(static_cast<unsigned char>(text[k])) ||
                                       (text[k] == '.' && k + 1 < text.size() &&
                                        std::isdigit(static_cast<unsigned char>(text[k + 1])))))
                ++k;
        } else if (ident(c)) {
            while (k < text.size() && ident(static_cast<unsigned char>(text[k]))) ++k;
        } else {
            std::size_t len = 1;
            for (std::string_view op : kOps)
                if (text.substr(k, op.size()) == op) {
                    len = op.size();
                    break;
                }
            k += len;
        }
        out.emplace_back(text.substr(i, k - i));
        i = k;
    }
    return out;
}

namespace {

Trace blank_trace(const TraceOptions& options) {
    Trace trace;
    trace.name = options.name;
    trace.language_id = options.language_id;
    trace.confidence_model = options.confidence_model;
    trace.p_correct = options.p_correct;
    trace.seed = options.seed;
    trace.locality_bonus = options.locality_bonus;
    trace.pad_decay = options.pad_decay;
    return trace;
}

}  // namespace

Trace make_trace(const std::vector<std::string>& targets, const TraceOptions& options) {
    Trace trace = blank_trace(options);
    trace.vocab.add("");  // pad
    trace.vocab.add("");  // eos
    std::unordered_map<std::string, TokenId> ids;
    for (const std::string& text : targets) {
        TokenSequence seq;
        for (std::string& piece : tokenize_words(text)) {
            auto it = ids.find(piece);
            if (it == ids.end()) it = ids.emplace(piece, trace.vocab.add(piece)).first;
            seq.push_back(it->second);
        }
        if (seq.size() > options.length)
            throw ConfigError("target of trace '" + options.name + "' needs " + std::to_string(seq.size()) +
                              " tokens, more than L=" + std::to_string(options.length));
        seq.resize(options.length, Trace::kPad);
        trace.targets.push_back(std::move(seq));
    }
    trace.validate();
    return trace;
}

namespace {

std::size_t line_of_offset(std::string_view doc, std::size_t byte) {
    return 1 + static_cast<std::size_t>(std::count(doc.begin(), doc.begin() + std::min(byte, doc.size()), '\n'));
}

std::size_t line_of_key(std::string_view doc, const std::string& key) {
    const std::size_t at = doc.find("\"" + key + "\"");
    return at == std::string_view::npos ? 1 : line_of_offset(doc, at);
}

}  // namespace

Trace parse_trace(std::string_view document, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed trace: ") + e.what(), line_of_offset(document, e.byte > 0 ? e.byte - 1 : 0));
    }
    if (!doc.is_object()) throw ParseError("trace must be a JSON object", 1);
    auto field = [&](const std::string& key) -> const json& {
        if (!doc.contains(key)) throw ParseError("trace is missing field '" + key + "'", 1);
        return doc.at(key);
    };
    try {
        TraceOptions opt;
        opt.name = doc.value("name", std::string("trace"));
        opt.language_id = doc.value("language_id", std::string("mini"));
        opt.length = field("length").get<std::size_t>();
        opt.confidence_model = confidence_model_from_string(doc.value("confidence_model", std::string("seeded-uniform")));
        opt.p_correct = doc.value("p_correct", 1.0);
        opt.seed = doc.value("seed", std::uint64_t{0});
        opt.locality_bonus = doc.value("locality_bonus", 0.5);
        opt.pad_decay = doc.value("pad_decay", 1.0);
        const auto targets = field("targets").get<std::vector<std::string>>();

        Trace trace;
        if (doc.contains("vocabulary")) {
            // Explicit vocabulary: ids are fixed by the document.
            const auto texts = doc.at("vocabulary").get<std::vector<std::string>>();
            trace = blank_trace(opt);
            trace.vocab = Vocabulary(texts);
            std::unordered_map<std::string, TokenId> ids;
            for (std::size_t i = texts.size(); i-- > 2;) ids[texts[i]] = TokenId(static_cast<std::uint32_t>(i));
            for (const std::string& text : targets) {
                TokenSequence seq;
                for (const std::string& piece : tokenize_words(text)) {
                    auto it = ids.find(piece);
                    if (it == ids.end())
                        throw ParseError("target piece '" + piece + "' missing from vocabulary", line_of_key(document, "targets"));
                    seq.push_back(it->second);
                }
                if (seq.size() > opt.length) throw ParseError("target longer than length", line_of_key(document, "targets"));
                seq.resize(opt.length, Trace::kPad);
                trace.targets.push_back(std::move(seq));
            }
        } else {
            trace = make_trace(targets, opt);
        }
        if (doc.contains("replay")) {
            const std::filesystem::path p = base_dir / doc.at("replay").get<std::string>();
            std::ifstream in(p);
            if (!in) throw ParseError("cannot open replay file " + p.string(), line_of_key(document, "replay"));
            trace.replay = parse_replay(in);
        }
        trace.validate();
        return trace;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed trace: ") + e.what(), 1);
    } catch (const ConfigError& e) {
        throw ParseError(e.what(), 1);
    }
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        Trace t = parse_trace(buf.str(), path.parent_path());
        if (t.name.empty() || t.name == "trace") t.name = path.stem().string();
        return t;
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

std::string trace_to_json(const Trace& trace) {
    nlohmann::ordered_json doc;
    doc["name"] = trace.name;
    doc["language_id"] = trace.language_id;
    doc["length"] = trace.length();
    doc["confidence_model"] = to_string(trace.confidence_model);
    doc["p_correct"] = trace.p_correct;
    doc["seed"] = trace.seed;
    doc["locality_bonus"] = trace.locality_bonus;
    doc["pad_decay"] = trace.pad_decay;
    doc["targets"] = trace.target_texts();
    doc["vocabulary"] = trace.vocab.texts();
    return doc.dump(2);
}

std::vector<ReplayRecord> parse_replay(std::istream& in) {
    std::vector<ReplayRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            ReplayRecord r;
            r.step = j.at("step").get<int>();
            r.instance = j.at("instance").get<std::size_t>();
            r.position = j.at("position").get<std::size_t>();
            r.candidate = TokenId(j.at("candidate").get<std::uint32_t>());
            r.confidence = j.at("confidence").get<double>();
            if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) throw BackendError("confidence outside [0, 1]");
            out.push_back(r);
        } catch (const json::exception& e) {
            throw BackendError("malformed replay record at line " + std::to_string(lineno) + ": " + e.what());
        } catch (const BackendError& e) {
            throw BackendError("malformed replay record at line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_replay(std::ostream& out, const std::vector<ReplayRecord>& records) {
    for (const ReplayRecord& r : records) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["instance"] = r.instance;
        j["position"] = r.position;
        j["candidate"] = r.candidate.value;
        j["confidence"] = r.confidence;
        out << j.dump() << '\n';
    }
}

SimBackend::SimBackend(Trace trace) : trace_(std::move(trace)) {
    trace_.validate();
    for (const ReplayRecord& r : trace_.replay) replay_index_[{r.step, r.instance, r.position}] = &r;
    for (const TokenSequence& t : trace_.targets) {
        // Boundary = first position of the trailing pad run.
        std::size_t b = t.size();
        while (b > 0 && t[b - 1] == Trace::kPad) --b;
        pad_boundary_.push_back(b);
    }
}

BackendInfo SimBackend::info() const {
    BackendInfo info;
    info.vocab_size = trace_.vocab.size();
    info.pad_id = Trace::kPad;
    info.eos_id = Trace::kEos;
    info.language_id = trace_.language_id;
    return info;
}

double SimBackend::base_confidence(std::size_t instance, std::size_t position, std::uint64_t seed) const {
    const std::size_t boundary = pad_boundary_.at(instance);
    if (trace_.pad_decay < 1.0 && position >= boundary) {
        const double head = hashed_unit(seed, instance, boundary, 0, 1);
        return head * std::pow(trace_.pad_decay, static_cast<double>(position - boundary));
    }
    return hashed_unit(seed, instance, position, 0, 1);
}

std::vector<Proposal> SimBackend::propose(const BatchState& batch) { return propose_at(batch, batch.step, trace_.seed); }

std::vector<Proposal> SimBackend::propose_at(const BatchState& batch, int step, std::uint64_t seed) const {
    const std::size_t L = trace_.length();
    if (batch.length() != L)
        throw BackendError("trace length " + std::to_string(L) + " does not match batch length " +
                           std::to_string(batch.length()));
    if (batch.size() > trace_.targets.size())
        throw BackendError("trace has fewer targets than batch instances");

    std::vector<Proposal> out(batch.size());
    const std::size_t specials = 2;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const InstanceState& inst = batch.instances[i];
        Proposal& p = out[i];
        p.candidates.resize(L);
        p.confidences.assign(L, 0.0);
        for (std::size_t pos = 0; pos < L; ++pos) {
            if (inst.slots[pos].is_committed()) {
                p.candidates[pos] = inst.slots[pos].token();
                continue;
            }
            if (trace_.confidence_model == ConfidenceModel::FileReplay) {
                const auto it = replay_index_.find({step, i, pos});
                if (it == replay_index_.end())
                    throw BackendError("replay exhausted at step " + std::to_string(step) + " instance " +
                                       std::to_string(i) + " position " + std::to_string(pos));
                p.candidates[pos] = it->second->candidate;
                p.confidences[pos] = it->second->confidence;
                continue;
            }
            TokenId candidate = trace_.targets[i][pos];
            if (trace_.p_correct < 1.0 && hashed_unit(seed, i, pos, static_cast<std::uint64_t>(step), 2) >= trace_.p_correct &&
                trace_.vocab.size() > specials) {
                const double pick = hashed_unit(seed, i, pos, static_cast<std::uint64_t>(step), 3);
                candidate = TokenId(static_cast<std::uint32_t>(
                    specials + static_cast<std::size_t>(pick * static_cast<double>(trace_.vocab.size() - specials))));
            }
            p.candidates[pos] = candidate;
            double conf = base_confidence(i, pos, seed);
            if (trace_.confidence_model == ConfidenceModel::LocalityBiased) {
                int adjacent = 0;
                if (pos > 0 && inst.slots[pos - 1].is_committed()) ++adjacent;
                if (pos + 1 < L && inst.slots[pos + 1].is_committed()) ++adjacent;
                conf = std::min(1.0, conf + trace_.locality_bonus * adjacent / 2.0);
            }
            p.confidences[pos] = conf;
        }
    }
    return out;
}

DetokenizedText SimBackend::detokenize(std::span<const TokenId> tokens) { return difftester::detokenize(tokens, trace_.vocab); }

}  // namespace difftester
