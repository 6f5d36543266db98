#include "toggl/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "toggl/error.hpp"

namespace toggl {

using nlohmann::json;

namespace {

json parse_line(const std::string &line, const std::string &path, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": not a JSON object");
    return j;
}

void reject_unknown_keys(const json &j, std::initializer_list<const char *> known,
                         const std::string &where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char *k : known)
            if (it.key() == k)
                ok = true;
        if (!ok)
            throw DataError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename F>
void for_each_line(const std::string &path, F &&fn) {
    std::ifstream in(path);
    if (!in)
        throw DataError("manifest not found: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        fn(parse_line(line, path, lineno), lineno);
    }
}

std::string where(const std::string &path, std::size_t lineno) {
    return path + ":" + std::to_string(lineno);
}

} // namespace

std::vector<SourceUtterance> read_source_manifest(const std::string &path) {
    std::vector<SourceUtterance> records;
    for_each_line(path, [&](const json &j, std::size_t lineno) {
        reject_unknown_keys(j, {"id", "speaker", "wav_path", "tokens"},
                            where(path, lineno));
        SourceUtterance rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.speaker = j.at("speaker").get<std::string>();
            rec.wav_path = j.value("wav_path", std::string{});
            for (const auto &t : j.at("tokens")) {
                reject_unknown_keys(t, {"text", "start"}, where(path, lineno));
                rec.tokens.push_back({t.at("text").get<std::string>(),
                                      t.at("start").get<double>()});
            }
        } catch (const json::exception &e) {
            throw DataError(where(path, lineno) + ": " + e.what());
        }
        for (const auto &token : rec.tokens)
            validate_token(token);
        records.push_back(std::move(rec));
    });
    return records;
}

void write_mixture_manifest(const std::string &path,
                            std::span<const MixtureManifestEntry> entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot write manifest: " + path);
    for (const auto &e : entries) {
        json j;
        j["id"] = e.id;
        j["wav_path"] = e.wav_path;
        j["sources"] = e.sources;
        j["offsets_s"] = e.offsets_s;
        j["gains_db"] = e.gains_db;
        j["overlap_fraction"] = e.overlap_fraction;
        j["clipped_samples"] = e.clipped_samples;
        j["toggl_target"] = e.toggl_target;
        out << j.dump() << '\n';
    }
}

std::vector<MixtureManifestEntry> read_mixture_manifest(const std::string &path) {
    std::vector<MixtureManifestEntry> entries;
    for_each_line(path, [&](const json &j, std::size_t lineno) {
        reject_unknown_keys(j,
                            {"id", "wav_path", "sources", "offsets_s", "gains_db",
                             "overlap_fraction", "clipped_samples", "toggl_target"},
                            where(path, lineno));
        MixtureManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.wav_path = j.at("wav_path").get<std::string>();
            e.sources = j.at("sources").get<std::vector<std::string>>();
            e.offsets_s = j.at("offsets_s").get<std::vector<double>>();
            e.gains_db = j.at("gains_db").get<std::vector<double>>();
            e.overlap_fraction = j.at("overlap_fraction").get<double>();
            e.clipped_samples = j.value("clipped_samples", std::size_t{0});
            e.toggl_target = j.at("toggl_target").get<std::string>();
        } catch (const json::exception &ex) {
            throw DataError(where(path, lineno) + ": " + ex.what());
        }
        entries.push_back(std::move(e));
    });
    return entries;
}

std::vector<ScoringRecord> read_scoring_manifest(const std::string &path,
                                                 DecodeMode mode) {
    std::vector<ScoringRecord> records;
    for_each_line(path, [&](const json &j, std::size_t lineno) {
        // speaker_order appears in serialize output and is not needed here
        reject_unknown_keys(j,
                            {"id", "streams", "toggl", "overlap_fraction",
                             "speaker_order"},
                            where(path, lineno));
        ScoringRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            if (j.contains("overlap_fraction"))
                rec.overlap_fraction = j.at("overlap_fraction").get<double>();
            if (j.contains("streams") && j.contains("toggl"))
                throw DataError(where(path, lineno) +
                                ": record has both 'streams' and 'toggl'");
            if (j.contains("streams")) {
                const auto &s = j.at("streams");
                if (s.is_array()) {
                    int idx = 0;
                    for (const auto &stream : s)
                        rec.streams.streams[idx++] =
                            stream.get<std::vector<std::string>>();
                } else if (s.is_object()) {
                    for (auto it = s.begin(); it != s.end(); ++it) {
                        int idx = 0;
                        try {
                            idx = std::stoi(it.key());
                        } catch (const std::exception &) {
                            throw DataError(where(path, lineno) +
                                            ": stream index '" + it.key() +
                                            "' is not an integer");
                        }
                        if (idx < 0)
                            throw DataError(where(path, lineno) +
                                            ": negative stream index");
                        rec.streams.streams[idx] =
                            it.value().get<std::vector<std::string>>();
                    }
                } else {
                    throw DataError(where(path, lineno) +
                                    ": 'streams' must be array or object");
                }
            } else if (j.contains("toggl")) {
                const auto stream = stream_from_text(j.at("toggl").get<std::string>());
                rec.streams.streams = deserialize(stream, mode);
            } else {
                throw DataError(where(path, lineno) +
                                ": record needs 'streams' or 'toggl'");
            }
        } catch (const json::exception &e) {
            throw DataError(where(path, lineno) + ": " + e.what());
        }
        records.push_back(std::move(rec));
    });
    return records;
}

} // namespace toggl
