#include "keyetm/manifest.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "json.hpp"
#include "keyetm/digest.hpp"
#include "keyetm/errors.hpp"

namespace keyetm {

std::string hex_digest(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file for digest: " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64({buf, static_cast<size_t>(in.gcount())}, h);
    return h;
}

std::string now_utc_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("stages") || !j["stages"].is_object())
        throw InputError(path + ": expected {\"stages\": {...}}");
    RunManifest manifest;
    try {
        for (const auto& [stage, rec] : j["stages"].items()) {
            StageRecord record;
            record.config = rec.at("config").dump();
            for (const auto& [name, digest] : rec.at("inputs").items())
                record.inputs[name] = digest.get<std::string>();
            for (const auto& [name, digest] : rec.at("outputs").items())
                record.outputs[name] = digest.get<std::string>();
            record.rng_seed = rec.at("rng_seed").get<uint64_t>();
            record.tool_version = rec.at("tool_version").get<std::string>();
            record.completed_at = rec.at("completed_at").get<std::string>();
            manifest.stages[stage] = std::move(record);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    return manifest;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [stage, record] : manifest.stages) {
        nlohmann::json rec;
        try {
            rec["config"] = nlohmann::json::parse(record.config);
        } catch (const nlohmann::json::exception& e) {
            throw InputError("stage '" + stage + "' config snapshot is not JSON: " + e.what());
        }
        rec["inputs"] = record.inputs;
        rec["outputs"] = record.outputs;
        rec["rng_seed"] = record.rng_seed;
        rec["tool_version"] = record.tool_version;
        rec["completed_at"] = record.completed_at;
        stages[stage] = std::move(rec);
    }
    const nlohmann::json j{{"stages", stages}};

    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream outf(tmp, std::ios::trunc);
        if (!outf) throw InputError("cannot write manifest: " + tmp);
        outf << j.dump(2) << "\n";
        if (!outf) throw InputError("failed writing manifest: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw InputError("cannot replace manifest " + path + ": " + ec.message());
    }
}

void record_stage(RunManifest& manifest, const std::string& stage, StageRecord record,
                  const std::string& manifest_path) {
    record.tool_version = kToolVersion;
    record.completed_at = now_utc_iso8601();
    manifest.stages[stage] = std::move(record);
    save_manifest(manifest, manifest_path);
}

void require_fresh(const RunManifest& manifest, const std::string& upstream,
                   const std::map<std::string, std::string>& files) {
    const auto it = manifest.stages.find(upstream);
    if (it == manifest.stages.end())
        throw StaleStageError("stage '" + upstream + "' has not been run in this output dir");
    for (const auto& [name, path] : files) {
        const auto rec = it->second.outputs.find(name);
        if (rec == it->second.outputs.end())
            throw StaleStageError("stage '" + upstream + "' did not record output '" + name +
                                  "'; rerun it");
        uint64_t actual;
        try {
            actual = file_digest(path);
        } catch (const InputError&) {
            throw StaleStageError("output '" + name + "' of stage '" + upstream +
                                  "' is missing: " + path);
        }
        if (hex_digest(actual) != rec->second)
            throw StaleStageError("output '" + name + "' of stage '" + upstream +
                                  "' changed on disk (" + path + "); rerun " + upstream);
    }
}

StageLock::StageLock(const std::string& dir, const std::string& stage) {
    path_ = (std::filesystem::path(dir) / ".lock").string();
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST) {
            std::string holder;
            std::ifstream in(path_);
            std::getline(in, holder);
            throw InputError("output dir is locked by another stage (" + holder +
                             "); remove " + path_ + " if that run is gone");
        }
        throw InputError("cannot create lock file " + path_ + ": " + std::strerror(errno));
    }
    const std::string note = stage + " pid " + std::to_string(::getpid());
    [[maybe_unused]] const ssize_t n = ::write(fd, note.c_str(), note.size());
    ::close(fd);
}

StageLock::~StageLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

}  // namespace keyetm
