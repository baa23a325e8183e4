#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace keyetm {

inline constexpr const char* kToolVersion = "0.1.0";

// one completed pipeline stage; timestamps are informational and never
// participate in freshness decisions
struct StageRecord {
    std::string config;  // JSON snapshot of the settings the stage ran with
    std::map<std::string, std::string> inputs;   // logical name -> hex digest
    std::map<std::string, std::string> outputs;  // logical name -> hex digest
    uint64_t rng_seed = 0;
    std::string tool_version;
    std::string completed_at;  // ISO-8601 UTC
};

struct RunManifest {
    std::map<std::string, StageRecord> stages;

    bool has(const std::string& stage) const { return stages.count(stage) > 0; }
};

std::string now_utc_iso8601();

// missing file -> empty manifest; malformed file -> InputError
RunManifest load_manifest(const std::string& path);

// atomic: writes a sibling temp file, then renames over the target
void save_manifest(const RunManifest& manifest, const std::string& path);

// fills digests/timestamp/version, replaces the stage entry, persists
void record_stage(RunManifest& manifest, const std::string& stage, StageRecord record,
                  const std::string& manifest_path);

// verify the named upstream stage is recorded and that each file still matches
// its recorded output digest; throws StaleStageError otherwise
void require_fresh(const RunManifest& manifest, const std::string& upstream,
                   const std::map<std::string, std::string>& files);

// exclusive per-directory lock so only one stage touches an output dir at a
// time; a live lock raises InputError naming the holder
class StageLock {
public:
    StageLock(const std::string& dir, const std::string& stage);
    ~StageLock();
    StageLock(const StageLock&) = delete;
    StageLock& operator=(const StageLock&) = delete;

private:
    std::string path_;
};

}  // namespace keyetm
