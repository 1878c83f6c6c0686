#pragma once

#include "lesion/bayes_seg.hpp"
#include "lesion/svm.hpp"
#include "lesion/threshold_select.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace lesion::io {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace kind {
inline constexpr const char* tissue = "tissue_color_model";
inline constexpr const char* threshold = "threshold_svr";
inline constexpr const char* diagnosis = "diagnosis_svm";
}  // namespace kind

struct ModelContainer {
    int format_version = kFormatVersion;
    std::string kind;
    std::string created;
    Json config_echo = Json::object();
    Json payload = Json::object();
};

/// ISO-8601 UTC. Honors SOURCE_DATE_EPOCH so reruns can be byte-identical.
std::string timestamp_now();

std::string dump(const ModelContainer& c);
/// Checks format_version and, when non-empty, the kind, before touching the
/// payload. Throws DataError on any mismatch or malformed document.
ModelContainer parse(const std::string& text, const std::string& expected_kind);

void save(const std::filesystem::path& path, const ModelContainer& c);
ModelContainer load(const std::filesystem::path& path, const std::string& expected_kind);

Json to_json(const Gmm& g);
Gmm gmm_from_json(const Json& j);

Json to_json(const TissueColorModel& m);
TissueColorModel tissue_from_json(const Json& j);

Json to_json(const ThresholdModel& m);
ThresholdModel threshold_from_json(const Json& j);

Json to_json(const SvcMulticlass& m);
SvcMulticlass multiclass_from_json(const Json& j);

}  // namespace lesion::io
