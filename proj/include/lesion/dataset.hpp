#pragma once

#include "lesion/evaluation.hpp"
#include "lesion/features200.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lesion {

struct DatasetEntry {
    std::string id;
    std::filesystem::path image;
    std::optional<std::filesystem::path> mask;
    std::optional<Diagnosis> label;
};

/// Entries sorted by id; ids are unique.
struct DatasetIndex {
    std::vector<DatasetEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    bool has_masks() const;
    bool has_labels() const;
    /// Throws DataError naming the first id without a mask / label.
    void require_masks() const;
    void require_labels() const;
    std::vector<std::string> ids() const;
    DatasetIndex subset(const std::vector<std::size_t>& indices) const;
};

/// Scans images_dir for <id>.jpg|.jpeg|.png (ignoring *_segmentation files).
/// With masks_dir, every image must have <id>_segmentation.png. With
/// labels_csv, rows are joined by id; images without a row stay unlabeled.
DatasetIndex ingest(const std::filesystem::path& images_dir,
                    const std::optional<std::filesystem::path>& masks_dir = std::nullopt,
                    const std::optional<std::filesystem::path>& labels_csv = std::nullopt);

/// Header `image,MEL,NV,BCC,AKIEC,BKL,DF,VASC`; every row one-hot.
std::map<std::string, Diagnosis> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, Diagnosis>>& rows);

struct FeatureTable {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
};

/// Header `image,f000..f199`, values in shortest round-trip form.
void write_features_csv(std::ostream& os, const std::vector<std::string>& ids,
                        const std::vector<FeatureVector200>& rows);
/// Rows must all have the header's width; the width itself is not fixed so
/// that a mismatch is reported by the consumer.
FeatureTable read_features_csv(const std::filesystem::path& path);

std::string mask_filename(const std::string& id);

}  // namespace lesion
