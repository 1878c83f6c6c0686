#include "lesion/dataset.hpp"

#include "lesion/csv.hpp"
#include "lesion/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace lesion {

namespace {

constexpr std::string_view kMaskSuffix = "_segmentation";

bool is_image_extension(std::string ext) {
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return is;
}

}  // namespace

std::string mask_filename(const std::string& id) { return id + std::string(kMaskSuffix) + ".png"; }

bool DatasetIndex::has_masks() const {
    return !entries.empty() &&
           std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.mask.has_value(); });
}

bool DatasetIndex::has_labels() const {
    return !entries.empty() &&
           std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.label.has_value(); });
}

void DatasetIndex::require_masks() const {
    for (const auto& e : entries) {
        if (!e.mask) throw DataError("no truth mask for " + e.id);
    }
}

void DatasetIndex::require_labels() const {
    for (const auto& e : entries) {
        if (!e.label) throw DataError("no diagnosis label for " + e.id);
    }
}

std::vector<std::string> DatasetIndex::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

DatasetIndex DatasetIndex::subset(const std::vector<std::size_t>& indices) const {
    DatasetIndex out;
    out.entries.reserve(indices.size());
    for (std::size_t i : indices) out.entries.push_back(entries.at(i));
    return out;
}

DatasetIndex ingest(const fs::path& images_dir, const std::optional<fs::path>& masks_dir,
                    const std::optional<fs::path>& labels_csv) {
    if (!fs::is_directory(images_dir)) throw DataError("image directory not found: " + images_dir.string());
    if (masks_dir && !fs::is_directory(*masks_dir)) {
        throw DataError("mask directory not found: " + masks_dir->string());
    }

    DatasetIndex index;
    std::set<std::string> seen;
    for (const auto& de : fs::directory_iterator(images_dir)) {
        if (!de.is_regular_file() || !is_image_extension(de.path().extension().string())) continue;
        const std::string id = de.path().stem().string();
        if (ends_with(id, kMaskSuffix)) continue;
        if (!seen.insert(id).second) throw DataError("duplicate image id " + id);
        index.entries.push_back({id, de.path(), std::nullopt, std::nullopt});
    }
    std::sort(index.entries.begin(), index.entries.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });

    if (masks_dir) {
        for (auto& e : index.entries) {
            const fs::path m = *masks_dir / mask_filename(e.id);
            if (!fs::is_regular_file(m)) throw DataError("missing mask for " + e.id + " (" + m.string() + ")");
            e.mask = m;
        }
    }
    if (labels_csv) {
        const auto labels = read_labels_csv(*labels_csv);
        for (auto& e : index.entries) {
            if (auto it = labels.find(e.id); it != labels.end()) e.label = it->second;
        }
    }
    return index;
}

std::map<std::string, Diagnosis> read_labels_csv(const fs::path& path) {
    std::ifstream is = open_input(path);
    const auto rows = csv::read_rows(is);
    if (rows.empty()) throw DataError("empty label file " + path.string());
    std::vector<std::string> expected{"image"};
    for (const auto& n : diagnosis_names()) expected.push_back(n);
    if (rows.front() != expected) throw DataError("label header must be image,MEL,NV,BCC,AKIEC,BKL,DF,VASC");

    std::map<std::string, Diagnosis> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != expected.size()) throw DataError("label row " + std::to_string(r) + " has wrong width");
        int hot = -1;
        for (int k = 0; k < kNumDiagnoses; ++k) {
            const double v = csv::parse_real(row[k + 1], "label value");
            if (v == 1.0) {
                if (hot >= 0) throw DataError("label row for " + row[0] + " is not one-hot");
                hot = k;
            } else if (v != 0.0) {
                throw DataError("label row for " + row[0] + " is not one-hot");
            }
        }
        if (hot < 0) throw DataError("label row for " + row[0] + " is not one-hot");
        if (!out.emplace(row[0], static_cast<Diagnosis>(hot)).second) {
            throw DataError("duplicate label row for " + row[0]);
        }
    }
    return out;
}

void write_labels_csv(const fs::path& path, const std::vector<std::pair<std::string, Diagnosis>>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os << "image";
    for (const auto& n : diagnosis_names()) os << ',' << n;
    os << '\n';
    for (const auto& [id, d] : rows) {
        os << id;
        for (int k = 0; k < kNumDiagnoses; ++k) os << ',' << (static_cast<int>(d) == k ? "1.0" : "0.0");
        os << '\n';
    }
}

void write_features_csv(std::ostream& os, const std::vector<std::string>& ids,
                        const std::vector<FeatureVector200>& rows) {
    if (ids.size() != rows.size()) throw std::invalid_argument("write_features_csv: size mismatch");
    os << "image";
    for (int i = 0; i < kFeatureCount; ++i) os << ',' << feature_column_name(i);
    os << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        os << ids[r];
        for (double v : rows[r]) os << ',' << csv::format_real(v);
        os << '\n';
    }
}

FeatureTable read_features_csv(const fs::path& path) {
    std::ifstream is = open_input(path);
    const auto rows = csv::read_rows(is);
    if (rows.empty() || rows.front().empty() || rows.front()[0] != "image") {
        throw DataError("feature file " + path.string() + " lacks an image header");
    }
    const std::size_t width = rows.front().size();
    FeatureTable t;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != width) throw DataError("feature row " + std::to_string(r) + " has wrong width");
        t.ids.push_back(rows[r][0]);
        std::vector<double> v;
        v.reserve(width - 1);
        for (std::size_t c = 1; c < width; ++c) v.push_back(csv::parse_real(rows[r][c], "feature value"));
        t.rows.push_back(std::move(v));
    }
    return t;
}

}  // namespace lesion
