#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "phenom/image.hpp"
#include "phenom/relationships.hpp"
#include "phenom/table.hpp"

// On-disk formats. Byte layouts are documented in docs/FORMATS.md; all
// multi-byte integers and floats are little-endian.

namespace phenom::io {

namespace fs = std::filesystem;

// --- well container: magic + u32 header length + JSON header + f32 payload
void save_well(const WellImage& image, const fs::path& path);
WellImage load_well(const fs::path& path);

// --- dataset directory: wells/*.well + manifest.csv (+ relationships.csv)
struct ManifestRow {
  std::string well_id, plate_id, experiment_id, perturbation_id, file_path;
};
void save_dataset(const std::vector<WellImage>& wells, const RelationshipDB& db,
                  const fs::path& dir);
std::vector<ManifestRow> load_manifest(const fs::path& dataset_dir);
WellImage load_well_by_row(const fs::path& dataset_dir, const ManifestRow& row);

// --- relationship pair list CSV
void save_relationships(const RelationshipDB& db, const fs::path& path);
RelationshipDB load_relationships(const fs::path& path);

// --- embedding table triplet: <stem>.csv / <stem>.f32 / <stem>.json
void save_table(const EmbeddingTable& table, const fs::path& stem);
EmbeddingTable load_table(const fs::path& stem);

// --- loss curve CSV: step,loss,lr,val_loss
struct LossPoint {
  long long step;
  double loss;
  double lr;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};
void save_loss_curve(const std::vector<LossPoint>& curve, const fs::path& path);
std::vector<LossPoint> load_loss_curve(const fs::path& path);

// --- tiny CSV helpers shared by the loaders (no quoting: ids and numbers only)
std::vector<std::string> split_csv_line(const std::string& line);
std::vector<std::vector<std::string>> read_csv(const fs::path& path, bool skip_header);

}  // namespace phenom::io
