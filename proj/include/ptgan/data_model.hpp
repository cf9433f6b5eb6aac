#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ptgan {

namespace fs = std::filesystem;

enum class SplitRole { train, query, gallery, unassigned };
enum class FilenameConvention { market_like, generic };

std::string to_string(SplitRole role);
SplitRole split_role_from_string(const std::string& s);
std::string to_string(FilenameConvention c);
FilenameConvention convention_from_string(const std::string& s);

struct PersonRecord {
  std::string image_path;
  std::string person_id;
  int camera_id = 1;
  SplitRole split_role = SplitRole::unassigned;
  std::optional<std::string> mask_path;

  bool operator==(const PersonRecord&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::string domain_tag;
  std::vector<PersonRecord> records;

  bool operator==(const DatasetManifest&) const = default;

  /// Throws on empty person ids, camera ids < 1 or duplicate image paths.
  void validate() const;
  /// Sorted unique identity labels.
  std::vector<std::string> identities() const;
  /// Query records whose identity has no gallery record at all.
  std::vector<size_t> unanswerable_queries() const;
  size_t count(SplitRole role) const;
};

struct ParsedFilename {
  std::string person_id;
  int camera_id = 0;
};

/// market_like: `<pid>_c<cam>s<seq>_<frame>_<idx>.<ext>`
/// generic:     `<pid>_<cam>_<anything>.<ext>`
ParsedFilename parse_reid_filename(std::string_view filename, FilenameConvention convention);

/// One record per image file under `root` (recursive, excluding a `masks`
/// directory), sorted by path. Masks are paired from `<root>/masks/<stem>.png`
/// or a `masks` directory next to the image's own directory.
DatasetManifest ingest_directory(const fs::path& root, FilenameConvention convention, const std::string& domain_tag);

/// Parses "1:3" (train:test) or a plain fraction such as "0.25" into the
/// train fraction.
double parse_ratio(const std::string& text);

/// Number of train identities for `n` identities at `train_ratio`:
/// round(train_ratio * n), ties toward train.
size_t train_identity_count(size_t n, double train_ratio);

/// Identity-level train/test partition plus per-identity-per-camera query
/// selection inside the test part. Deterministic in (manifest, seed).
DatasetManifest apply_split(const DatasetManifest& manifest, double train_ratio, double query_fraction,
                            std::uint64_t seed);

DatasetManifest merge_manifests(std::span<const DatasetManifest> manifests, std::string name = {});

DatasetManifest filter_camera(const DatasetManifest& manifest, int camera_id);
DatasetManifest filter_role(const DatasetManifest& manifest, SplitRole role);
/// Copy with every person_id blanked out, for label-free consumers.
DatasetManifest redact_identities(const DatasetManifest& manifest);

/// Line-delimited JSON: a header object followed by one record per line.
/// Paths under the manifest's directory are stored relative to it.
void save_manifest(const DatasetManifest& manifest, const fs::path& path);
DatasetManifest load_manifest(const fs::path& path);

}  // namespace ptgan
