#include "ptgan/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>

#include <json.hpp>

#include "ptgan/errors.hpp"
#include "ptgan/random.hpp"

namespace ptgan {

using nlohmann::json;

std::string to_string(SplitRole role) {
  switch (role) {
    case SplitRole::train: return "train";
    case SplitRole::query: return "query";
    case SplitRole::gallery: return "gallery";
    case SplitRole::unassigned: return "unassigned";
  }
  return "unassigned";
}

SplitRole split_role_from_string(const std::string& s) {
  if (s == "train") return SplitRole::train;
  if (s == "query") return SplitRole::query;
  if (s == "gallery") return SplitRole::gallery;
  if (s == "unassigned") return SplitRole::unassigned;
  throw CorruptManifest("unknown split_role '" + s + "'");
}

std::string to_string(FilenameConvention c) { return c == FilenameConvention::market_like ? "market_like" : "generic"; }

FilenameConvention convention_from_string(const std::string& s) {
  if (s == "market_like") return FilenameConvention::market_like;
  if (s == "generic") return FilenameConvention::generic;
  throw InvalidConfig("unknown filename convention '" + s + "'");
}

// ---------------------------------------------------------------------------

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.person_id.empty()) throw CorruptManifest("record " + r.image_path + " has an empty person_id");
    if (r.camera_id < 1) throw CorruptManifest("record " + r.image_path + " has camera_id < 1");
    if (!seen.insert(r.image_path).second) throw DuplicatePath(r.image_path);
  }
}

std::vector<std::string> DatasetManifest::identities() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.person_id);
  return {ids.begin(), ids.end()};
}

std::vector<size_t> DatasetManifest::unanswerable_queries() const {
  std::set<std::string> gallery_ids;
  for (const auto& r : records) {
    if (r.split_role == SplitRole::gallery) gallery_ids.insert(r.person_id);
  }
  std::vector<size_t> out;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].split_role == SplitRole::query && !gallery_ids.count(records[i].person_id)) out.push_back(i);
  }
  return out;
}

size_t DatasetManifest::count(SplitRole role) const {
  return static_cast<size_t>(
      std::count_if(records.begin(), records.end(), [&](const PersonRecord& r) { return r.split_role == role; }));
}

// ---------------------------------------------------------------------------

ParsedFilename parse_reid_filename(std::string_view filename, FilenameConvention convention) {
  static const std::regex market(R"(^(-?\d+)_c(\d+)s(\d+)_(\d+)_(\d+)\.([A-Za-z0-9]+)$)");
  static const std::regex generic(R"(^([^_]+)_(\d+)_(.*)\.([A-Za-z0-9]+)$)");
  const std::string name(filename);
  std::smatch m;
  const bool ok = std::regex_match(name, m, convention == FilenameConvention::market_like ? market : generic);
  if (!ok) throw MalformedFilename("'" + name + "' does not match the " + to_string(convention) + " convention");
  ParsedFilename out;
  out.person_id = m[1].str();
  out.camera_id = std::stoi(m[2].str());
  if (out.camera_id < 1) throw MalformedFilename("'" + name + "' has camera id < 1");
  return out;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::optional<std::string> find_mask(const fs::path& root, const fs::path& image) {
  const std::string stem = image.stem().string() + ".png";
  for (const fs::path& dir : {root / "masks", root.parent_path() / "masks", image.parent_path() / "masks"}) {
    const fs::path candidate = dir / stem;
    if (fs::is_regular_file(candidate)) return candidate.lexically_normal().string();
  }
  return std::nullopt;
}

}  // namespace

DatasetManifest ingest_directory(const fs::path& root_in, FilenameConvention convention, const std::string& domain_tag) {
  if (!fs::is_directory(root_in)) throw EmptyDataset("'" + root_in.string() + "' is not a directory");
  const fs::path root = fs::absolute(root_in).lexically_normal();
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory() && it->path().filename() == "masks") {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && is_image_file(it->path())) files.push_back(it->path().lexically_normal());
  }
  if (files.empty()) throw EmptyDataset("no image files under '" + root.string() + "'");
  std::sort(files.begin(), files.end());

  DatasetManifest manifest;
  manifest.name = root.filename().string();
  manifest.domain_tag = domain_tag;
  for (const auto& f : files) {
    ParsedFilename parsed;
    try {
      parsed = parse_reid_filename(f.filename().string(), convention);
    } catch (const MalformedFilename& e) {
      throw MalformedFilename(f.string() + ": " + e.what());
    }
    PersonRecord r;
    r.image_path = f.string();
    r.person_id = parsed.person_id;
    r.camera_id = parsed.camera_id;
    r.mask_path = find_mask(root, f);
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

// ---------------------------------------------------------------------------

double parse_ratio(const std::string& text) {
  const auto colon = text.find(':');
  double value = 0;
  try {
    if (colon != std::string::npos) {
      const double train = std::stod(text.substr(0, colon));
      const double test = std::stod(text.substr(colon + 1));
      value = train / (train + test);
    } else {
      value = std::stod(text);
    }
  } catch (const std::exception&) {
    throw InvalidConfig("cannot parse ratio '" + text + "'");
  }
  if (!(value > 0.0 && value < 1.0)) throw InvalidConfig("ratio '" + text + "' must lie strictly between 0 and 1");
  return value;
}

size_t train_identity_count(size_t n, double train_ratio) {
  // half-up rounding; the epsilon keeps exact halves such as 0.25 * 6 on the train side
  return static_cast<size_t>(std::floor(train_ratio * static_cast<double>(n) + 0.5 + 1e-9));
}

DatasetManifest apply_split(const DatasetManifest& manifest, double train_ratio, double query_fraction,
                            std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw InvalidConfig("train_ratio must lie in (0, 1)");
  if (!(query_fraction > 0.0 && query_fraction < 1.0)) throw InvalidConfig("query_fraction must lie in (0, 1)");
  std::vector<std::string> ids = manifest.identities();
  const size_t n_train = train_identity_count(ids.size(), train_ratio);
  if (n_train == 0 || n_train >= ids.size()) {
    throw TooFewIdentities(std::to_string(ids.size()) + " identities at ratio " + std::to_string(train_ratio) +
                           " leave an empty partition");
  }
  Rng rng(seed);
  rng.shuffle(ids);
  const std::set<std::string> train_ids(ids.begin(), ids.begin() + static_cast<long>(n_train));

  DatasetManifest out = manifest;
  std::map<std::pair<std::string, int>, std::vector<size_t>> test_groups;
  for (size_t i = 0; i < out.records.size(); ++i) {
    auto& r = out.records[i];
    if (train_ids.count(r.person_id)) {
      r.split_role = SplitRole::train;
    } else {
      r.split_role = SplitRole::gallery;
      test_groups[{r.person_id, r.camera_id}].push_back(i);
    }
  }
  for (auto& [key, indices] : test_groups) {
    const size_t m = indices.size();
    if (m < 2) continue;
    size_t q = static_cast<size_t>(std::floor(query_fraction * static_cast<double>(m) + 0.5));
    q = std::clamp<size_t>(q, 1, m - 1);
    rng.shuffle(indices);
    for (size_t j = 0; j < q; ++j) out.records[indices[j]].split_role = SplitRole::query;
  }
  return out;
}

DatasetManifest merge_manifests(std::span<const DatasetManifest> manifests, std::string name) {
  if (manifests.empty()) throw EmptyDataset("merge_manifests needs at least one manifest");
  if (manifests.size() == 1) {
    DatasetManifest out = manifests.front();
    if (!name.empty()) out.name = name;
    out.validate();
    return out;
  }
  DatasetManifest out;
  out.name = name;
  std::set<std::string> seen;
  for (const auto& m : manifests) {
    if (out.name.empty()) out.name = m.name;
    out.domain_tag += (out.domain_tag.empty() ? "" : "+") + m.domain_tag;
    for (const auto& r : m.records) {
      if (!seen.insert(r.image_path).second) throw DuplicatePath(r.image_path);
      out.records.push_back(r);
    }
  }
  if (!name.empty()) out.name = name;
  return out;
}

DatasetManifest filter_camera(const DatasetManifest& manifest, int camera_id) {
  DatasetManifest out;
  out.name = manifest.name + "_cam" + std::to_string(camera_id);
  out.domain_tag = manifest.domain_tag + "_cam" + std::to_string(camera_id);
  for (const auto& r : manifest.records) {
    if (r.camera_id == camera_id) out.records.push_back(r);
  }
  return out;
}

DatasetManifest filter_role(const DatasetManifest& manifest, SplitRole role) {
  DatasetManifest out;
  out.name = manifest.name + "_" + to_string(role);
  out.domain_tag = manifest.domain_tag;
  for (const auto& r : manifest.records) {
    if (r.split_role == role) out.records.push_back(r);
  }
  return out;
}

DatasetManifest redact_identities(const DatasetManifest& manifest) {
  DatasetManifest out = manifest;
  for (auto& r : out.records) r.person_id = "unlabeled";
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kManifestVersion = 1;

std::string store_path(const std::string& p, const fs::path& base) {
  const fs::path path(p);
  if (!path.is_absolute()) return p;
  const fs::path rel = path.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p;
  return rel.generic_string();
}

std::string resolve_path(const std::string& p, const fs::path& base) {
  const fs::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (base / path).lexically_normal().string();
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  std::ofstream out(path);
  if (!out) throw Error("IoError", "cannot write manifest " + path.string());
  json header = {{"format", "ptgan-manifest"},
                 {"version", kManifestVersion},
                 {"name", manifest.name},
                 {"domain_tag", manifest.domain_tag},
                 {"num_records", manifest.records.size()}};
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) {
    json j = {{"image_path", store_path(r.image_path, base)},
              {"person_id", r.person_id},
              {"camera_id", r.camera_id},
              {"split_role", to_string(r.split_role)},
              {"mask_path", r.mask_path ? json(store_path(*r.mask_path, base)) : json(nullptr)}};
    out << j.dump() << '\n';
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorruptManifest("cannot open manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  DatasetManifest manifest;
  std::string line;
  size_t line_no = 0;
  size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw CorruptManifest(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != "ptgan-manifest") throw CorruptManifest(path.string() + ": missing header");
        if (j.at("version").get<int>() != kManifestVersion) {
          throw CorruptManifest(path.string() + ": unsupported manifest version");
        }
        manifest.name = j.at("name").get<std::string>();
        manifest.domain_tag = j.at("domain_tag").get<std::string>();
        expected = j.value("num_records", size_t{0});
        have_header = true;
        continue;
      }
      PersonRecord r;
      r.image_path = resolve_path(j.at("image_path").get<std::string>(), base);
      r.person_id = j.at("person_id").get<std::string>();
      r.camera_id = j.at("camera_id").get<int>();
      r.split_role = split_role_from_string(j.value("split_role", "unassigned"));
      if (j.contains("mask_path") && !j["mask_path"].is_null()) {
        r.mask_path = resolve_path(j["mask_path"].get<std::string>(), base);
      }
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw CorruptManifest(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw CorruptManifest(path.string() + ": empty manifest file");
  if (expected != manifest.records.size()) {
    throw CorruptManifest(path.string() + ": header announces " + std::to_string(expected) + " records, found " +
                          std::to_string(manifest.records.size()));
  }
  manifest.validate();
  return manifest;
}

}  // namespace ptgan
