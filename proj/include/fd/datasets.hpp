#pragma once

#include "fd/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fd {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { train, query, gallery };
std::string to_string(Split split);

/// One image of a ReID split. `path` is relative to the dataset root; `label`
/// is the contiguous class index for training samples and -1 elsewhere.
struct SampleRecord {
  std::string path;
  int identity = 0;
  int camera = 0;
  bool junk = false;
  int label = -1;
};

struct ParsedName {
  int identity = 0;
  int camera = 0;
  int sequence = 0;
  int frame = 0;
  friend bool operator==(const ParsedName&, const ParsedName&) = default;
};

/// Filename convention and directory layout of one benchmark family.
class NamingScheme {
 public:
  virtual ~NamingScheme() = default;
  virtual std::string name() const = 0;
  virtual std::optional<ParsedName> parse(const std::string& filename) const = 0;
  virtual std::string format(const ParsedName& record, const std::string& extension) const = 0;
  virtual std::string directory(Split split) const;
};

std::unique_ptr<NamingScheme> make_naming_scheme(const std::string& name);

struct DatasetManifest {
  std::string name;
  std::string scheme = "market1501";
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> query;
  std::vector<SampleRecord> gallery;
  std::vector<std::string> rejects;
  std::string fingerprint;
  int num_classes = 0;
  /// Generator-specific per-sample annotations keyed by path.
  nlohmann::json annotations = nlohmann::json::object();

  const std::vector<SampleRecord>& split(Split s) const;
  std::vector<SampleRecord>& split(Split s);
  bool identities_disjoint() const;
};

/// Scans the three split directories under `root`. Unparsable names land in
/// `rejects`; an empty split throws.
DatasetManifest ingest(const std::filesystem::path& root, const NamingScheme& scheme);

/// Reindexes training identities to 0..K-1 in ascending identity order.
void assign_labels(DatasetManifest& manifest);

/// SHA-256 over the sorted (path, size, content hash) triples of all splits.
std::string dataset_fingerprint(const std::filesystem::path& root, const DatasetManifest& manifest);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest load_manifest(const std::filesystem::path& file);

inline constexpr const char* kManifestName = "manifest.json";

Image load_image(const std::filesystem::path& file);
void save_image(const Image& image, const std::filesystem::path& file);

/// All images of a split, decoded in manifest order.
std::vector<Image> load_split(const std::filesystem::path& root, const std::vector<SampleRecord>& records);

// --- synthetic generator -------------------------------------------------

using Rgb = std::array<float, 3>;

/// Defaults are the frozen desk-scale calibration: 16 training and 8 test
/// identities at 64x32 under three camera regimes.
struct SyntheticSpec {
  int n_identities = 24;
  int test_identities = 8;
  int images_per_identity = 18;
  Index height = 64;
  Index width = 32;
  int cameras = 3;
  int queries_per_camera = 2;
  int palette = 8;
  float illumination = 0.6f;
  float occlusion_rate = 0.4f;
  int jitter = 4;
  float noise = 0.08f;
  std::uint64_t seed = 1;
};

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Palette index of each body band: head, torso, legs.
using BandAttributes = std::array<int, 3>;

/// Distinct attribute triples, training identities first. Every band value is
/// shared by at least two identities, and test identities come in sibling
/// groups that differ from a base triple in exactly one band.
std::vector<BandAttributes> synthetic_identities(const SyntheticSpec& spec);

Rgb palette_color(int band, int index);

/// Writes the images and `manifest.json` under `root`, returning the manifest.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);

}  // namespace fd
