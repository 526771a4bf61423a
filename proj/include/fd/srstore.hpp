#pragma once

#include "fd/batch.hpp"
#include "fd/views.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace fd {

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flip-averaged teacher representation of one view crop:
/// (teacher(crop) + teacher(flip crop)) / 2.
Vector<float> generate_sr(const EmbedFn& teacher, const Image& image, const ViewSpec& spec);

/// Batched generate_sr; one column per image.
Matrix<float> generate_srs(const EmbedFn& teacher, std::span<const Image> images, const ViewSpec& spec);

/// Provenance header of one `sr_<teacher_id>.bin` file.
struct SRHeader {
  std::string teacher_id;
  std::string view;
  std::uint32_t view_id = 0;
  std::uint32_t dim = 0;
  std::string config_hash;
  std::string dataset_fingerprint;
  std::uint64_t samples = 0;
};

nlohmann::json sr_header_to_json(const SRHeader& h);
SRHeader sr_header_from_json(const nlohmann::json& j);

std::string sr_file_name(const std::string& teacher_id);

/// Record layout: u64 sample_id, u32 view_id, u32 dim, dim x f32, u32 crc32 of
/// the preceding record bytes. Slot i holds sample i.
std::size_t sr_record_size(std::uint32_t dim);

/// Writes one feature matrix (dim x samples) as a complete record file. Shared
/// with the evaluator's feature dumps.
void write_record_file(const std::filesystem::path& file, const SRHeader& header, const Matrix<float>& vectors);

/// Reads a record file, validating every checksum and key.
Matrix<float> read_record_file(const std::filesystem::path& file, SRHeader* header = nullptr);

/// One teacher to extract. `make_extractor` is called once per worker and
/// returns a function mapping sample indices to SR columns (dim x count).
struct TeacherSource {
  std::string teacher_id;
  ViewSpec view;
  std::uint32_t view_id = 0;
  std::uint32_t dim = 0;
  std::string config_hash;
  std::function<std::function<Matrix<float>(std::span<const Index>)>()> make_extractor;
};

struct BuildStats {
  std::size_t written = 0;
  std::size_t valid = 0;
  std::size_t repaired = 0;
};

/// Creates or completes the cache under `dir`: every slot whose record fails
/// its checksum or key check is (re)extracted; valid slots are left untouched.
/// `views` must each have a teacher; that is checked before any extraction.
BuildStats build_cache(const std::filesystem::path& dir, const ViewRegistry& views,
                       const std::vector<TeacherSource>& teachers, const std::string& dataset_fingerprint,
                       std::uint64_t samples, int workers = 1, std::size_t chunk = 32);

/// A sealed, fully loaded cache. Reads are const and safe from any thread.
class SRCache {
 public:
  /// Loads every teacher file listed in the cache manifest. Refuses a cache
  /// built for another dataset fingerprint.
  static SRCache open(const std::filesystem::path& dir, const std::string& expected_fingerprint);

  Vector<float> read(std::uint64_t sample_id, std::uint32_t view_id) const;
  /// dim x samples matrix of one view.
  const Matrix<float>& view_matrix(std::uint32_t view_id) const;
  std::uint32_t dim(std::uint32_t view_id) const;
  const SRHeader& header(std::uint32_t view_id) const;
  bool has_view(std::uint32_t view_id) const { return tables_.count(view_id) != 0; }
  std::uint64_t samples() const { return samples_; }
  std::size_t entries() const;
  const ViewRegistry& views() const { return views_; }
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  struct Table {
    SRHeader header;
    Matrix<float> vectors;
  };
  std::map<std::uint32_t, Table> tables_;
  ViewRegistry views_;
  std::string fingerprint_;
  std::uint64_t samples_ = 0;
};

/// SHA-256 over the cache manifest and every teacher file in name order.
std::string cache_hash(const std::filesystem::path& dir);

inline constexpr const char* kCacheManifestName = "sr_manifest.json";

}  // namespace fd
