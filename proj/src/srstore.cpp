#include "fd/srstore.hpp"

#include "fd/binary_io.hpp"
#include "fd/hashing.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace fd {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'F', 'D', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;

std::string key_name(std::uint64_t sample, std::uint32_t view) {
  return "(sample " + std::to_string(sample) + ", view " + std::to_string(view) + ")";
}

void encode_record(std::vector<std::uint8_t>& buf, std::uint64_t sample, std::uint32_t view,
                   const float* vec, std::uint32_t dim) {
  buf.resize(sr_record_size(dim));
  std::uint8_t* p = buf.data();
  std::memcpy(p, &sample, 8);
  std::memcpy(p + 8, &view, 4);
  std::memcpy(p + 12, &dim, 4);
  std::memcpy(p + 16, vec, 4 * static_cast<std::size_t>(dim));
  const std::uint32_t crc = crc32({p, 16 + 4 * static_cast<std::size_t>(dim)});
  std::memcpy(p + 16 + 4 * static_cast<std::size_t>(dim), &crc, 4);
}

// True when `rec` is a well-formed record for (sample, view, dim).
bool decode_record(const std::uint8_t* rec, std::uint64_t sample, std::uint32_t view, std::uint32_t dim,
                   float* out) {
  std::uint64_t s;
  std::uint32_t v, d, crc;
  std::memcpy(&s, rec, 8);
  std::memcpy(&v, rec + 8, 4);
  std::memcpy(&d, rec + 12, 4);
  if (s != sample || v != view || d != dim) return false;
  const std::size_t body = 16 + 4 * static_cast<std::size_t>(dim);
  std::memcpy(&crc, rec + body, 4);
  if (crc != crc32({rec, body})) return false;
  if (out) std::memcpy(out, rec + 16, 4 * static_cast<std::size_t>(dim));
  return true;
}

std::string header_bytes(const SRHeader& h) {
  const std::string manifest = sr_header_to_json(h).dump();
  std::ostringstream out;
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, manifest.size());
  out << manifest;
  return out.str();
}

struct RawFile {
  SRHeader header;
  std::size_t offset = 0;
  std::vector<std::uint8_t> bytes;
};

RawFile read_raw(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CacheError("cannot open " + file.string());
  RawFile raw;
  raw.bytes.assign(std::istreambuf_iterator<char>(in), {});
  if (raw.bytes.size() < 16 || std::memcmp(raw.bytes.data(), kMagic, 4) != 0)
    throw CacheError(file.string() + " is not an SR file");
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, raw.bytes.data() + 4, 4);
  std::memcpy(&len, raw.bytes.data() + 8, 8);
  if (version != kVersion) throw CacheError(file.string() + ": unsupported SR file version");
  if (16 + len > raw.bytes.size()) throw CacheError(file.string() + ": truncated header");
  raw.header = sr_header_from_json(
      nlohmann::json::parse(raw.bytes.begin() + 16, raw.bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len)));
  raw.offset = 16 + len;
  return raw;
}

bool same_provenance(const SRHeader& a, const SRHeader& b) {
  return a.teacher_id == b.teacher_id && a.view == b.view && a.view_id == b.view_id && a.dim == b.dim &&
         a.config_hash == b.config_hash && a.dataset_fingerprint == b.dataset_fingerprint &&
         a.samples == b.samples;
}

}  // namespace

Vector<float> generate_sr(const EmbedFn& teacher, const Image& image, const ViewSpec& spec) {
  return generate_srs(teacher, std::span<const Image>(&image, 1), spec).col(0);
}

Matrix<float> generate_srs(const EmbedFn& teacher, std::span<const Image> images, const ViewSpec& spec) {
  std::vector<Image> crops;
  crops.reserve(images.size());
  for (const Image& im : images) crops.push_back(crop_view(im, spec));
  return flip_averaged(teacher, crops);
}

nlohmann::json sr_header_to_json(const SRHeader& h) {
  return {{"teacher_id", h.teacher_id}, {"view", h.view}, {"view_id", h.view_id},
          {"dim", h.dim}, {"config_hash", h.config_hash},
          {"dataset_fingerprint", h.dataset_fingerprint}, {"samples", h.samples}};
}

SRHeader sr_header_from_json(const nlohmann::json& j) {
  SRHeader h;
  h.teacher_id = j.at("teacher_id").get<std::string>();
  h.view = j.at("view").get<std::string>();
  h.view_id = j.at("view_id").get<std::uint32_t>();
  h.dim = j.at("dim").get<std::uint32_t>();
  h.config_hash = j.at("config_hash").get<std::string>();
  h.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  h.samples = j.at("samples").get<std::uint64_t>();
  return h;
}

std::string sr_file_name(const std::string& teacher_id) { return "sr_" + teacher_id + ".bin"; }

std::size_t sr_record_size(std::uint32_t dim) { return 20 + 4 * static_cast<std::size_t>(dim); }

void write_record_file(const fs::path& file, const SRHeader& header, const Matrix<float>& vectors) {
  if (vectors.rows() != header.dim || static_cast<std::uint64_t>(vectors.cols()) != header.samples)
    throw CacheError("record matrix does not match its header");
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError("cannot write " + tmp.string());
    out << header_bytes(header);
    std::vector<std::uint8_t> rec;
    for (Index i = 0; i < vectors.cols(); ++i) {
      encode_record(rec, static_cast<std::uint64_t>(i), header.view_id, vectors.col(i).data(), header.dim);
      out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw CacheError("failed writing " + tmp.string());
  }
  fs::rename(tmp, file);
}

Matrix<float> read_record_file(const fs::path& file, SRHeader* header) {
  const RawFile raw = read_raw(file);
  const auto& h = raw.header;
  const std::size_t rec = sr_record_size(h.dim);
  if (raw.bytes.size() != raw.offset + rec * h.samples)
    throw CacheError(file.string() + ": size does not match " + std::to_string(h.samples) + " records");
  Matrix<float> out(h.dim, static_cast<Index>(h.samples));
  for (std::uint64_t i = 0; i < h.samples; ++i)
    if (!decode_record(raw.bytes.data() + raw.offset + i * rec, i, h.view_id, h.dim,
                       out.col(static_cast<Index>(i)).data()))
      throw CacheError(file.string() + ": invalid record " + key_name(i, h.view_id) + "; rebuild the cache");
  if (header) *header = h;
  return out;
}

BuildStats build_cache(const fs::path& dir, const ViewRegistry& views, const std::vector<TeacherSource>& teachers,
                       const std::string& dataset_fingerprint, std::uint64_t samples, int workers,
                       std::size_t chunk) {
  // Every registered view needs a teacher before anything is extracted.
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto it = std::find_if(teachers.begin(), teachers.end(),
                                 [&](const TeacherSource& t) { return t.view.name == views[v].name; });
    if (it == teachers.end()) throw CacheError("no teacher for view '" + views[v].name + "'");
    if (it->view_id != v) throw CacheError("teacher " + it->teacher_id + " has the wrong view id");
    if (it->dim == 0 || !it->make_extractor) throw CacheError("teacher " + it->teacher_id + " is incomplete");
  }
  fs::create_directories(dir);
  const fs::path manifest_file = dir / kCacheManifestName;
  if (fs::exists(manifest_file)) {
    std::ifstream in(manifest_file);
    const auto old = nlohmann::json::parse(in);
    if (old.at("dataset_fingerprint").get<std::string>() != dataset_fingerprint)
      throw CacheError("existing cache in " + dir.string() + " was built for another dataset");
  }
  nlohmann::json manifest;
  manifest["dataset_fingerprint"] = dataset_fingerprint;
  manifest["samples"] = samples;
  manifest["views"] = views_to_json(views);
  manifest["teachers"] = nlohmann::json::array();

  BuildStats stats;
  workers = std::max(1, workers);
  chunk = std::max<std::size_t>(1, chunk);
  for (const TeacherSource& t : teachers) {
    const SRHeader header{t.teacher_id, t.view.name, t.view_id, t.dim, t.config_hash, dataset_fingerprint, samples};
    const fs::path file = dir / sr_file_name(t.teacher_id);
    const std::size_t rec = sr_record_size(t.dim);
    const std::string head = header_bytes(header);

    bool fresh = true;
    if (fs::exists(file)) {
      try {
        const RawFile raw = read_raw(file);
        fresh = !same_provenance(raw.header, header) || raw.offset != head.size();
      } catch (const CacheError&) {
        fresh = true;
      }
    }
    if (fresh) {
      std::ofstream out(file, std::ios::binary | std::ios::trunc);
      out << head;
      out.close();
      fs::resize_file(file, head.size() + rec * samples);
    } else if (fs::file_size(file) != head.size() + rec * samples) {
      fs::resize_file(file, head.size() + rec * samples);
    }

    // Scan slots; an all-zero slot was never written, anything else invalid is damage.
    std::vector<Index> todo;
    std::size_t damaged = 0;
    {
      const RawFile raw = read_raw(file);
      for (std::uint64_t i = 0; i < samples; ++i) {
        const std::uint8_t* r = raw.bytes.data() + raw.offset + i * rec;
        if (decode_record(r, i, t.view_id, t.dim, nullptr)) {
          ++stats.valid;
          continue;
        }
        todo.push_back(static_cast<Index>(i));
        if (std::any_of(r, r + rec, [](std::uint8_t b) { return b != 0; })) ++damaged;
      }
    }
    stats.repaired += damaged;

    std::vector<std::function<Matrix<float>(std::span<const Index>)>> extractors;
    if (!todo.empty())
      for (int w = 0; w < workers; ++w) extractors.push_back(t.make_extractor());

    std::fstream io(file, std::ios::binary | std::ios::in | std::ios::out);
    std::vector<std::uint8_t> buf;
    const std::size_t n_chunks = (todo.size() + chunk - 1) / chunk;
    for (std::size_t round = 0; round < n_chunks; round += static_cast<std::size_t>(workers)) {
      const std::size_t in_round = std::min<std::size_t>(static_cast<std::size_t>(workers), n_chunks - round);
      std::vector<Matrix<float>> results(in_round);
      std::vector<std::exception_ptr> errors(in_round);
      auto run = [&](std::size_t w) {
        try {
          const std::size_t begin = (round + w) * chunk;
          const std::size_t end = std::min(todo.size(), begin + chunk);
          results[w] = extractors[w](std::span<const Index>(todo.data() + begin, end - begin));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };
      if (in_round == 1) {
        run(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < in_round; ++w) pool.emplace_back(run, w);
        for (auto& th : pool) th.join();
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      // Single writer, slots in ascending order.
      for (std::size_t w = 0; w < in_round; ++w) {
        const std::size_t begin = (round + w) * chunk;
        const Matrix<float>& m = results[w];
        if (m.rows() != t.dim || static_cast<std::size_t>(m.cols()) != std::min(todo.size(), begin + chunk) - begin)
          throw CacheError("teacher " + t.teacher_id + " produced " + std::to_string(m.rows()) +
                           "-dim output, manifest says " + std::to_string(t.dim));
        if (!m.allFinite()) throw CacheError("teacher " + t.teacher_id + " produced a non-finite SR");
        for (Index c = 0; c < m.cols(); ++c) {
          const auto slot = static_cast<std::uint64_t>(todo[begin + static_cast<std::size_t>(c)]);
          encode_record(buf, slot, t.view_id, m.col(c).data(), t.dim);
          io.seekp(static_cast<std::streamoff>(head.size() + slot * rec));
          io.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
          ++stats.written;
        }
      }
      io.flush();
      if (!io) throw CacheError("failed writing " + file.string());
    }

    manifest["teachers"].push_back({{"teacher_id", t.teacher_id}, {"view", t.view.name},
                                    {"view_id", t.view_id}, {"dim", t.dim},
                                    {"config_hash", t.config_hash}, {"file", sr_file_name(t.teacher_id)}});
  }
  const fs::path tmp = manifest_file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << manifest.dump(1) << '\n';
  }
  fs::rename(tmp, manifest_file);
  return stats;
}

SRCache SRCache::open(const fs::path& dir, const std::string& expected_fingerprint) {
  const fs::path manifest_file = dir / kCacheManifestName;
  std::ifstream in(manifest_file);
  if (!in) throw CacheError("no SR cache manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  SRCache cache;
  cache.fingerprint_ = manifest.at("dataset_fingerprint").get<std::string>();
  if (cache.fingerprint_ != expected_fingerprint)
    throw CacheError("SR cache in " + dir.string() + " was built for dataset " + cache.fingerprint_ +
                     ", expected " + expected_fingerprint);
  cache.samples_ = manifest.at("samples").get<std::uint64_t>();
  cache.views_ = views_from_json(manifest.at("views"));
  for (const auto& t : manifest.at("teachers")) {
    Table table;
    table.vectors = read_record_file(dir / t.at("file").get<std::string>(), &table.header);
    const auto& h = table.header;
    if (h.dataset_fingerprint != cache.fingerprint_ || h.samples != cache.samples_ ||
        h.view_id != t.at("view_id").get<std::uint32_t>() || h.dim != t.at("dim").get<std::uint32_t>())
      throw CacheError("SR file for teacher " + h.teacher_id + " disagrees with the cache manifest");
    cache.tables_[h.view_id] = std::move(table);
  }
  return cache;
}

Vector<float> SRCache::read(std::uint64_t sample_id, std::uint32_t view_id) const {
  const auto it = tables_.find(view_id);
  if (it == tables_.end() || sample_id >= samples_)
    throw CacheError("SR entry " + key_name(sample_id, view_id) + " is not in the cache; it is stale for this config");
  return it->second.vectors.col(static_cast<Index>(sample_id));
}

const Matrix<float>& SRCache::view_matrix(std::uint32_t view_id) const {
  const auto it = tables_.find(view_id);
  if (it == tables_.end()) throw CacheError("SR cache has no view " + std::to_string(view_id));
  return it->second.vectors;
}

std::uint32_t SRCache::dim(std::uint32_t view_id) const { return header(view_id).dim; }

const SRHeader& SRCache::header(std::uint32_t view_id) const {
  const auto it = tables_.find(view_id);
  if (it == tables_.end()) throw CacheError("SR cache has no view " + std::to_string(view_id));
  return it->second.header;
}

std::size_t SRCache::entries() const {
  std::size_t n = 0;
  for (const auto& [v, t] : tables_) n += static_cast<std::size_t>(t.vectors.cols());
  return n;
}

std::string cache_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name == kCacheManifestName || (name.starts_with("sr_") && name.ends_with(".bin"))) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) h.update(f.filename().string()).update("\n").update(sha256_file(f)).update("\n");
  return h.hex();
}

}  // namespace fd
