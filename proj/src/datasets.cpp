#include "fd/datasets.hpp"

#include "fd/hashing.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>

namespace fd {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "?";
}

std::string NamingScheme::directory(Split split) const {
  switch (split) {
    case Split::train: return "bounding_box_train";
    case Split::query: return "query";
    case Split::gallery: return "bounding_box_test";
  }
  return {};
}

namespace {

int to_int(const std::ssub_match& m) { return m.matched ? std::stoi(m.str()) : 0; }

std::string identity_field(int identity) {
  char buf[16];
  std::snprintf(buf, sizeof buf, identity < 0 ? "%d" : "%04d", identity);
  return buf;
}

// 0001_c1s1_000151_00.jpg
class Market1501 final : public NamingScheme {
 public:
  std::string name() const override { return "market1501"; }
  std::optional<ParsedName> parse(const std::string& filename) const override {
    static const std::regex re(R"(^(-?\d+)_c(\d+)(?:s(\d+)_(\d+))?)");
    std::smatch m;
    if (!std::regex_search(filename, m, re)) return std::nullopt;
    return ParsedName{to_int(m[1]), to_int(m[2]), to_int(m[3]), to_int(m[4])};
  }
  std::string format(const ParsedName& r, const std::string& extension) const override {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_c%ds%d_%06d_00", r.camera, r.sequence, r.frame);
    return identity_field(r.identity) + buf + extension;
  }
};

// 0001_c2_f0046182.jpg
class DukeMtmc final : public NamingScheme {
 public:
  std::string name() const override { return "dukemtmc"; }
  std::optional<ParsedName> parse(const std::string& filename) const override {
    static const std::regex re(R"(^(-?\d+)_c(\d+)(?:_f(\d+))?)");
    std::smatch m;
    if (!std::regex_search(filename, m, re)) return std::nullopt;
    return ParsedName{to_int(m[1]), to_int(m[2]), 0, to_int(m[3])};
  }
  std::string format(const ParsedName& r, const std::string& extension) const override {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_c%d_f%07d", r.camera, r.frame);
    return identity_field(r.identity) + buf + extension;
  }
};

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

}  // namespace

std::unique_ptr<NamingScheme> make_naming_scheme(const std::string& name) {
  if (name == "market1501") return std::make_unique<Market1501>();
  if (name == "dukemtmc") return std::make_unique<DukeMtmc>();
  throw ConfigError("unknown naming scheme '" + name + "'");
}

const std::vector<SampleRecord>& DatasetManifest::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::query: return query;
    case Split::gallery: return gallery;
  }
  return train;
}

std::vector<SampleRecord>& DatasetManifest::split(Split s) {
  return const_cast<std::vector<SampleRecord>&>(std::as_const(*this).split(s));
}

bool DatasetManifest::identities_disjoint() const {
  std::set<int> seen;
  for (const auto& r : train)
    if (!r.junk) seen.insert(r.identity);
  for (const auto* split : {&query, &gallery})
    for (const auto& r : *split)
      if (!r.junk && seen.count(r.identity)) return false;
  return true;
}

void assign_labels(DatasetManifest& manifest) {
  std::map<int, int> labels;
  for (const auto& r : manifest.train)
    if (!r.junk) labels.emplace(r.identity, 0);
  int next = 0;
  for (auto& [id, label] : labels) label = next++;
  for (auto& r : manifest.train) r.label = r.junk ? -1 : labels.at(r.identity);
  for (auto* split : {&manifest.query, &manifest.gallery})
    for (auto& r : *split) r.label = -1;
  manifest.num_classes = next;
}

DatasetManifest ingest(const fs::path& root, const NamingScheme& scheme) {
  DatasetManifest m;
  m.name = root.filename().string();
  m.scheme = scheme.name();
  for (Split s : {Split::train, Split::query, Split::gallery}) {
    const fs::path dir = root / scheme.directory(s);
    if (!fs::is_directory(dir)) throw DatasetError("missing split directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    auto& out = m.split(s);
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, root).generic_string();
      const auto parsed = scheme.parse(f.filename().string());
      if (!parsed) {
        m.rejects.push_back(rel);
        continue;
      }
      out.push_back({rel, parsed->identity, parsed->camera, parsed->identity == -1, -1});
    }
    if (out.empty()) throw DatasetError("split '" + to_string(s) + "' has no usable images in " + dir.string());
  }
  assign_labels(m);
  m.fingerprint = dataset_fingerprint(root, m);
  return m;
}

std::string dataset_fingerprint(const fs::path& root, const DatasetManifest& manifest) {
  std::vector<std::string> paths;
  for (Split s : {Split::train, Split::query, Split::gallery})
    for (const auto& r : manifest.split(s)) paths.push_back(r.path);
  std::sort(paths.begin(), paths.end());
  Sha256 h;
  for (const auto& p : paths) {
    const fs::path file = root / p;
    if (!fs::is_regular_file(file)) throw DatasetError("manifest entry missing on disk: " + p);
    h.update(p).update("\t").update(std::to_string(fs::file_size(file))).update("\t");
    h.update(sha256_file(file)).update("\n");
  }
  return h.hex();
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["name"] = m.name;
  j["scheme"] = m.scheme;
  j["fingerprint"] = m.fingerprint;
  j["num_classes"] = m.num_classes;
  for (Split s : {Split::train, Split::query, Split::gallery}) {
    auto& arr = j["splits"][to_string(s)] = nlohmann::json::array();
    for (const auto& r : m.split(s))
      arr.push_back({{"path", r.path}, {"identity", r.identity}, {"camera", r.camera},
                     {"junk", r.junk}, {"label", r.label}});
  }
  j["rejects"] = m.rejects;
  j["annotations"] = m.annotations;
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.name = j.value("name", "");
  m.scheme = j.value("scheme", "market1501");
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.num_classes = j.at("num_classes").get<int>();
  for (Split s : {Split::train, Split::query, Split::gallery})
    for (const auto& e : j.at("splits").at(to_string(s)))
      m.split(s).push_back({e.at("path").get<std::string>(), e.at("identity").get<int>(),
                            e.at("camera").get<int>(), e.at("junk").get<bool>(),
                            e.at("label").get<int>()});
  m.rejects = j.value("rejects", std::vector<std::string>{});
  m.annotations = j.value("annotations", nlohmann::json::object());
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw DatasetError("cannot write " + file.string());
  out << manifest_to_json(manifest).dump(1) << '\n';
}

DatasetManifest load_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot read " + file.string());
  return manifest_from_json(nlohmann::json::parse(in));
}

Image load_image(const fs::path& file) {
  const cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DatasetError("cannot decode image " + file.string());
  Image im(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) im(c, y, x) = static_cast<float>(row[x][2 - c]) / 255.0f;
  }
  return im;
}

void save_image(const Image& image, const fs::path& file) {
  if (image.channels() != 3) throw GeometryError("only RGB images can be saved");
  cv::Mat bgr(static_cast<int>(image.height), static_cast<int>(image.width), CV_8UC3);
  for (Index y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (Index x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(c, y, x), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  if (!cv::imwrite(file.string(), bgr)) throw DatasetError("cannot write image " + file.string());
}

std::vector<Image> load_split(const fs::path& root, const std::vector<SampleRecord>& records) {
  std::vector<Image> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(load_image(root / r.path));
  return out;
}

// --- synthetic generator -------------------------------------------------

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  return {{"n_identities", s.n_identities}, {"test_identities", s.test_identities},
          {"images_per_identity", s.images_per_identity}, {"height", s.height},
          {"width", s.width}, {"cameras", s.cameras}, {"queries_per_camera", s.queries_per_camera}, {"palette", s.palette},
          {"illumination", s.illumination}, {"occlusion_rate", s.occlusion_rate},
          {"jitter", s.jitter}, {"noise", s.noise}, {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.n_identities = j.value("n_identities", s.n_identities);
  s.test_identities = j.value("test_identities", s.test_identities);
  s.images_per_identity = j.value("images_per_identity", s.images_per_identity);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.cameras = j.value("cameras", s.cameras);
  s.queries_per_camera = j.value("queries_per_camera", s.queries_per_camera);
  s.palette = j.value("palette", s.palette);
  s.illumination = j.value("illumination", s.illumination);
  s.occlusion_rate = j.value("occlusion_rate", s.occlusion_rate);
  s.jitter = j.value("jitter", s.jitter);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

namespace {

void validate(const SyntheticSpec& s) {
  if (s.n_identities < 2 || s.test_identities < 1 || s.test_identities >= s.n_identities)
    throw ConfigError("synthetic spec needs train and test identities");
  if (s.cameras < 2) throw ConfigError("synthetic spec needs at least two cameras");
  if (s.queries_per_camera < 1) throw ConfigError("queries_per_camera must be >= 1");
  if (s.images_per_identity <= s.cameras * s.queries_per_camera)
    throw ConfigError("images_per_identity must leave gallery images after the queries");
  if (s.height < 16 || s.width < 8) throw ConfigError("synthetic images must be at least 16x8");
  if (s.palette < 2) throw ConfigError("palette needs at least two colors per band");
  if (s.occlusion_rate < 0.0f || s.occlusion_rate > 1.0f)
    throw ConfigError("occlusion_rate must lie in [0, 1]");
}

Rgb hsv(float h, float s, float v) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  Rgb rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (float& ch : rgb) ch += v - c;
  return rgb;
}

struct Rect {
  Index r0, r1, c0, c1;
};

void fill(Image& im, Rect r, const Rgb& color) {
  r.r0 = std::clamp<Index>(r.r0, 0, im.height);
  r.r1 = std::clamp<Index>(r.r1, 0, im.height);
  r.c0 = std::clamp<Index>(r.c0, 0, im.width);
  r.c1 = std::clamp<Index>(r.c1, 0, im.width);
  for (Index y = r.r0; y < r.r1; ++y)
    for (Index x = r.c0; x < r.c1; ++x)
      for (Index c = 0; c < 3; ++c) im(c, y, x) = color[static_cast<std::size_t>(c)];
}

Index frac(double f, Index extent) { return static_cast<Index>(std::lround(f * static_cast<double>(extent))); }

struct Rendered {
  Image image;
  bool occluded = false;
  Index occ_row0 = 0, occ_row1 = 0;
};

// A front-facing figure symmetric about its own centre line, so a mirrored
// rendering is another valid rendering of the same identity.
Rendered render(const SyntheticSpec& s, const BandAttributes& attr, int camera_index, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  std::uniform_int_distribution<int> jit(-s.jitter, s.jitter);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  const Index H = s.height, W = s.width;

  Rendered out;
  Image& im = out.image = Image(H, W);
  const float bg = 0.35f + 0.3f * u01(rng);
  for (Index c = 0; c < 3; ++c) im.pixels.row(c).setConstant(bg + 0.05f * (u01(rng) - 0.5f));

  const Index dx = jit(rng), dy = jit(rng);
  const Index cx = W / 2 + dx;
  auto span = [&](double half) { return std::pair{cx - frac(half, W), cx + frac(half, W)}; };
  const auto [h0, h1] = span(0.16);
  const auto [t0, t1] = span(0.30);
  fill(im, {frac(0.04, H) + dy, frac(0.20, H) + dy, h0, h1}, palette_color(0, attr[0]));
  fill(im, {frac(0.20, H) + dy, frac(0.56, H) + dy, t0, t1}, palette_color(1, attr[1]));
  const Rgb legs = palette_color(2, attr[2]);
  fill(im, {frac(0.56, H) + dy, frac(0.96, H) + dy, cx - frac(0.26, W), cx - frac(0.03, W)}, legs);
  fill(im, {frac(0.56, H) + dy, frac(0.96, H) + dy, cx + frac(0.03, W), cx + frac(0.26, W)}, legs);

  if (u01(rng) < s.occlusion_rate) {
    const Index band = std::max<Index>(2, frac(0.15 + 0.15 * u01(rng), H));
    const Index top = frac(0.15, H) + static_cast<Index>(u01(rng) * static_cast<float>(H - band - frac(0.15, H)));
    const float g = 0.15f + 0.7f * u01(rng);
    fill(im, {top, top + band, 0, W}, {g, g, g});
    out.occluded = true;
    out.occ_row0 = top;
    out.occ_row1 = top + band;
  }

  // Camera regime: brightness drop and a colour cast that grow with the index.
  const float t = static_cast<float>(camera_index) / static_cast<float>(s.cameras - 1);
  const float gain = (1.0f - s.illumination * t) * (0.92f + 0.16f * u01(rng));
  const Rgb cast = {1.0f + 0.5f * s.illumination * t, 1.0f, 1.0f - 0.5f * s.illumination * t};
  for (Index c = 0; c < 3; ++c) im.pixels.row(c) *= gain * cast[static_cast<std::size_t>(c)];
  for (Index i = 0; i < im.pixels.size(); ++i) im.pixels.data()[i] += s.noise * gauss(rng);
  im.pixels = im.pixels.cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

}  // namespace

Rgb palette_color(int band, int index) {
  // Bands use interleaved hue offsets so equal indices differ across bands.
  const float hue = 0.13f * static_cast<float>(band) + 0.618034f * static_cast<float>(index);
  const float sat = index % 2 ? 0.55f : 0.85f;
  const float val = index % 3 == 2 ? 0.6f : 0.9f;
  return hsv(hue, sat, val);
}

std::vector<BandAttributes> synthetic_identities(const SyntheticSpec& s) {
  validate(s);
  const int p = s.palette;
  if (p * p * p < 2 * s.n_identities) throw ConfigError("palette too small for the identity count");
  std::vector<BandAttributes> all;
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      for (int c = 0; c < p; ++c) all.push_back({a, b, c});
  std::mt19937_64 rng(derive_seed(s.seed, "synthetic/identities"));
  const int n_train = s.n_identities - s.test_identities;

  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<BandAttributes> pick(all.begin(), all.begin() + n_train);
    std::set<BandAttributes> used(pick.begin(), pick.end());
    // Test identities come in sibling groups: a base triple followed by
    // copies that each differ from it in exactly one band.
    std::uniform_int_distribution<int> colour(0, p - 1);
    bool ok = true;
    std::size_t next_base = static_cast<std::size_t>(n_train);
    while (ok && static_cast<int>(pick.size()) < s.n_identities) {
      while (next_base < all.size() && used.count(all[next_base])) ++next_base;
      if (next_base == all.size()) {
        ok = false;
        break;
      }
      const BandAttributes base = all[next_base++];
      pick.push_back(base);
      used.insert(base);
      for (std::size_t band = 0; band < 3 && static_cast<int>(pick.size()) < s.n_identities; ++band) {
        BandAttributes sib = base;
        for (int tries = 0; tries < 100 && (sib == base || used.count(sib)); ++tries) sib[band] = colour(rng);
        if (sib == base || used.count(sib)) continue;
        pick.push_back(sib);
        used.insert(sib);
      }
    }
    for (int band = 0; band < 3 && ok; ++band) {
      std::map<int, int> counts;
      for (const auto& a : pick) ++counts[a[static_cast<std::size_t>(band)]];
      for (const auto& [v, n] : counts) ok = ok && n >= 2;
    }
    if (ok && static_cast<int>(pick.size()) == s.n_identities) return pick;
  }
  throw ConfigError("could not draw identities where every band value is shared");
}

DatasetManifest generate_synthetic(const SyntheticSpec& s, const fs::path& root) {
  const auto identities = synthetic_identities(s);
  const Market1501 scheme;
  DatasetManifest m;
  m.name = "synthetic";
  m.scheme = scheme.name();
  m.annotations["spec"] = synthetic_spec_to_json(s);
  auto& samples = m.annotations["samples"] = nlohmann::json::object();
  const int n_train = s.n_identities - s.test_identities;
  int frame = 0;
  for (int i = 0; i < s.n_identities; ++i) {
    const int identity = i + 1;
    const bool test = i >= n_train;
    for (int k = 0; k < s.images_per_identity; ++k) {
      const int cam = k % s.cameras;
      const auto seed = derive_seed(s.seed, "synthetic/image/" + std::to_string(identity) + "/" + std::to_string(k));
      const Rendered r = render(s, identities[static_cast<std::size_t>(i)], cam, seed);
      const Split split = !test ? Split::train : (k < s.cameras * s.queries_per_camera ? Split::query : Split::gallery);
      const std::string rel = scheme.directory(split) + "/" +
                              scheme.format({identity, cam + 1, 1, frame++}, ".png");
      save_image(r.image, root / rel);
      m.split(split).push_back({rel, identity, cam + 1, false, -1});
      const auto& a = identities[static_cast<std::size_t>(i)];
      samples[rel] = {{"attributes", a}, {"occluded", r.occluded},
                      {"occluder_rows", {r.occ_row0, r.occ_row1}}};
    }
  }
  assign_labels(m);
  m.fingerprint = dataset_fingerprint(root, m);
  save_manifest(m, root / kManifestName);
  return m;
}

}  // namespace fd
