#include "mmsift/imgdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

#include "png_io.hpp"

namespace mmsift {

using nlohmann::json;

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Degenerate: return "degenerate";
  }
  return "unknown";
}

void PseudoColorImage::validate() const {
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  require(width >= 0 && height >= 0, "pseudo-color dimensions must be non-negative");
  require(r.size() == n && g.size() == n && b.size() == n,
          "pseudo-color channel length mismatch: expected " + std::to_string(n) + ", got r=" +
              std::to_string(r.size()) + " g=" + std::to_string(g.size()) +
              " b=" + std::to_string(b.size()));
}

BBox bounding_box(const BinaryMask& mask) {
  BBox box{mask.height(), mask.width(), -1, -1};
  for (int r = 0; r < mask.height(); ++r) {
    const auto row = mask.row(r);
    for (int c = 0; c < mask.width(); ++c) {
      if (!row[c]) continue;
      box.row0 = std::min(box.row0, r);
      box.row1 = std::max(box.row1, r);
      box.col0 = std::min(box.col0, c);
      box.col1 = std::max(box.col1, c);
    }
  }
  if (box.row1 < 0) return BBox{};
  return box;
}

// ---------------------------------------------------------------------------
// PGM

namespace {

bool has_pgm_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[2] = {};
  return in.read(magic, 2) && magic[0] == 'P' && magic[1] == '5';
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok;  // the single whitespace after the token is consumed
}

int parse_header_int(const std::string& tok, const fs::path& path, const char* field) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9)
    fail(ErrorKind::Format, std::string("corrupt header: bad ") + field + " in " + path.string());
  return std::stoi(tok);
}

GrayImage16 load_pgm16(const fs::path& path, double pixel_size_mm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  if (pgm_token(in) != "P5") fail(ErrorKind::Format, "corrupt header: not a P5 PGM: " + path.string());
  const int width = parse_header_int(pgm_token(in), path, "width");
  const int height = parse_header_int(pgm_token(in), path, "height");
  const int maxval = parse_header_int(pgm_token(in), path, "maxval");
  if (maxval != 65535)
    fail(ErrorKind::Unsupported,
         "unsupported bit depth: PGM maxval " + std::to_string(maxval) + " (need 65535)");

  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> raw(2 * n);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    fail(ErrorKind::Format, "corrupt data: truncated PGM " + path.string());
  std::vector<std::uint16_t> px(n);
  for (std::size_t i = 0; i < n; ++i)
    px[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  return GrayImage16(width, height, std::move(px), pixel_size_mm);
}

void save_pgm16(const GrayImage16& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  std::vector<unsigned char> raw(2 * img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(px[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(px[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

void check_exists(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(ErrorKind::Io, "missing file: " + path.string());
}

detail::PngPixels read_png_checked(const fs::path& path, int bit_depth, int channels) {
  auto png = detail::read_png(path);
  if (png.channels < 0)
    fail(ErrorKind::Unsupported, "unsupported PNG color type in " + path.string());
  if (png.bit_depth != bit_depth)
    fail(ErrorKind::Unsupported, "unsupported bit depth: " + std::to_string(png.bit_depth) +
                                     "-bit PNG (need " + std::to_string(bit_depth) + "-bit) in " +
                                     path.string());
  if (png.channels != channels)
    fail(ErrorKind::Unsupported, "unsupported channel count " + std::to_string(png.channels) +
                                     " in " + path.string());
  if (png.anisotropic)
    fail(ErrorKind::Unsupported, "anisotropic pixel spacing in " + path.string());
  return png;
}

}  // namespace

GrayImage16 load_gray16(const fs::path& path, double pixel_size_mm) {
  check_exists(path);
  if (has_pgm_signature(path)) return load_pgm16(path, pixel_size_mm);
  if (!detail::has_png_signature(path))
    fail(ErrorKind::Format, "corrupt header: neither PGM nor PNG: " + path.string());
  auto png = read_png_checked(path, 16, 1);
  return GrayImage16(png.width, png.height, std::move(png.samples), pixel_size_mm);
}

void save_gray16(const GrayImage16& img, const fs::path& path) {
  if (path.extension() == ".pgm") return save_pgm16(img, path);
  detail::PngPixels png{img.width(), img.height(), 16, 1,
                        std::vector<std::uint16_t>(img.pixels().begin(), img.pixels().end())};
  detail::write_png(path, png);
}

Gray8 load_gray8(const fs::path& path) {
  check_exists(path);
  auto png = read_png_checked(path, 8, 1);
  std::vector<std::uint8_t> px(png.samples.begin(), png.samples.end());
  return Gray8(png.width, png.height, std::move(px));
}

void save_gray8(const Gray8& img, const fs::path& path) {
  detail::PngPixels png{img.width(), img.height(), 8, 1,
                        std::vector<std::uint16_t>(img.pixels().begin(), img.pixels().end())};
  detail::write_png(path, png);
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  Gray8 out(mask.width(), mask.height());
  std::transform(mask.pixels().begin(), mask.pixels().end(), out.pixels().begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  save_gray8(out, path);
}

BinaryMask load_mask(const fs::path& path) {
  const Gray8 img = load_gray8(path);
  BinaryMask mask(img.width(), img.height());
  std::transform(img.pixels().begin(), img.pixels().end(), mask.pixels().begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
  return mask;
}

void save_rgb8(const PseudoColorImage& img, const fs::path& path) {
  img.validate();
  detail::PngPixels png{img.width, img.height, 8, 3, {}};
  png.samples.resize(img.r.size() * 3);
  for (std::size_t i = 0; i < img.r.size(); ++i) {
    png.samples[3 * i] = img.r[i];
    png.samples[3 * i + 1] = img.g[i];
    png.samples[3 * i + 2] = img.b[i];
  }
  detail::write_png(path, png);
}

PseudoColorImage load_rgb8(const fs::path& path) {
  check_exists(path);
  auto png = read_png_checked(path, 8, 3);
  PseudoColorImage img{png.width, png.height, {}, {}, {}};
  const std::size_t n = static_cast<std::size_t>(png.width) * png.height;
  img.r.resize(n);
  img.g.resize(n);
  img.b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.r[i] = static_cast<std::uint8_t>(png.samples[3 * i]);
    img.g[i] = static_cast<std::uint8_t>(png.samples[3 * i + 1]);
    img.b[i] = static_cast<std::uint8_t>(png.samples[3 * i + 2]);
  }
  return img;
}

namespace {

void put_u32le(unsigned char* p, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) p[k] = static_cast<unsigned char>(v >> (8 * k));
}

std::uint32_t get_u32le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return v;
}

}  // namespace

void save_raw32(const GrayImage32& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  std::vector<unsigned char> bytes(8 + 4 * img.size());
  put_u32le(bytes.data(), static_cast<std::uint32_t>(img.width()));
  put_u32le(bytes.data() + 4, static_cast<std::uint32_t>(img.height()));
  for (std::size_t i = 0; i < img.size(); ++i) put_u32le(bytes.data() + 8 + 4 * i, img.pixels()[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

GrayImage32 load_raw32(const fs::path& path) {
  check_exists(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) fail(ErrorKind::Format, path.string() + ": truncated raw header");
  const std::uint32_t w = get_u32le(bytes.data()), h = get_u32le(bytes.data() + 4);
  if (w == 0 || h == 0 || w > 65535 || h > 65535)
    fail(ErrorKind::Format, path.string() + ": implausible raw size " + std::to_string(w) + "x" + std::to_string(h));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 8 + 4 * n)
    fail(ErrorKind::Format, path.string() + ": expected " + std::to_string(8 + 4 * n) + " bytes, found " +
                                std::to_string(bytes.size()));
  GrayImage32 img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) img.pixels()[i] = get_u32le(bytes.data() + 8 + 4 * i);
  return img;
}

// ---------------------------------------------------------------------------
// Annotations

GroundTruthMass make_mass(BinaryMask mask, double pixel_size_mm) {
  const auto n = mask.count();
  require(n > 0, "ground-truth mass has no pixels");
  require(pixel_size_mm > 0.0, "pixel_size_mm must be positive");
  return {std::move(mask), static_cast<double>(n) * pixel_size_mm * pixel_size_mm};
}

BinaryMask rasterize_polygon(std::span<const PointXY> polygon, int width, int height) {
  require(polygon.size() >= 3, "polygon needs at least 3 vertices, got " +
                                   std::to_string(polygon.size()));
  BinaryMask mask(width, height);
  std::vector<double> xs;
  for (int r = 0; r < height; ++r) {
    const double y = r + 0.5;
    xs.clear();
    for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
      const auto& a = polygon[i];
      const auto& b = polygon[j];
      if ((a.y > y) == (b.y > y)) continue;
      xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    auto row = mask.row(r);
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // centres c + 0.5 in [xs[k], xs[k+1])
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int c1 = std::min(width - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
      for (int c = c0; c <= c1; ++c) row[c] = 1;
    }
  }
  return mask;
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Format, what + ": " + e.what());
  }
}

}  // namespace

std::vector<GroundTruthMass> load_annotation(const fs::path& path, int width, int height,
                                             double pixel_size_mm) {
  check_exists(path);
  std::vector<GroundTruthMass> masses;

  if (detail::has_png_signature(path)) {
    const Gray8 labels = load_gray8(path);
    if (labels.width() != width || labels.height() != height)
      fail(ErrorKind::Validation, "label image size mismatch: " + std::to_string(labels.width()) +
                                      "x" + std::to_string(labels.height()) + " vs image " +
                                      std::to_string(width) + "x" + std::to_string(height));
    std::set<std::uint8_t> ids(labels.pixels().begin(), labels.pixels().end());
    ids.erase(0);
    for (auto id : ids) {
      BinaryMask m(width, height);
      std::transform(labels.pixels().begin(), labels.pixels().end(), m.pixels().begin(),
                     [id](std::uint8_t v) { return static_cast<std::uint8_t>(v == id); });
      masses.push_back(make_mass(std::move(m), pixel_size_mm));
    }
    return masses;
  }

  const std::string text = read_text(path);
  if (std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
    return masses;

  const json doc = parse_json(text, "annotation " + path.string());
  if (!doc.is_object() || !doc.contains("masses") || !doc["masses"].is_array())
    fail(ErrorKind::Format, "annotation " + path.string() + ": expected {\"masses\": [...]}");
  int index = 0;
  for (const auto& item : doc["masses"]) {
    const std::string where = "masses[" + std::to_string(index++) + "]";
    if (!item.is_object() || !item.contains("polygon") || !item["polygon"].is_array())
      fail(ErrorKind::Format, where + ": expected {\"polygon\": [[x,y],...]}");
    std::vector<PointXY> poly;
    for (const auto& v : item["polygon"]) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        fail(ErrorKind::Format, where + ": vertex must be [x, y]");
      poly.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    if (poly.size() < 3)
      fail(ErrorKind::Validation, where + ": polygon with " + std::to_string(poly.size()) +
                                      " vertices (need >= 3)");
    BinaryMask m = rasterize_polygon(poly, width, height);
    if (!m.any()) fail(ErrorKind::Validation, where + ": polygon rasterizes to zero pixels");
    masses.push_back(make_mass(std::move(m), pixel_size_mm));
  }
  return masses;
}

// ---------------------------------------------------------------------------
// Manifest

const char* to_string(FoldRole role) noexcept {
  switch (role) {
    case FoldRole::Train: return "train";
    case FoldRole::Validation: return "validation";
    case FoldRole::Test: return "test";
  }
  return "test";
}

FoldRole parse_fold_role(const std::string& text) {
  if (text == "train") return FoldRole::Train;
  if (text == "validation") return FoldRole::Validation;
  if (text == "test") return FoldRole::Test;
  fail(ErrorKind::Validation, "unknown role '" + text + "' (train|validation|test)");
}

std::vector<int> DatasetManifest::split_ids() const {
  std::set<int> ids;
  for (const auto& e : entries) ids.insert(e.split_id);
  return {ids.begin(), ids.end()};
}

std::vector<ManifestEntry> DatasetManifest::select(int split_id, FoldRole role) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split_id == split_id && e.fold_role == role) out.push_back(e);
  return out;
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(ErrorKind::Validation, where + ": unknown key '" + key + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

DatasetManifest parse_manifest(const std::string& json_text, const fs::path& base_dir) {
  const json doc = parse_json(json_text, "manifest");
  if (!doc.is_object()) fail(ErrorKind::Format, "manifest: top level must be an object");
  reject_unknown_keys(doc, {"pixel_size_mm", "splits"}, "manifest");

  DatasetManifest m;
  if (doc.contains("pixel_size_mm")) {
    const auto& ps = doc["pixel_size_mm"];
    if (ps.is_array())
      fail(ErrorKind::Unsupported, "pixel_size_mm: anisotropic spacing is not supported");
    if (!ps.is_number() || ps.get<double>() <= 0.0)
      fail(ErrorKind::Validation, "pixel_size_mm: must be a positive number");
    m.pixel_size_mm = ps.get<double>();
  }
  if (!doc.contains("splits") || !doc["splits"].is_array())
    fail(ErrorKind::Format, "manifest: missing 'splits' array");

  std::set<int> seen_ids;
  for (std::size_t si = 0; si < doc["splits"].size(); ++si) {
    const auto& split = doc["splits"][si];
    const std::string where = "splits[" + std::to_string(si) + "]";
    if (!split.is_object()) fail(ErrorKind::Format, where + ": must be an object");
    reject_unknown_keys(split, {"id", "entries"}, where);
    if (!split.contains("id") || !split["id"].is_number_integer())
      fail(ErrorKind::Validation, where + ".id: must be an integer");
    const int id = split["id"].get<int>();
    if (id < 0) fail(ErrorKind::Validation, where + ".id: must be >= 0");
    if (!seen_ids.insert(id).second)
      fail(ErrorKind::Validation, where + ".id: duplicate split id " + std::to_string(id));
    if (!split.contains("entries") || !split["entries"].is_array())
      fail(ErrorKind::Format, where + ": missing 'entries' array");

    std::set<fs::path> images;
    for (std::size_t ei = 0; ei < split["entries"].size(); ++ei) {
      const auto& e = split["entries"][ei];
      const std::string ew = where + ".entries[" + std::to_string(ei) + "]";
      if (!e.is_object()) fail(ErrorKind::Format, ew + ": must be an object");
      reject_unknown_keys(e, {"image", "annotation", "role"}, ew);
      if (!e.contains("image") || !e["image"].is_string())
        fail(ErrorKind::Validation, ew + ".image: must be a path string");
      ManifestEntry entry;
      entry.image_path = resolve(base_dir, e["image"].get<std::string>());
      entry.split_id = id;
      if (e.contains("annotation") && !e["annotation"].is_null()) {
        if (!e["annotation"].is_string())
          fail(ErrorKind::Validation, ew + ".annotation: must be a path string or null");
        entry.annotation_path = resolve(base_dir, e["annotation"].get<std::string>());
      }
      if (!e.contains("role") || !e["role"].is_string())
        fail(ErrorKind::Validation, ew + ".role: must be one of train|validation|test");
      try {
        entry.fold_role = parse_fold_role(e["role"].get<std::string>());
      } catch (const Error& err) {
        fail(ErrorKind::Validation, ew + ".role: " + err.what());
      }
      if (!images.insert(entry.image_path).second)
        fail(ErrorKind::Validation, ew + ".image: duplicate image within split");
      m.entries.push_back(std::move(entry));
    }
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  check_exists(path);
  return parse_manifest(read_text(path), path.parent_path());
}

std::string image_stem(const fs::path& image_path) { return image_path.stem().string(); }

}  // namespace mmsift
