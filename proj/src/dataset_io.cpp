#include "stenokit/dataset_io.hpp"

#include "stenokit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

namespace stenokit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// File helpers

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// COCO compressed RLE: LEB128-like, 5 payload bits per char offset by 48, and
// counts after the second stored as deltas against the count two back.

std::string rle_to_string(const RleMask& m) {
  const auto& cnts = m.runs();
  std::string s;
  for (std::size_t i = 0; i < cnts.size(); ++i) {
    long long x = static_cast<long long>(cnts[i]);
    if (i > 2) x -= static_cast<long long>(cnts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

RleMask rle_from_string(std::string_view s, int height, int width) {
  std::vector<RleMask::Run> cnts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw ParseError("truncated compressed RLE string");
      const int c = static_cast<int>(s[p]) - 48;
      if (c < 0 || c > 63) throw ParseError("invalid character in compressed RLE string");
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
      if (k > 12) throw ParseError("compressed RLE value overflows");
    }
    if (cnts.size() > 2) x += static_cast<long long>(cnts[cnts.size() - 2]);
    if (x < 0 || x > 0xffffffffLL) throw ParseError("compressed RLE decodes to a negative run");
    cnts.push_back(static_cast<RleMask::Run>(x));
  }
  return RleMask(height, width, std::move(cnts));
}

// ---------------------------------------------------------------------------
// Parsing support

namespace {

json parse_json_text(std::string_view text, std::string_view source) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
    throw ParseError(std::string(source) + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
  }
}

// Accumulates violations while walking a document.
class Checker {
 public:
  void fail(const std::string& where, const std::string& what) { errors_.push_back(where + ": " + what); }
  bool ok() const { return errors_.empty(); }
  std::size_t count() const { return errors_.size(); }
  std::vector<std::string> take() { return std::move(errors_); }
  void throw_if_failed() {
    if (!errors_.empty()) throw ValidationError(std::move(errors_));
  }

  bool require_object(const json& j, const std::string& where) {
    if (j.is_object()) return true;
    fail(where, "expected an object");
    return false;
  }

  const json* field(const json& obj, const char* key, const std::string& where, bool required = true) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(where, std::string("missing field '") + key + "'");
      return nullptr;
    }
    return &*it;
  }

  template <typename Int>
  bool integer(const json& obj, const char* key, const std::string& where, Int& out, bool required = true) {
    const json* v = field(obj, key, where, required);
    if (!v) return !required;
    if (!v->is_number_integer()) {
      fail(where + "." + key, "expected an integer");
      return false;
    }
    out = v->get<Int>();
    return true;
  }

  bool number(const json& obj, const char* key, const std::string& where, double& out) {
    const json* v = field(obj, key, where);
    if (!v) return false;
    if (!v->is_number()) {
      fail(where + "." + key, "expected a number");
      return false;
    }
    out = v->get<double>();
    if (!std::isfinite(out)) {
      fail(where + "." + key, "must be finite");
      return false;
    }
    return true;
  }

  bool xywh(const json& obj, const char* key, const std::string& where, Xywh& out) {
    const json* v = field(obj, key, where);
    if (!v) return false;
    if (!v->is_array() || v->size() != 4) {
      fail(where + "." + key, "expected [x, y, w, h]");
      return false;
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(*v)[i].is_number()) {
        fail(where + "." + key, "expected numeric entries");
        return false;
      }
      out[i] = (*v)[i].get<double>();
    }
    if (!std::all_of(out.begin(), out.end(), [](double d) { return std::isfinite(d); })) {
      fail(where + "." + key, "entries must be finite");
      return false;
    }
    if (out[2] < 0.0 || out[3] < 0.0) {
      fail(where + "." + key, "width and height must be non-negative");
      return false;
    }
    return true;
  }

  bool segmentation(const json& obj, const std::string& where, Segmentation& out) {
    auto it = obj.find("segmentation");
    if (it == obj.end() || it->is_null()) {
      out = std::monostate{};
      return true;
    }
    const std::string here = where + ".segmentation";
    if (it->is_array()) {
      std::vector<Polygon> polys;
      for (std::size_t i = 0; i < it->size(); ++i) {
        const json& pj = (*it)[i];
        const std::string pw = here + "[" + std::to_string(i) + "]";
        if (!pj.is_array() || pj.size() < 6 || pj.size() % 2 != 0) {
          fail(pw, "polygon must be a flat list of at least 3 (x, y) pairs");
          return false;
        }
        std::vector<double> coords;
        coords.reserve(pj.size());
        for (const auto& c : pj) {
          if (!c.is_number() || !std::isfinite(c.get<double>())) {
            fail(pw, "polygon coordinates must be finite numbers");
            return false;
          }
          coords.push_back(c.get<double>());
        }
        polys.push_back(Polygon::from_flat(coords));
      }
      out = std::move(polys);
      return true;
    }
    if (it->is_object()) {
      const json* size = field(*it, "size", here);
      const json* counts = field(*it, "counts", here);
      if (!size || !counts) return false;
      if (!size->is_array() || size->size() != 2 || !(*size)[0].is_number_integer() ||
          !(*size)[1].is_number_integer() || (*size)[0].get<long long>() < 0 || (*size)[1].get<long long>() < 0) {
        fail(here + ".size", "expected [height, width]");
        return false;
      }
      const int h = (*size)[0].get<int>();
      const int w = (*size)[1].get<int>();
      try {
        if (counts->is_string()) {
          out = rle_from_string(counts->get<std::string>(), h, w);
        } else if (counts->is_array()) {
          std::vector<RleMask::Run> runs;
          for (const auto& c : *counts) {
            if (!c.is_number_unsigned()) throw ShapeMismatch("counts must be non-negative integers");
            runs.push_back(c.get<RleMask::Run>());
          }
          out = RleMask(h, w, std::move(runs));
        } else {
          fail(here + ".counts", "expected a string or an integer list");
          return false;
        }
      } catch (const InputError& e) {
        fail(here, e.what());
        return false;
      }
      return true;
    }
    fail(here, "expected a polygon list or an RLE object");
    return false;
  }

 private:
  std::vector<std::string> errors_;
};

ordered_json rle_json(const RleMask& m) {
  ordered_json j;
  j["size"] = {m.height(), m.width()};
  j["counts"] = rle_to_string(m);
  return j;
}

ordered_json segmentation_json(const Segmentation& seg) {
  if (const auto* polys = std::get_if<std::vector<Polygon>>(&seg)) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : *polys) arr.push_back(p.to_flat());
    return arr;
  }
  if (const auto* rle = std::get_if<RleMask>(&seg)) return rle_json(*rle);
  return nullptr;
}

ordered_json xywh_json(const Xywh& b) { return ordered_json::array({b[0], b[1], b[2], b[3]}); }

}  // namespace

// ---------------------------------------------------------------------------
// Ground truth

const ImageInfo* GroundTruthSet::find_image(ImageId id) const {
  auto it = std::find_if(images.begin(), images.end(), [&](const ImageInfo& im) { return im.id == id; });
  return it == images.end() ? nullptr : &*it;
}

std::vector<ImageId> GroundTruthSet::image_ids() const {
  std::vector<ImageId> ids;
  ids.reserve(images.size());
  for (const auto& im : images) ids.push_back(im.id);
  return ids;
}

void validate(const GroundTruthSet& gt) {
  Checker ck;
  std::map<ImageId, const ImageInfo*> images;
  for (std::size_t i = 0; i < gt.images.size(); ++i) {
    const auto& im = gt.images[i];
    const std::string where = "images[" + std::to_string(i) + "]";
    if (!images.emplace(im.id, &im).second) ck.fail(where, "duplicate image id " + std::to_string(im.id));
    if (im.width <= 0 || im.height <= 0) ck.fail(where, "width and height must be positive");
  }
  std::set<int> categories;
  for (std::size_t i = 0; i < gt.categories.size(); ++i) {
    if (!categories.insert(gt.categories[i].id).second) {
      ck.fail("categories[" + std::to_string(i) + "]", "duplicate category id " + std::to_string(gt.categories[i].id));
    }
  }
  std::set<std::int64_t> ann_ids;
  for (std::size_t i = 0; i < gt.annotations.size(); ++i) {
    const auto& a = gt.annotations[i];
    const std::string where = "annotations[" + std::to_string(i) + "]";
    if (!ann_ids.insert(a.id).second) ck.fail(where, "duplicate annotation id " + std::to_string(a.id));
    if (!categories.count(a.category_id)) {
      ck.fail(where, "references missing category " + std::to_string(a.category_id));
    }
    if (!(a.area > 0.0) || !std::isfinite(a.area)) ck.fail(where, "area must be positive");
    const auto& b = a.bbox;
    if (!std::all_of(b.begin(), b.end(), [](double d) { return std::isfinite(d); }) || b[2] < 0.0 || b[3] < 0.0) {
      ck.fail(where, "bbox must be finite with non-negative size");
      continue;
    }
    auto im = images.find(a.image_id);
    if (im == images.end()) {
      ck.fail(where, "references missing image " + std::to_string(a.image_id));
      continue;
    }
    const ImageInfo& info = *im->second;
    if (b[0] >= info.width || b[1] >= info.height || b[0] + b[2] <= 0.0 || b[1] + b[3] <= 0.0) {
      ck.fail(where, "bbox lies outside its image");
    }
    if (const auto* rle = std::get_if<RleMask>(&a.segmentation)) {
      if (rle->height() != info.height || rle->width() != info.width) {
        ck.fail(where, "RLE size does not match its image");
      }
    }
  }
  ck.throw_if_failed();
}

RleMask annotation_mask(const GroundTruthSet& gt, const Annotation& ann) {
  const ImageInfo* im = gt.find_image(ann.image_id);
  if (!im) throw ValidationError({"annotation " + std::to_string(ann.id) + " references missing image"});
  if (const auto* polys = std::get_if<std::vector<Polygon>>(&ann.segmentation)) {
    return polygons_to_mask(*polys, im->height, im->width);
  }
  if (const auto* rle = std::get_if<RleMask>(&ann.segmentation)) return *rle;
  throw MissingMask("annotation " + std::to_string(ann.id) + " has no segmentation");
}

GroundTruthSet parse_ground_truth(std::string_view text, std::string_view source) {
  const json doc = parse_json_text(text, source);
  Checker ck;
  GroundTruthSet gt;
  if (!ck.require_object(doc, std::string(source))) ck.throw_if_failed();

  auto array_field = [&](const char* key) -> const json* {
    const json* v = ck.field(doc, key, std::string(source));
    if (v && !v->is_array()) {
      ck.fail(std::string(source) + "." + key, "expected an array");
      return nullptr;
    }
    return v;
  };

  if (const json* arr = array_field("images")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& j = (*arr)[i];
      const std::string where = "images[" + std::to_string(i) + "]";
      if (!ck.require_object(j, where)) continue;
      ImageInfo im;
      bool good = ck.integer(j, "id", where, im.id);
      good &= ck.integer(j, "width", where, im.width);
      good &= ck.integer(j, "height", where, im.height);
      if (const json* fn = ck.field(j, "file_name", where, false)) {
        if (fn->is_string()) {
          im.file_name = fn->get<std::string>();
        } else {
          ck.fail(where + ".file_name", "expected a string");
          good = false;
        }
      }
      if (good) gt.images.push_back(std::move(im));
    }
  }
  if (const json* arr = array_field("categories")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& j = (*arr)[i];
      const std::string where = "categories[" + std::to_string(i) + "]";
      if (!ck.require_object(j, where)) continue;
      Category c;
      bool good = ck.integer(j, "id", where, c.id);
      if (const json* n = ck.field(j, "name", where, false)) {
        if (n->is_string()) {
          c.name = n->get<std::string>();
        } else {
          ck.fail(where + ".name", "expected a string");
          good = false;
        }
      }
      if (good) gt.categories.push_back(std::move(c));
    }
  }
  if (const json* arr = array_field("annotations")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& j = (*arr)[i];
      const std::string where = "annotations[" + std::to_string(i) + "]";
      if (!ck.require_object(j, where)) continue;
      Annotation a;
      bool good = ck.integer(j, "id", where, a.id);
      good &= ck.integer(j, "image_id", where, a.image_id);
      good &= ck.integer(j, "category_id", where, a.category_id);
      good &= ck.xywh(j, "bbox", where, a.bbox);
      good &= ck.number(j, "area", where, a.area);
      good &= ck.integer(j, "iscrowd", where, a.iscrowd, false);
      good &= ck.segmentation(j, where, a.segmentation);
      if (good) gt.annotations.push_back(std::move(a));
    }
  }
  // Semantic checks run on whatever parsed, so one report covers both.
  std::vector<std::string> errors = ck.take();
  try {
    validate(gt);
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.violations().begin(), e.violations().end());
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return gt;
}

GroundTruthSet load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_file(path), path.string());
}

std::string serialize_ground_truth(const GroundTruthSet& gt) {
  ordered_json doc;
  doc["images"] = ordered_json::array();
  for (const auto& im : gt.images) {
    ordered_json j;
    j["id"] = im.id;
    j["width"] = im.width;
    j["height"] = im.height;
    j["file_name"] = im.file_name;
    doc["images"].push_back(std::move(j));
  }
  doc["categories"] = ordered_json::array();
  for (const auto& c : gt.categories) {
    ordered_json j;
    j["id"] = c.id;
    j["name"] = c.name;
    doc["categories"].push_back(std::move(j));
  }
  doc["annotations"] = ordered_json::array();
  for (const auto& a : gt.annotations) {
    ordered_json j;
    j["id"] = a.id;
    j["image_id"] = a.image_id;
    j["category_id"] = a.category_id;
    j["segmentation"] = segmentation_json(a.segmentation);
    j["bbox"] = xywh_json(a.bbox);
    j["area"] = a.area;
    j["iscrowd"] = a.iscrowd;
    doc["annotations"].push_back(std::move(j));
  }
  return doc.dump() + "\n";
}

void save_ground_truth(const GroundTruthSet& gt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_ground_truth(gt));
}

// ---------------------------------------------------------------------------
// Detections

DetectionFile parse_detections(std::string_view text, std::string_view source) {
  const json doc = parse_json_text(text, source);
  Checker ck;
  const json* records = nullptr;
  if (doc.is_array()) {
    records = &doc;
  } else if (doc.is_object()) {
    const json* schema = ck.field(doc, "$schema", std::string(source));
    if (schema && (!schema->is_string() || schema->get<std::string>() != kDetectionsSchema)) {
      ck.fail(std::string(source) + ".$schema", "unsupported schema (expected " + std::string(kDetectionsSchema) + ")");
    }
    records = ck.field(doc, "detections", std::string(source));
    if (records && !records->is_array()) {
      ck.fail(std::string(source) + ".detections", "expected an array");
      records = nullptr;
    }
  } else {
    ck.fail(std::string(source), "expected an array or an object");
  }

  DetectionFile out;
  if (records) {
    out.records.reserve(records->size());
    for (std::size_t i = 0; i < records->size(); ++i) {
      const json& j = (*records)[i];
      const std::string where = "detections[" + std::to_string(i) + "]";
      if (!ck.require_object(j, where)) continue;
      DetectionRecord r;
      bool good = ck.integer(j, "image_id", where, r.image_id);
      good &= ck.integer(j, "category_id", where, r.category_id);
      if (ck.number(j, "score", where, r.score)) {
        if (r.score < 0.0 || r.score > 1.0) {
          ck.fail(where + ".score", "must lie in [0, 1], got " + std::to_string(r.score));
          good = false;
        }
      } else {
        good = false;
      }
      good &= ck.xywh(j, "bbox", where, r.bbox);
      good &= ck.segmentation(j, where, r.segmentation);
      if (good) out.records.push_back(std::move(r));
    }
  }
  ck.throw_if_failed();
  return out;
}

DetectionFile load_detections(const std::filesystem::path& path) {
  return parse_detections(read_file(path), path.string());
}

std::string serialize_detections(const DetectionFile& file) {
  ordered_json doc;
  doc["$schema"] = kDetectionsSchema;
  doc["detections"] = ordered_json::array();
  for (const auto& r : file.records) {
    ordered_json j;
    j["image_id"] = r.image_id;
    j["category_id"] = r.category_id;
    j["score"] = r.score;
    j["bbox"] = xywh_json(r.bbox);
    if (!std::holds_alternative<std::monostate>(r.segmentation)) j["segmentation"] = segmentation_json(r.segmentation);
    doc["detections"].push_back(std::move(j));
  }
  return doc.dump() + "\n";
}

void save_detections(const DetectionFile& file, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_detections(file));
}

namespace {

DetectionsByImage resolve(const DetectionFile& file, const GroundTruthSet* gt) {
  Checker ck;
  DetectionsByImage out;
  if (gt) {
    for (const auto& im : gt->images) out[im.id];
  }
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    const auto& r = file.records[i];
    const std::string where = "detections[" + std::to_string(i) + "]";
    const ImageInfo* im = gt ? gt->find_image(r.image_id) : nullptr;
    if (gt && !im) {
      ck.fail(where, "references image " + std::to_string(r.image_id) + " absent from the ground truth");
      continue;
    }
    Detection d;
    d.image_id = r.image_id;
    d.class_id = r.category_id;
    d.score = r.score;
    d.box = BBox::from_xywh(r.bbox);
    if (const auto* polys = std::get_if<std::vector<Polygon>>(&r.segmentation)) {
      if (!im) {
        ck.fail(where, "polygon segmentation needs ground-truth image sizes");
        continue;
      }
      d.mask = polygons_to_mask(*polys, im->height, im->width);
    } else if (const auto* rle = std::get_if<RleMask>(&r.segmentation)) {
      if (im && (rle->height() != im->height || rle->width() != im->width)) {
        ck.fail(where, "mask size does not match image " + std::to_string(im->id));
        continue;
      }
      d.mask = *rle;
    }
    out[r.image_id].push_back(std::move(d));
  }
  ck.throw_if_failed();
  return out;
}

}  // namespace

DetectionsByImage to_detections(const DetectionFile& file, const GroundTruthSet& gt) { return resolve(file, &gt); }

DetectionsByImage to_detections(const DetectionFile& file) { return resolve(file, nullptr); }

DetectionFile to_detection_file(const DetectionsByImage& dets) {
  DetectionFile out;
  for (const auto& [image, list] : dets) {
    for (const auto& d : list) {
      DetectionRecord r;
      r.image_id = image;
      r.category_id = d.class_id;
      r.score = d.score;
      r.bbox = d.box.to_xywh();
      if (d.mask) r.segmentation = *d.mask;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

// Unbiased draw in [0, bound) from the standardized mt19937_64 stream, so the
// partition does not depend on the standard library's distributions.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::vector<GroundTruthSet> split(const GroundTruthSet& gt, std::span<const std::size_t> sizes, std::uint64_t seed) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != gt.images.size()) {
    throw SizeMismatch("split sizes sum to " + std::to_string(total) + " but the set has " +
                       std::to_string(gt.images.size()) + " images");
  }
  std::vector<ImageId> ids = gt.image_ids();
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[bounded(rng, i)]);

  std::map<ImageId, std::size_t> part_of;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    for (std::size_t k = 0; k < sizes[p]; ++k) part_of[ids[offset + k]] = p;
    offset += sizes[p];
  }

  std::vector<GroundTruthSet> parts(sizes.size());
  for (auto& part : parts) part.categories = gt.categories;
  for (const auto& im : gt.images) parts[part_of.at(im.id)].images.push_back(im);
  for (const auto& a : gt.annotations) {
    auto it = part_of.find(a.image_id);
    if (it != part_of.end()) parts[it->second].annotations.push_back(a);
  }
  return parts;
}

}  // namespace stenokit
