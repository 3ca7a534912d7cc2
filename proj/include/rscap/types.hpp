#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rscap/util.hpp"

namespace rscap {

/// Pixel-space object annotation. xmax/ymax are exclusive, so a box covering
/// pixel column c alone has xmin=c, xmax=c+1 and full-image boxes reach
/// exactly (width, height).
struct BBox {
  std::string label;
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double area() const { return (xmax - xmin) * (ymax - ymin); }
  double center_x() const { return (xmin + xmax) / 2.0; }
  double center_y() const { return (ymin + ymax) / 2.0; }
  bool valid() const { return !label.empty() && xmin < xmax && ymin < ymax; }
};

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

/// One image plus its normalized annotations: either a list of boxes or a
/// single class label, never both.
struct ImageRecord {
  std::string id;
  std::string source_dataset;
  std::string path;
  int width = 0;
  int height = 0;
  Split split = Split::Train;
  std::vector<BBox> bboxes;
  std::optional<std::string> class_label;
  std::optional<std::string> parent_id;
  std::optional<int> tile_index;
  // Offset of a tile inside its parent, kept in memory for cropping only.
  std::optional<std::pair<int, int>> tile_origin;

  bool annotated() const { return class_label.has_value() || !bboxes.empty(); }
};

inline void validate_record(const ImageRecord& r) {
  if (r.width <= 0 || r.height <= 0)
    throw ValidationError("record " + r.id + ": non-positive dimensions");
  if (r.class_label && !r.bboxes.empty())
    throw ValidationError("record " + r.id + ": both class and bboxes present");
  for (const auto& b : r.bboxes) {
    if (!b.valid())
      throw ValidationError("record " + r.id + ": degenerate bbox");
    if (b.xmin < 0 || b.ymin < 0 || b.xmax > r.width || b.ymax > r.height)
      throw ValidationError("record " + r.id + ": bbox outside image");
  }
}

// ------------------------------------------------------ manifest schema
//
// One JSON object per line:
// {"id","source","path","width","height","split","class","bboxes","parent_id"}

inline ordered_json record_to_json(const ImageRecord& r) {
  ordered_json boxes = ordered_json::array();
  for (const auto& b : r.bboxes)
    boxes.push_back({{"label", b.label},
                     {"xmin", b.xmin},
                     {"ymin", b.ymin},
                     {"xmax", b.xmax},
                     {"ymax", b.ymax}});
  ordered_json j;
  j["id"] = r.id;
  j["source"] = r.source_dataset;
  j["path"] = r.path;
  j["width"] = r.width;
  j["height"] = r.height;
  j["split"] = to_string(r.split);
  j["class"] = r.class_label ? ordered_json(*r.class_label) : nullptr;
  j["bboxes"] = boxes;
  j["parent_id"] = r.parent_id ? ordered_json(*r.parent_id) : nullptr;
  return j;
}

/// Throws ValidationError with the offending field; callers decide whether
/// that is fatal or becomes a per-row error record.
inline ImageRecord record_from_json(const ordered_json& j) {
  ImageRecord r;
  r.id = j.at("id").get<std::string>();
  r.source_dataset = j.value("source", std::string{});
  r.path = j.value("path", std::string{});
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  auto split = parse_split(j.value("split", "train"));
  if (!split) throw ValidationError("bad split");
  r.split = *split;
  if (j.contains("class") && !j.at("class").is_null())
    r.class_label = j.at("class").get<std::string>();
  if (j.contains("bboxes")) {
    for (const auto& bj : j.at("bboxes")) {
      BBox b;
      b.label = bj.at("label").get<std::string>();
      b.xmin = bj.at("xmin").get<double>();
      b.ymin = bj.at("ymin").get<double>();
      b.xmax = bj.at("xmax").get<double>();
      b.ymax = bj.at("ymax").get<double>();
      if (b.xmax <= b.xmin || b.ymax <= b.ymin)
        throw ValidationError("degenerate bbox");
      if (b.label.empty()) throw ValidationError("empty bbox label");
      r.bboxes.push_back(std::move(b));
    }
  }
  if (j.contains("parent_id") && !j.at("parent_id").is_null()) {
    r.parent_id = j.at("parent_id").get<std::string>();
    // tile children encode their index as an "#t<k>" id suffix
    auto pos = r.id.rfind("#t");
    if (pos != std::string::npos) {
      try {
        r.tile_index = std::stoi(r.id.substr(pos + 2));
      } catch (...) {
      }
    }
  }
  return r;
}

// --------------------------------------------------------- cleaning rules

struct CleaningRules {
  std::set<std::string> drop_labels;
  std::map<std::string, std::string> rename_map;
};

/// Rejects rename cycles and overlap between drops and rename keys.
inline void validate_rules(const CleaningRules& rules) {
  for (const auto& [key, _] : rules.rename_map)
    if (rules.drop_labels.count(key))
      throw ValidationError("label '" + key + "' is both dropped and renamed");
  for (const auto& [start, _] : rules.rename_map) {
    std::set<std::string> seen{start};
    std::string cur = start;
    while (true) {
      auto it = rules.rename_map.find(cur);
      if (it == rules.rename_map.end()) break;
      cur = it->second;
      if (!seen.insert(cur).second)
        throw ValidationError("rename cycle involving '" + cur + "'");
    }
  }
}

/// Follows rename chains to their fixpoint so cleaning is idempotent.
inline std::string resolve_rename(const CleaningRules& rules,
                                  std::string label) {
  while (true) {
    auto it = rules.rename_map.find(label);
    if (it == rules.rename_map.end()) return label;
    label = it->second;
  }
}

inline CleaningRules rules_from_json(const ordered_json& j) {
  CleaningRules rules;
  for (const auto& d : j.value("drop_labels", ordered_json::array()))
    rules.drop_labels.insert(d.get<std::string>());
  if (j.contains("rename"))
    for (const auto& [k, v] : j.at("rename").items())
      rules.rename_map[k] = v.get<std::string>();
  validate_rules(rules);
  return rules;
}

}  // namespace rscap
