#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "rscap/genbridge.hpp"
#include "rscap/image.hpp"
#include "rscap/types.hpp"
#include "rscap/util.hpp"

namespace rscap::rulegen {

// -------------------------------------------------------- pluralization

/// Suffix rules plus an irregular-noun table. Multi-word labels pluralize
/// their final word; underscores render as spaces.
class Pluralizer {
 public:
  Pluralizer() {
    irregulars_ = {{"person", "people"}, {"child", "children"},
                   {"man", "men"},       {"woman", "women"},
                   {"foot", "feet"},     {"tooth", "teeth"},
                   {"goose", "geese"},   {"mouse", "mice"},
                   {"sheep", "sheep"},   {"aircraft", "aircraft"},
                   {"deer", "deer"},     {"species", "species"}};
  }

  /// Two-column UTF-8 file, "singular<TAB>plural" per line. Replaces the
  /// built-in table.
  static Pluralizer from_file(const fs::path& path) {
    Pluralizer p;
    p.irregulars_.clear();
    for (const auto& line : read_lines(path)) {
      if (trim(line).empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw ValidationError("bad irregular-plural line: " + line);
      p.irregulars_[trim(line.substr(0, tab))] = trim(line.substr(tab + 1));
    }
    return p;
  }

  std::string pluralize(const std::string& word) const {
    auto it = irregulars_.find(word);
    if (it != irregulars_.end()) return it->second;
    auto ends_with = [&](std::string_view suffix) {
      return word.size() >= suffix.size() &&
             word.compare(word.size() - suffix.size(), suffix.size(),
                          suffix) == 0;
    };
    auto is_vowel = [](char c) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
    };
    if (ends_with("s") || ends_with("x") || ends_with("z") ||
        ends_with("ch") || ends_with("sh"))
      return word + "es";
    if (word.size() >= 2 && ends_with("y") && !is_vowel(word[word.size() - 2]))
      return word.substr(0, word.size() - 1) + "ies";
    return word + "s";
  }

  /// "three cars", "one bus", "12 factories"
  std::string count_phrase(const std::string& label, int n) const {
    if (n < 1) throw std::invalid_argument("count_phrase: n must be >= 1");
    static const char* words[] = {"one", "two",   "three", "four", "five",
                                  "six", "seven", "eight", "nine", "ten"};
    std::string number =
        n <= 10 ? words[n - 1] : std::to_string(n);
    std::string display = replace_all(label, "_", " ");
    if (n > 1) {
      auto last_space = display.rfind(' ');
      if (last_space == std::string::npos) {
        display = pluralize(display);
      } else {
        display = display.substr(0, last_space + 1) +
                  pluralize(display.substr(last_space + 1));
      }
    }
    return number + " " + display;
  }

 private:
  std::map<std::string, std::string> irregulars_;
};

inline std::string count_phrase(const std::string& label, int n) {
  static const Pluralizer default_pluralizer;
  return default_pluralizer.count_phrase(label, n);
}

// ------------------------------------------------------ region geometry

enum class Region { Center, Edge };

/// Center membership is decided by the box midpoint against the half-open
/// rectangle [w/4, 3w/4) x [h/4, 3h/4).
inline Region classify_region(const BBox& box, int width, int height) {
  double cx = box.center_x();
  double cy = box.center_y();
  bool center = cx >= width / 4.0 && cx < 3.0 * width / 4.0 &&
                cy >= height / 4.0 && cy < 3.0 * height / 4.0;
  return center ? Region::Center : Region::Edge;
}

// --------------------------------------------------------- box captions

struct RuleCaption {
  std::string image_id;
  std::string sentence_rule1;  // all objects
  std::string sentence_rule2;  // center/edge breakdown
  std::string method = "A2D";
};

namespace detail {

struct ClassCount {
  std::string label;
  int count = 0;
};

/// Counts per class in first-appearance order.
inline std::vector<ClassCount> count_classes(const std::vector<BBox>& boxes) {
  std::vector<ClassCount> counts;
  for (const auto& b : boxes) {
    auto it = std::find_if(counts.begin(), counts.end(),
                           [&](const ClassCount& c) { return c.label == b.label; });
    if (it == counts.end())
      counts.push_back({b.label, 1});
    else
      ++it->count;
  }
  return counts;
}

inline std::vector<std::string> phrases(const std::vector<ClassCount>& counts,
                                        const Pluralizer& plural) {
  std::vector<std::string> out;
  for (const auto& c : counts) out.push_back(plural.count_phrase(c.label, c.count));
  return out;
}

inline int total(const std::vector<ClassCount>& counts) {
  int n = 0;
  for (const auto& c : counts) n += c.count;
  return n;
}

inline std::string there_verb(int total_count) {
  return total_count == 1 ? "There is " : "There are ";
}

}  // namespace detail

/// Realizes the two rule sentences: every annotated object, then the
/// center/edge breakdown. If one region is empty that clause is dropped.
inline RuleCaption caption_from_boxes(const std::vector<BBox>& boxes,
                                      int width, int height,
                                      const Pluralizer& plural = {}) {
  if (boxes.empty())
    throw std::invalid_argument("nothing to describe: empty bbox list");

  auto all_counts = detail::count_classes(boxes);
  RuleCaption cap;
  cap.sentence_rule1 = detail::there_verb(detail::total(all_counts)) +
                       join_natural(detail::phrases(all_counts, plural)) +
                       " in this image.";

  std::vector<BBox> center, edge;
  for (const auto& b : boxes)
    (classify_region(b, width, height) == Region::Center ? center : edge)
        .push_back(b);
  auto center_counts = detail::count_classes(center);
  auto edge_counts = detail::count_classes(edge);

  std::string body;
  if (!center.empty())
    body += join_natural(detail::phrases(center_counts, plural)) +
            " in the center of this image";
  if (!center.empty() && !edge.empty()) body += " and ";
  if (!edge.empty())
    body += join_natural(detail::phrases(edge_counts, plural)) +
            " at the edge of this image";
  cap.sentence_rule2 =
      detail::there_verb(static_cast<int>(boxes.size())) + body + ".";
  return cap;
}

// ----------------------------------------------------------- mask to box

using LabelTable = std::map<int, std::string>;

/// Lines of "index<TAB>class name". Index 0 is background by convention and
/// needs no entry.
inline LabelTable load_label_table(const fs::path& path) {
  LabelTable table;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ValidationError("bad label-table line: " + line);
    table[std::stoi(line.substr(0, tab))] = trim(line.substr(tab + 1));
  }
  return table;
}

/// Tight boxes around connected components of equal mask label. Default
/// 4-connectivity; 8-connectivity available via the flag.
inline std::vector<BBox> mask_to_boxes(const GrayImage& mask,
                                       const LabelTable& table,
                                       bool eight_connected = false) {
  std::vector<int> unknown;
  for (uint8_t v : mask.pixels) {
    if (v == 0) continue;
    if (!table.count(v) &&
        std::find(unknown.begin(), unknown.end(), v) == unknown.end())
      unknown.push_back(v);
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    std::vector<std::string> parts;
    for (int v : unknown) parts.push_back(std::to_string(v));
    throw ValidationError("mask labels missing from table: " +
                          join(parts, ", "));
  }

  std::vector<BBox> boxes;
  std::vector<uint8_t> visited(mask.pixels.size(), 0);
  const int dx4[] = {1, -1, 0, 0}, dy4[] = {0, 0, 1, -1};
  const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1},
            dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int* dx = eight_connected ? dx8 : dx4;
  const int* dy = eight_connected ? dy8 : dy4;
  int n_dirs = eight_connected ? 8 : 4;

  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      size_t idx = size_t(y) * mask.width + x;
      uint8_t label = mask.pixels[idx];
      if (label == 0 || visited[idx]) continue;
      int min_x = x, max_x = x, min_y = y, max_y = y;
      std::deque<std::pair<int, int>> queue{{x, y}};
      visited[idx] = 1;
      while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        min_x = std::min(min_x, cx);
        max_x = std::max(max_x, cx);
        min_y = std::min(min_y, cy);
        max_y = std::max(max_y, cy);
        for (int d = 0; d < n_dirs; ++d) {
          int nx = cx + dx[d], ny = cy + dy[d];
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height)
            continue;
          size_t nidx = size_t(ny) * mask.width + nx;
          if (visited[nidx] || mask.pixels[nidx] != label) continue;
          visited[nidx] = 1;
          queue.emplace_back(nx, ny);
        }
      }
      BBox b;
      b.label = table.at(label);
      b.xmin = min_x;
      b.ymin = min_y;
      b.xmax = max_x + 1;
      b.ymax = max_y + 1;
      boxes.push_back(std::move(b));
    }
  }
  return boxes;
}

// ----------------------------------------------- class-folder seed flow

inline std::string class_seed_caption(const std::string& class_name) {
  if (class_name.empty())
    throw std::invalid_argument("class name must be nonempty");
  return "a photo of " + replace_all(class_name, "_", " ");
}

inline constexpr int kExpansionSampleCount = 9;
inline constexpr const char* kRelaySeedMethod = "R-M-Relay-seed";

struct ClassSample {
  std::vector<std::string> refs;  // exactly kExpansionSampleCount paths
  bool resampled = false;         // drew with replacement (folder too small)
};

/// Seeded draw of 9 image paths from one class folder; folders smaller than
/// 9 are sampled with replacement and flagged.
inline ClassSample sample_class_images(const std::vector<std::string>& paths,
                                       uint64_t seed) {
  if (paths.empty())
    throw std::invalid_argument("class folder has no images");
  std::mt19937_64 rng(splitmix64(seed));
  ClassSample sample;
  if (paths.size() >= kExpansionSampleCount) {
    for (size_t i : sample_indices(rng, paths.size(), kExpansionSampleCount))
      sample.refs.push_back(paths[i]);
  } else {
    sample.resampled = true;
    for (int i = 0; i < kExpansionSampleCount; ++i)
      sample.refs.push_back(paths[uniform_below(rng, paths.size())]);
  }
  return sample;
}

/// Asks the backend to grow the seed caption using features shared by the
/// sampled images. Image order is the sampling order.
inline gen::GenRequest build_class_expansion_request(
    const std::string& class_name, const ClassSample& sample,
    const std::string& seed_caption, const std::string& backend_profile,
    uint64_t seed) {
  if (sample.refs.size() != kExpansionSampleCount)
    throw std::invalid_argument("expansion request needs exactly 9 images");
  gen::GenRequest req;
  req.backend_profile = backend_profile;
  req.n_samples = 1;
  req.seed = seed;
  req.tag = "stage1-relay-expansion:" + class_name;
  req.flagged = sample.resampled;
  gen::ChatMessage msg;
  msg.role = "user";
  msg.text =
      "The attached images all belong to the category \"" +
      replace_all(class_name, "_", " ") +
      "\". Expand the caption \"" + seed_caption +
      "\" into one detailed sentence using only features common to these "
      "images. Respond with the expanded caption and nothing else.";
  msg.image_refs = sample.refs;
  req.messages.push_back(std::move(msg));
  return req;
}

}  // namespace rscap::rulegen
