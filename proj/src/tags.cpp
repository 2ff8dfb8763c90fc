#include "ticl/tags.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ticl/error.hpp"
#include "ticl/text.hpp"

namespace ticl::tags {
namespace {

void check_probability(const ScoredLabel& s) {
  if (!std::isfinite(s.probability) || s.probability < 0.0 || s.probability > 1.0) {
    throw ValidationError("probability of '" + s.label + "' outside [0, 1]");
  }
}

template <std::size_t N>
void check_vocabulary(const ScoredLabel& s, const std::array<std::string_view, N>& vocab,
                      std::string_view what) {
  if (std::find(vocab.begin(), vocab.end(), s.label) == vocab.end()) {
    throw ValidationError("unknown " + std::string(what) + " label '" + s.label + "'");
  }
}

bool ranks_before(const ScoredLabel& a, const ScoredLabel& b) {
  if (a.probability != b.probability) return a.probability > b.probability;
  return a.label < b.label;
}

// Keeps the max probability per label, then applies the canonical order.
std::vector<ScoredLabel> rank_dedup(std::vector<ScoredLabel> items) {
  std::map<std::string, double> best;
  for (auto& s : items) {
    auto [it, inserted] = best.emplace(s.label, s.probability);
    if (!inserted) it->second = std::max(it->second, s.probability);
  }
  std::vector<ScoredLabel> out;
  out.reserve(best.size());
  for (auto& [label, p] : best) out.push_back({label, p});
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

const ScoredLabel* top_of(std::span<const ScoredLabel> scores) {
  const ScoredLabel* top = nullptr;
  for (const auto& s : scores) {
    if (!top || ranks_before(s, *top)) top = &s;
  }
  return top;
}

std::vector<ScoredLabel> at_least(std::span<const ScoredLabel> scores, double threshold) {
  std::vector<ScoredLabel> kept;
  for (const auto& s : scores) {
    check_probability(s);
    if (s.probability >= threshold) kept.push_back(s);
  }
  return kept;
}

}  // namespace

bool TagSet::empty() const {
  return !image_type && objects.empty() && scenes.empty() && facial_expressions.empty();
}

std::optional<ScoredLabel> select_image_type(std::span<const ScoredLabel> scores,
                                             double threshold) {
  for (const auto& s : scores) {
    check_probability(s);
    check_vocabulary(s, kImageTypes, "image type");
  }
  const ScoredLabel* top = top_of(scores);
  if (top && top->probability >= threshold) return *top;
  return std::nullopt;
}

std::vector<ScoredLabel> filter_objects(std::span<const ScoredLabel> detections,
                                        double threshold) {
  return rank_dedup(at_least(detections, threshold));
}

std::vector<ScoredLabel> filter_scenes(std::span<const ScoredLabel> indoor,
                                       std::span<const ScoredLabel> outdoor, double threshold) {
  auto kept = at_least(indoor, threshold);
  auto more = at_least(outdoor, threshold);
  kept.insert(kept.end(), more.begin(), more.end());
  return rank_dedup(std::move(kept));
}

std::vector<ScoredLabel> filter_faces(std::span<const FaceDetection> faces,
                                      double face_threshold, double emotion_threshold) {
  std::vector<ScoredLabel> out;
  for (const auto& face : faces) {
    check_probability({"face", face.face_probability});
    for (const auto& e : face.emotion_scores) {
      check_probability(e);
      check_vocabulary(e, kEmotions, "emotion");
    }
    if (face.face_probability < face_threshold) continue;
    const ScoredLabel* top = top_of(face.emotion_scores);
    if (top && top->probability >= emotion_threshold) out.push_back(*top);
  }
  return out;
}

TagSet aggregate(const RawTagBundle& bundle, const Thresholds& t) {
  TagSet out;
  out.image_type = select_image_type(bundle.image_type_scores, t.image_type);
  out.objects = filter_objects(bundle.object_detections, t.object);
  out.scenes = filter_scenes(bundle.scene_scores_indoor, bundle.scene_scores_outdoor, t.scene);
  out.facial_expressions = rank_dedup(filter_faces(bundle.face_detections, t.face, t.emotion));
  return out;
}

RawTagBundle to_bundle(const TagSet& tags) {
  RawTagBundle b;
  if (tags.image_type) b.image_type_scores.push_back(*tags.image_type);
  b.object_detections = tags.objects;
  b.scene_scores_indoor = tags.scenes;
  for (const auto& e : tags.facial_expressions) {
    b.face_detections.push_back({1.0, {e}});
  }
  return b;
}

std::string render_tagset(const TagSet& tags) {
  if (tags.empty()) return std::string(kNoTagsSentinel);
  std::vector<std::string> groups;
  if (tags.image_type) groups.push_back(tags.image_type->label);
  for (const auto* group : {&tags.objects, &tags.scenes, &tags.facial_expressions}) {
    if (!group->empty()) groups.push_back(text::join(labels_of(*group), ", "));
  }
  return text::join(groups, "; ");
}

std::vector<std::string> labels_of(std::span<const ScoredLabel> scored) {
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.label);
  return out;
}

void validate(const RawTagBundle& b) {
  for (const auto& s : b.image_type_scores) {
    check_probability(s);
    check_vocabulary(s, kImageTypes, "image type");
  }
  for (const auto* group : {&b.object_detections, &b.scene_scores_indoor, &b.scene_scores_outdoor}) {
    for (const auto& s : *group) check_probability(s);
  }
  for (const auto& face : b.face_detections) {
    check_probability({"face", face.face_probability});
    for (const auto& e : face.emotion_scores) {
      check_probability(e);
      check_vocabulary(e, kEmotions, "emotion");
    }
  }
}

namespace {

std::vector<ScoredLabel> scored_from_json(const nlohmann::json& j, const char* key) {
  std::vector<ScoredLabel> out;
  if (!j.contains(key)) return out;
  for (const auto& item : j.at(key)) {
    out.push_back({item.at("label").get<std::string>(), item.at("probability").get<double>()});
  }
  return out;
}

nlohmann::json scored_to_json(const std::vector<ScoredLabel>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& s : v) arr.push_back({{"label", s.label}, {"probability", s.probability}});
  return arr;
}

}  // namespace

RawTagBundle bundle_from_json(const nlohmann::json& j) {
  try {
    RawTagBundle b;
    b.image_type_scores = scored_from_json(j, "image_type_scores");
    b.object_detections = scored_from_json(j, "object_detections");
    b.scene_scores_indoor = scored_from_json(j, "scene_scores_indoor");
    b.scene_scores_outdoor = scored_from_json(j, "scene_scores_outdoor");
    if (j.contains("face_detections")) {
      for (const auto& f : j.at("face_detections")) {
        b.face_detections.push_back(
            {f.at("face_probability").get<double>(), scored_from_json(f, "emotion_scores")});
      }
    }
    validate(b);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed raw tag bundle: ") + e.what());
  }
}

nlohmann::json to_json(const RawTagBundle& b) {
  auto faces = nlohmann::json::array();
  for (const auto& f : b.face_detections) {
    faces.push_back({{"face_probability", f.face_probability},
                     {"emotion_scores", scored_to_json(f.emotion_scores)}});
  }
  return {{"image_type_scores", scored_to_json(b.image_type_scores)},
          {"object_detections", scored_to_json(b.object_detections)},
          {"scene_scores_indoor", scored_to_json(b.scene_scores_indoor)},
          {"scene_scores_outdoor", scored_to_json(b.scene_scores_outdoor)},
          {"face_detections", faces}};
}

}  // namespace ticl::tags
