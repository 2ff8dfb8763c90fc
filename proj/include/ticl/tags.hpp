#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ticl::tags {

inline constexpr std::array<std::string_view, 4> kImageTypes = {"image", "sketch", "cartoon",
                                                                "painting"};
inline constexpr std::array<std::string_view, 7> kEmotions = {
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};

struct ScoredLabel {
  std::string label;
  double probability = 0.0;

  bool operator==(const ScoredLabel&) const = default;
};

struct FaceDetection {
  double face_probability = 0.0;
  std::vector<ScoredLabel> emotion_scores;

  bool operator==(const FaceDetection&) const = default;
};

/// Unthresholded classifier output for one image.
struct RawTagBundle {
  std::vector<ScoredLabel> image_type_scores;
  std::vector<ScoredLabel> object_detections;
  std::vector<ScoredLabel> scene_scores_indoor;
  std::vector<ScoredLabel> scene_scores_outdoor;
  std::vector<FaceDetection> face_detections;

  bool operator==(const RawTagBundle&) const = default;
};

/// Retained tags. Each group is deduplicated and sorted by descending
/// probability, then label.
struct TagSet {
  std::optional<ScoredLabel> image_type;
  std::vector<ScoredLabel> objects;
  std::vector<ScoredLabel> scenes;
  std::vector<ScoredLabel> facial_expressions;

  bool empty() const;
  bool operator==(const TagSet&) const = default;
};

/// All comparisons are inclusive (probability >= threshold).
struct Thresholds {
  double image_type = 0.80;
  double object = 0.90;
  double scene = 0.80;
  double face = 0.90;
  double emotion = 0.50;
};

std::optional<ScoredLabel> select_image_type(std::span<const ScoredLabel> scores,
                                             double threshold = 0.80);
std::vector<ScoredLabel> filter_objects(std::span<const ScoredLabel> detections,
                                        double threshold = 0.90);
/// Union of both scene models; a label reported by both keeps its higher probability.
std::vector<ScoredLabel> filter_scenes(std::span<const ScoredLabel> indoor,
                                       std::span<const ScoredLabel> outdoor,
                                       double threshold = 0.80);
/// Top emotion of every confident face, one entry per face (not deduplicated).
std::vector<ScoredLabel> filter_faces(std::span<const FaceDetection> faces,
                                      double face_threshold = 0.90,
                                      double emotion_threshold = 0.50);

TagSet aggregate(const RawTagBundle& bundle, const Thresholds& thresholds = {});

/// Re-expresses retained tags as a bundle; aggregate(to_bundle(t)) == t.
RawTagBundle to_bundle(const TagSet& tags);

inline constexpr std::string_view kNoTagsSentinel = "no visual tags";

/// "type; obj1, obj2; scene; emotion" with empty groups omitted.
std::string render_tagset(const TagSet& tags);

std::vector<std::string> labels_of(std::span<const ScoredLabel> scored);

/// Checks probabilities and the fixed image-type/emotion vocabularies.
void validate(const RawTagBundle& bundle);

RawTagBundle bundle_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RawTagBundle& bundle);

}  // namespace ticl::tags
