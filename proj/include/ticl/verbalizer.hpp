#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/client.hpp"
#include "ticl/store.hpp"
#include "ticl/tags.hpp"

namespace ticl {

/// Client side of the image verbalization service (POST /verbalize). Fixture
/// files hold one VerbalizeResponse per line in exactly the wire schema.
struct VerbalizeRequest {
  std::string image_id;
  std::string image_path;
  std::vector<std::string> methods;
};

struct VerbalizeResponse {
  std::string image_id;
  std::map<std::string, std::string> captions;  // method_id -> caption
  std::optional<tags::RawTagBundle> raw_tags;
  std::map<std::string, std::string> errors;  // method_id -> message

  bool operator==(const VerbalizeResponse&) const = default;
};

nlohmann::json to_json(const VerbalizeRequest& r);
/// Throws ValidationError for an empty method list or unknown methods.
void validate(const VerbalizeRequest& r);

nlohmann::json to_json(const VerbalizeResponse& r);
VerbalizeResponse verbalize_response_from_json(const nlohmann::json& j);

/// Every requested method must be answered or carry an explicit error.
void check_answers(const VerbalizeRequest& request, const VerbalizeResponse& response);

std::vector<VerbalizeResponse> parse_verbalize_fixtures(std::string_view content,
                                                        const std::string& source = "<fixtures>");

/// Caption entries as-is; the "tags" entry is the rendered, thresholded tag set.
std::vector<ImageAsText> to_verbalizations(const VerbalizeResponse& response,
                                           const tags::Thresholds& thresholds = {});

class VerbalizerClient {
 public:
  explicit VerbalizerClient(std::unique_ptr<Transport> transport);
  static VerbalizerClient http(const std::string& base_url);

  VerbalizeResponse verbalize(const VerbalizeRequest& request);

 private:
  std::unique_ptr<Transport> transport_;
};

}  // namespace ticl
