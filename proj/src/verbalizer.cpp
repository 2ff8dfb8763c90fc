#include "ticl/verbalizer.hpp"

#include <set>

#include "ticl/error.hpp"

namespace ticl {

nlohmann::json to_json(const VerbalizeRequest& r) {
  return {{"image_id", r.image_id}, {"image_path", r.image_path}, {"methods", r.methods}};
}

void validate(const VerbalizeRequest& r) {
  if (r.image_id.empty()) throw ValidationError("verbalize request without image_id");
  if (r.methods.empty()) throw ValidationError("verbalize request for '" + r.image_id + "' has no methods");
  for (const auto& m : r.methods) {
    if (!is_known_method(m)) throw ValidationError("unknown verbalization method '" + m + "'");
  }
}

nlohmann::json to_json(const VerbalizeResponse& r) {
  nlohmann::json j = {{"image_id", r.image_id}, {"captions", r.captions}};
  j["raw_tags"] = r.raw_tags ? tags::to_json(*r.raw_tags) : nlohmann::json(nullptr);
  if (!r.errors.empty()) j["errors"] = r.errors;
  return j;
}

VerbalizeResponse verbalize_response_from_json(const nlohmann::json& j) {
  try {
    VerbalizeResponse r;
    r.image_id = j.at("image_id").get<std::string>();
    if (r.image_id.empty()) throw ValidationError("response without image_id");
    r.captions = j.value("captions", std::map<std::string, std::string>{});
    for (const auto& [method, caption] : r.captions) {
      if (!method.starts_with("caption:") || !is_known_method(method)) {
        throw ValidationError("unknown caption method '" + method + "'");
      }
      if (caption.empty()) throw ValidationError("empty caption for " + method);
    }
    if (j.contains("raw_tags") && !j.at("raw_tags").is_null()) {
      r.raw_tags = tags::bundle_from_json(j.at("raw_tags"));
    }
    r.errors = j.value("errors", std::map<std::string, std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed verbalize response: ") + e.what());
  }
}

void check_answers(const VerbalizeRequest& request, const VerbalizeResponse& response) {
  if (response.image_id != request.image_id) {
    throw ValidationError("response is for '" + response.image_id + "', asked for '" +
                          request.image_id + "'");
  }
  for (const auto& m : request.methods) {
    bool answered = m == "tags" ? response.raw_tags.has_value() : response.captions.count(m) > 0;
    if (!answered && !response.errors.count(m)) {
      throw ValidationError("method '" + m + "' for '" + request.image_id +
                            "' neither answered nor reported as an error");
    }
  }
}

std::vector<VerbalizeResponse> parse_verbalize_fixtures(std::string_view content,
                                                        const std::string& source) {
  std::vector<VerbalizeResponse> out;
  std::set<std::string> seen;
  for_each_jsonl(content, source, [&](const nlohmann::json& j, std::size_t line) {
    try {
      auto r = verbalize_response_from_json(j);
      if (!seen.insert(r.image_id).second) {
        throw ValidationError("duplicate image_id '" + r.image_id + "'");
      }
      out.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw ParseError(source, line, e.what());
    }
  });
  return out;
}

std::vector<ImageAsText> to_verbalizations(const VerbalizeResponse& response,
                                           const tags::Thresholds& thresholds) {
  std::vector<ImageAsText> out;
  for (const auto& [method, caption] : response.captions) {
    out.push_back({response.image_id, method, caption});
  }
  if (response.raw_tags) {
    out.push_back({response.image_id, "tags",
                   tags::render_tagset(tags::aggregate(*response.raw_tags, thresholds))});
  }
  return out;
}

VerbalizerClient::VerbalizerClient(std::unique_ptr<Transport> transport)
    : transport_(std::move(transport)) {}

VerbalizerClient VerbalizerClient::http(const std::string& base_url) {
  return VerbalizerClient(std::make_unique<HttpTransport>(base_url));
}

VerbalizeResponse VerbalizerClient::verbalize(const VerbalizeRequest& request) {
  validate(request);
  auto res = transport_->post("/verbalize", to_json(request).dump(),
                              {{"Content-Type", "application/json"}});
  if (res.status < 200 || res.status >= 300) {
    throw Error("verbalizer returned " +
                (res.status == 0 ? "a transport error: " + res.body : "HTTP " + std::to_string(res.status)) +
                " for '" + request.image_id + "'");
  }
  VerbalizeResponse response;
  try {
    response = verbalize_response_from_json(nlohmann::json::parse(res.body));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("verbalizer response is not JSON: ") + e.what());
  }
  check_answers(request, response);
  return response;
}

}  // namespace ticl
