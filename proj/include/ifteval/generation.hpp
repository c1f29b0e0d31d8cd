#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace ifteval::harness {

struct Decoding {
  double temperature = 0.0;
  std::optional<int> max_tokens;
};

// One model response to a rendered prompt, with provenance. A non-empty
// error means the provider call failed for this sample; the batch continues.
struct Generation {
  std::string sample_id;
  std::string model_id;
  std::string output_text;
  Decoding decoding;
  std::string provider_ref;
  std::string timestamp;
  std::string error;
};

nlohmann::json generation_to_json(const Generation& gen);
Generation generation_from_json(const nlohmann::json& doc);

}  // namespace ifteval::harness
