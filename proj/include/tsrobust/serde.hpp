#pragma once

#include <json.hpp>

#include "tsrobust/augment.hpp"

namespace tsrobust {

// `augment` config block; field names match the run-config schema.
nlohmann::json augment_to_json(const AugmentConfig& a);
AugmentConfig augment_from_json(const nlohmann::json& j);

}  // namespace tsrobust
