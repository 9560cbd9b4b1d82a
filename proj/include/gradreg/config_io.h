#pragma once

#include <string>

#include <json.hpp>

#include "gradreg/registration.h"
#include "gradreg/similarity.h"

namespace gradreg {

// Parses a JSON config document mirroring RegistrationConfig. Unspecified
// keys keep their defaults; unknown keys are a hard error naming the key.
RegistrationConfig parse_config(const nlohmann::json& j);

RegistrationConfig load_config_file(const std::string& path);

// Full config echo for report provenance.
nlohmann::json config_to_json(const RegistrationConfig& cfg);

nlohmann::json breakdown_to_json(const LossBreakdown& b);

}  // namespace gradreg
