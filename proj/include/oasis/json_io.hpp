// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <json.hpp>

#include "oasis/adapt.hpp"

namespace oasis {

/// Every field is written. Reading starts from the strategy's defaults, so
/// omitted fields take them; unknown keys raise ConfigError.
void to_json(nlohmann::json& j, const StrategyConfig& cfg);
void from_json(const nlohmann::json& j, StrategyConfig& cfg);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where);

}  // namespace oasis
