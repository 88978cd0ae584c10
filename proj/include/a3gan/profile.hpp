#pragma once

#include <string>
#include <string_view>

namespace a3gan {

/// Network size presets. `Paper256` follows the published layer tables;
/// `Desk64` is a reduced profile for CPU-scale runs.
enum class Profile { Paper256, Desk64 };

std::string to_string(Profile p);
Profile parse_profile(std::string_view s);

}  // namespace a3gan
