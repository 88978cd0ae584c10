#include "a3gan/profile.hpp"

#include "a3gan/errors.hpp"

namespace a3gan {

std::string to_string(Profile p) { return p == Profile::Paper256 ? "paper-256" : "desk-64"; }

Profile parse_profile(std::string_view s) {
    if (s == "paper-256") return Profile::Paper256;
    if (s == "desk-64") return Profile::Desk64;
    throw ArgumentError("unknown profile '" + std::string(s) + "' (paper-256|desk-64)");
}

}  // namespace a3gan
