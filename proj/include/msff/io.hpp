#pragma once

#include <json.hpp>
#include <cstdint>
#include <string>
#include <string_view>

#include "msff/mode_solver.hpp"
#include "msff/pulse.hpp"

namespace msff::io {

using json = nlohmann::json;

/// 64-bit FNV-1a of the bytes of s.
std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

/// rad/s -> Hz.
double to_hz(double rad_per_s);
/// Hz -> rad/s, choosing the value whose to_hz() reproduces `hz` bit for bit
/// when such a value exists, so Hz text round-trips exactly.
double from_hz(double hz);

json pulse_to_json(const FMPulse& pulse);
FMPulse pulse_from_json(const json& j);

json modes_to_json(const ModeStructure& modes);
ModeStructure modes_from_json(const json& j);

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// Rejects keys of `j` not in `allowed`; `where` names the object in the message.
void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where);

}  // namespace msff::io
