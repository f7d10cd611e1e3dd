#pragma once
// Line-delimited JSON session logs: one Turn object per line, sorted by
// (session_id, timestamp). This is the on-disk interchange format for all
// traffic datasets.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlufb/core/types.hpp"

namespace nlufb::core {

using ojson = nlohmann::ordered_json;

ojson interpretation_to_json(const Interpretation& p);
Interpretation interpretation_from_json(const ojson& j);

ojson turn_to_json(const Turn& t);
Turn turn_from_json(const ojson& j);

std::string turn_to_line(const Turn& t);
Turn turn_from_line(const std::string& line);

// Writes all turns of all sessions, sorted by (session_id, timestamp,
// turn_id).
void write_session_log(const std::vector<Session>& sessions, const std::filesystem::path& path);
void write_turn_log(const std::vector<Turn>& turns, const std::filesystem::path& path);

// Reads a session log and regroups turns into sessions (grouped by
// session_id, ordered by (timestamp, turn_id); sessions ordered by id).
std::vector<Session> read_session_log(const std::filesystem::path& path);

// Turn-level read, preserving file order.
Dataset read_turn_log(const std::filesystem::path& path, Provenance provenance = Provenance::live);

}  // namespace nlufb::core
