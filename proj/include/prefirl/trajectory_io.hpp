#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "prefirl/env.hpp"

namespace prefirl {

/// Malformed input; `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// {"env": id, "pairs": [{"s": [...], "a": [...] | int, "t": int}, ...], "costs": {id: value}}
/// in exactly that field order, floats with 17 significant digits.
std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, const TrajectorySet& set);
/// Reads one trajectory per non-empty line.
TrajectorySet read_jsonl(std::istream& in);

void save_jsonl(const std::string& path, const TrajectorySet& set);
TrajectorySet load_jsonl(const std::string& path);

}  // namespace prefirl
