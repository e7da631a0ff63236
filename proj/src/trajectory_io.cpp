#include "prefirl/trajectory_io.hpp"

#include <fstream>

#include "prefirl/format.hpp"

namespace prefirl {

namespace {

void append_escaped(std::string& out, const std::string& s) {
  out += nlohmann::json(s).dump();
}

}  // namespace

std::string trajectory_to_json(const Trajectory& traj) {
  std::string out = "{\"env\":";
  append_escaped(out, traj.env_id);
  out += ",\"pairs\":[";
  for (std::size_t i = 0; i < traj.pairs.size(); ++i) {
    const StateActionPair& p = traj.pairs[i];
    if (i > 0) out += ',';
    out += "{\"s\":[";
    for (std::size_t k = 0; k < p.state.size(); ++k) {
      if (k > 0) out += ',';
      out += format_double(p.state[k]);
    }
    out += "],\"a\":";
    if (p.action.is_discrete()) {
      out += std::to_string(p.action.index());
    } else {
      out += '[';
      const std::vector<double>& v = p.action.values();
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (k > 0) out += ',';
        out += format_double(v[k]);
      }
      out += ']';
    }
    out += ",\"t\":" + std::to_string(p.step) + "}";
  }
  out += "],\"costs\":{";
  bool first = true;
  for (const auto& [id, value] : traj.costs) {
    if (!first) out += ',';
    first = false;
    append_escaped(out, id);
    out += ':' + format_double(value);
  }
  out += "}}";
  return out;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("trajectory must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "env" && key != "pairs" && key != "costs") throw std::invalid_argument("unknown trajectory field '" + key + "'");
  }
  Trajectory traj;
  traj.env_id = j.at("env").get<std::string>();
  const auto& pairs = j.at("pairs");
  if (!pairs.is_array()) throw std::invalid_argument("'pairs' must be an array");
  traj.pairs.reserve(pairs.size());
  for (const auto& pj : pairs) {
    StateActionPair p;
    p.state = pj.at("s").get<std::vector<double>>();
    const auto& aj = pj.at("a");
    if (aj.is_number_integer()) {
      p.action = Action::discrete(aj.get<int>());
    } else if (aj.is_array()) {
      p.action = Action::continuous(aj.get<std::vector<double>>());
    } else {
      throw std::invalid_argument("'a' must be an integer or an array of numbers");
    }
    p.step = pj.at("t").get<int>();
    traj.pairs.push_back(std::move(p));
  }
  if (!traj.well_formed()) throw std::invalid_argument("pair steps must run 0, 1, 2, ... in order");
  if (j.contains("costs")) traj.costs = j.at("costs").get<std::map<std::string, double>>();
  return traj;
}

void write_jsonl(std::ostream& out, const TrajectorySet& set) {
  for (const Trajectory& t : set.trajectories) out << trajectory_to_json(t) << '\n';
}

TrajectorySet read_jsonl(std::istream& in) {
  TrajectorySet set;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      set.trajectories.push_back(trajectory_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(number) + ": " + e.what(), number);
    }
  }
  return set;
}

void save_jsonl(const std::string& path, const TrajectorySet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_jsonl(out, set);
}

TrajectorySet load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_jsonl(in);
}

}  // namespace prefirl
