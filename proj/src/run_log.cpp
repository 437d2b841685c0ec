/*
 * Copyright (c) The FedSim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedsim/run_log.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

json record_to_json(const EvalRecord& r) {
  json j{{"t", r.virtual_time},
         {"version", r.version},
         {"loss", r.eval_loss},
         {"accuracy", r.eval_accuracy},
         {"staleness", r.staleness},
         {"cum_wait", r.cum_wait},
         {"active", r.active_clients}};
  if (r.checkpoint) j["checkpoint"] = *r.checkpoint;
  return j;
}

EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  r.virtual_time = j.at("t").get<double>();
  r.version = j.at("version").get<long>();
  r.eval_loss = j.at("loss").get<double>();
  r.eval_accuracy = j.at("accuracy").get<double>();
  r.staleness = j.at("staleness").get<long>();
  r.cum_wait = j.at("cum_wait").get<double>();
  r.active_clients = j.at("active").get<int>();
  if (j.contains("checkpoint")) r.checkpoint = j.at("checkpoint").get<ParamVector>();
  return r;
}

json summary_to_json(const RunSummary& s) {
  json hist = json::object();
  for (const auto& [tau, count] : s.tau_histogram) hist[std::to_string(tau)] = count;
  return json{{"versions", s.versions},
              {"arrivals", s.arrivals},
              {"end_time", s.end_time},
              {"best_accuracy", s.best_accuracy},
              {"final_loss", s.final_loss},
              {"tau_max", s.tau_max},
              {"tau_mean", s.tau_mean},
              {"tau_histogram", hist},
              {"barrier_wait", s.barrier_wait},
              {"buffer_latency", s.buffer_latency},
              {"aborted", s.aborted},
              {"stop_reason", s.stop_reason}};
}

RunSummary summary_from_json(const json& j) {
  RunSummary s;
  s.versions = j.at("versions").get<long>();
  s.arrivals = j.at("arrivals").get<long>();
  s.end_time = j.at("end_time").get<double>();
  s.best_accuracy = j.at("best_accuracy").get<double>();
  s.final_loss = j.at("final_loss").get<double>();
  s.tau_max = j.at("tau_max").get<long>();
  s.tau_mean = j.at("tau_mean").get<double>();
  for (const auto& [k, v] : j.at("tau_histogram").items()) {
    s.tau_histogram[std::stol(k)] = v.get<long>();
  }
  s.barrier_wait = j.at("barrier_wait").get<double>();
  s.buffer_latency = j.at("buffer_latency").get<double>();
  s.aborted = j.at("aborted").get<bool>();
  s.stop_reason = j.at("stop_reason").get<std::string>();
  return s;
}

}  // namespace

void RunLog::write_ndjson(std::ostream& os) const {
  json header{{"schema", "fedsim.runlog.v1"},
              {"strategy", strategy},
              {"seed", seed},
              {"config", json::parse(header_json.empty() ? "{}" : header_json)}};
  os << header.dump() << "\n";
  for (const auto& r : records) {
    os << json{{"record", record_to_json(r)}}.dump() << "\n";
  }
  for (const auto& e : trace) {
    os << json{{"trace", {{"seq", e.seq},
                          {"client", e.client_id},
                          {"dispatch", e.dispatch_time},
                          {"fire", e.fire_time},
                          {"base", e.base_version}}}}
              .dump()
       << "\n";
  }
  os << json{{"summary", summary_to_json(summary)}}.dump() << "\n";
}

RunLog RunLog::read_ndjson(std::istream& is) {
  RunLog log;
  std::string line;
  bool have_header = false;
  bool have_summary = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("run log: line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("schema", "") != "fedsim.runlog.v1") {
        throw ConfigError("run log: unrecognized schema header");
      }
      log.strategy = j.at("strategy").get<std::string>();
      log.seed = j.at("seed").get<std::uint64_t>();
      log.header_json = j.at("config").dump();
      have_header = true;
    } else if (j.contains("record")) {
      log.records.push_back(record_from_json(j.at("record")));
    } else if (j.contains("trace")) {
      const json& t = j.at("trace");
      log.trace.push_back({t.at("seq").get<long>(), t.at("client").get<int>(),
                           t.at("dispatch").get<double>(), t.at("fire").get<double>(),
                           t.at("base").get<long>()});
    } else if (j.contains("summary")) {
      log.summary = summary_from_json(j.at("summary"));
      have_summary = true;
    } else {
      throw ConfigError("run log: line " + std::to_string(line_no) + ": unknown entry");
    }
  }
  if (!have_header || !have_summary) {
    throw ConfigError("run log: truncated file (missing header or summary)");
  }
  return log;
}

void RunLog::write_csv(std::ostream& os) const {
  os << "# fedsim.runlog.csv.v1 strategy=" << strategy << " seed=" << seed << "\n";
  os << "virtual_time,version,eval_loss,eval_accuracy,staleness,cum_wait,active_clients\n";
  for (const auto& r : records) {
    os << json(r.virtual_time).dump() << "," << r.version << ","
       << json(r.eval_loss).dump() << "," << json(r.eval_accuracy).dump() << ","
       << r.staleness << "," << json(r.cum_wait).dump() << "," << r.active_clients
       << "\n";
  }
}

}  // namespace fedsim
