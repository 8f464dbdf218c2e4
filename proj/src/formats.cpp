#include "dualpg/formats.hpp"

#include "dualpg/errors.hpp"
#include "dualpg/text.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dualpg {

using nlohmann::json;

namespace {

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_vec(const json& j, std::size_t size, const char* field, std::size_t line) {
  if (!j.is_array() || j.size() != size) {
    throw InputError(std::string("field '") + field + "' must be an array of " +
                         std::to_string(size) + " numbers",
                     line);
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < size; ++i) {
    if (!j[i].is_number()) throw InputError(std::string("non-numeric value in '") + field + "'", line);
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    if (!std::isfinite(v(static_cast<Eigen::Index>(i)))) {
      throw InputError(std::string("non-finite value in '") + field + "'", line);
    }
  }
  return v;
}

const json& field(const json& obj, const char* name, std::size_t line) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw InputError(std::string("missing field '") + name + "'", line);
  }
  return obj.at(name);
}

double stamp_of(const json& obj, std::size_t line) {
  const json& t = field(obj, "t", line);
  if (!t.is_number()) throw InputError("field 't' must be a number", line);
  const double v = t.get<double>();
  if (!std::isfinite(v)) throw InputError("non-finite stamp", line);
  return v;
}

Pose json_pose(const json& obj, std::size_t line) {
  const Eigen::VectorXd p = json_vec(field(obj, "p", line), 3, "p", line);
  const Eigen::VectorXd q = json_vec(field(obj, "q", line), 4, "q", line);
  if (q.norm() < 1e-6) throw InputError("zero quaternion", line);
  return Pose(Rotation::from_xyzw(q(0), q(1), q(2), q(3)), p);
}

void put_pose(json& obj, const Pose& pose) {
  obj["p"] = vec_json(pose.translation());
  obj["q"] = vec_json(pose.rotation().xyzw());
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what(), line);
  }
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

std::string odometry_record(const StampedPose& sample) {
  json j;
  j["t"] = sample.t;
  put_pose(j, sample.pose);
  return j.dump();
}

void write_odometry(std::ostream& out, const Trajectory& odometry) {
  for (const StampedPose& s : odometry) out << odometry_record(s) << '\n';
}

Trajectory read_odometry(std::istream& in) {
  Trajectory out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    const json j = parse_line(text, line);
    StampedPose s{stamp_of(j, line), json_pose(j, line)};
    if (!out.empty() && !(s.t > out.back().t)) {
      throw InputError("odometry stamps must be strictly increasing", line);
    }
    out.push_back(s);
  }
  return out;
}

std::string detection_record(const DetectionBatch& batch) {
  json j;
  j["t"] = batch.t;
  json dets = json::array();
  for (const RawDetection& d : batch.detections) {
    json o;
    if (const auto* p = std::get_if<Pose>(&d.measurement)) {
      put_pose(o, *p);
    } else {
      o["p"] = vec_json(std::get<Vec3>(d.measurement));
    }
    if (d.information) {
      const Eigen::MatrixXd rowmajor = d.information->transpose();
      o["info"] = vec_json(Eigen::Map<const Eigen::VectorXd>(rowmajor.data(), rowmajor.size()));
    }
    dets.push_back(std::move(o));
  }
  j["dets"] = std::move(dets);
  return j.dump();
}

void write_detections(std::ostream& out, const std::vector<DetectionBatch>& batches) {
  for (const DetectionBatch& b : batches) out << detection_record(b) << '\n';
}

std::vector<DetectionBatch> read_detections(std::istream& in) {
  std::vector<DetectionBatch> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    const json j = parse_line(text, line);
    DetectionBatch batch;
    batch.t = stamp_of(j, line);
    if (!out.empty() && batch.t < out.back().t) {
      throw InputError("detection stamps must not decrease", line);
    }
    const json& dets = field(j, "dets", line);
    if (!dets.is_array()) throw InputError("field 'dets' must be an array", line);
    for (const json& o : dets) {
      RawDetection d;
      d.stamp = batch.t;
      if (o.is_object() && o.contains("q")) {
        d.measurement = json_pose(o, line);
      } else {
        d.measurement = Vec3(json_vec(field(o, "p", line), 3, "p", line));
      }
      if (o.contains("info")) {
        const std::size_t n = std::holds_alternative<Pose>(d.measurement) ? 6 : 3;
        const Eigen::VectorXd v = json_vec(o.at("info"), n * n, "info", line);
        Eigen::MatrixXd m(n, n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < n; ++c) m(r, c) = v(r * n + c);
        }
        d.information = m;
      }
      batch.detections.push_back(std::move(d));
    }
    out.push_back(std::move(batch));
  }
  return out;
}

void write_gates(std::ostream& out, std::span<const GatePrior> gates) {
  json arr = json::array();
  for (const GatePrior& g : gates) {
    json o;
    o["id"] = g.semantic_id;
    put_pose(o, g.pose);
    arr.push_back(std::move(o));
  }
  out << arr.dump(1) << '\n';
}

std::vector<GatePrior> read_gates(std::istream& in) {
  json arr;
  try {
    arr = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid gates JSON: ") + e.what());
  }
  if (!arr.is_array()) throw InputError("gates file must hold a JSON array");
  std::vector<GatePrior> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& o = arr[i];
    const json& id = field(o, "id", 0);
    if (!id.is_number_integer()) throw InputError("gate id must be an integer");
    out.push_back({id.get<int>(), json_pose(o, 0)});
  }
  return out;
}

void write_tum(std::ostream& out, const Trajectory& trajectory, std::span<const double> lap_stamps) {
  std::string buf;
  if (!lap_stamps.empty()) {
    buf = "# laps";
    for (double t : lap_stamps) {
      buf += ' ';
      append_double(buf, t);
    }
    out << buf << '\n';
  }
  for (const StampedPose& s : trajectory) {
    buf.clear();
    append_double(buf, s.t);
    const Vec3& p = s.pose.translation();
    const Eigen::Vector4d q = s.pose.rotation().xyzw();
    for (double v : {p.x(), p.y(), p.z(), q(0), q(1), q(2), q(3)}) {
      buf += ' ';
      append_double(buf, v);
    }
    out << buf << '\n';
  }
}

TumFile read_tum(std::istream& in) {
  TumFile out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    std::istringstream tokens(text);
    std::string tok;
    tokens >> tok;
    if (tok.front() == '#') {
      std::string key;
      if (tok == "#") tokens >> key;
      else key = tok.substr(1);
      if (key == "laps") {
        while (tokens >> tok) {
          double v;
          if (!parse_double(tok, v)) throw InputError("bad lap stamp '" + tok + "'", line);
          out.lap_stamps.push_back(v);
        }
      }
      continue;
    }
    double v[8];
    int n = 0;
    do {
      if (n == 8 || !parse_double(tok, v[n])) throw InputError("malformed TUM record", line);
      ++n;
    } while (tokens >> tok);
    if (n != 8) throw InputError("TUM records need 8 values", line);
    StampedPose s{v[0], Pose(Rotation::from_xyzw(v[4], v[5], v[6], v[7]), Vec3(v[1], v[2], v[3]))};
    if (!out.trajectory.empty() && !(s.t > out.trajectory.back().t)) {
      throw InputError("TUM stamps must be strictly increasing", line);
    }
    out.trajectory.push_back(s);
  }
  return out;
}

std::string diagnostics_record(const KeyframeDiagnostics& d) {
  json j;
  j["t"] = d.stamp;
  j["keyframe"] = d.keyframe;
  j["main"] = {{"nodes", d.main_nodes},
               {"edges", d.main_edges},
               {"detection_edges", d.main_detection_edges},
               {"landmarks", d.main_landmarks}};
  j["temp"] = {{"nodes", d.temp_nodes}, {"edges", d.temp_edges}, {"opt_ms", d.temp_opt_ms}};
  j["raw_detections"] = d.raw_detections;
  j["refined"] = d.refined;
  j["fallbacks"] = d.fallbacks;
  j["opt"] = {{"iterations", d.main_opt.iterations},
              {"initial_chi2", d.main_opt.initial_chi2},
              {"final_chi2", d.main_opt.final_chi2},
              {"reason", to_string(d.main_opt.reason)},
              {"ms", d.main_opt.wall_ms}};
  j["solver_error"] = d.solver_error;
  j["correction_norm"] = d.correction_norm;
  j["rejected"] = {{"distance", d.rejected.distance},
                   {"yaw", d.rejected.yaw},
                   {"duplicate", d.rejected.duplicate},
                   {"kind", d.kind_rejected}};
  return j.dump();
}

std::string metrics_json(const MetricsReport& m) {
  json j;
  auto ate_json = [](const std::optional<AteResult>& a) -> json {
    if (!a) return nullptr;
    return {{"trans_m", a->trans_rmse},
            {"rot_deg", a->rot_rmse},
            {"matched", a->matched},
            {"unmatched", a->unmatched}};
  };
  j["ate"] = ate_json(m.corrected_ate);
  j["raw_ate"] = ate_json(m.raw_ate);
  if (m.correction) {
    json laps = json::array();
    for (const Stat& s : m.correction->laps) {
      laps.push_back({{"mean", s.mean}, {"std", s.std}, {"count", s.count}});
    }
    json excluded = json::array();
    for (const auto& [lap, gate] : m.correction->excluded) excluded.push_back({lap, gate});
    j["correction"] = {{"laps", laps},
                       {"overall",
                        {{"mean", m.correction->overall.mean},
                         {"std", m.correction->overall.std},
                         {"count", m.correction->overall.count}}},
                       {"excluded", excluded}};
  } else {
    j["correction"] = nullptr;
  }
  j["graph"] = {{"nodes", m.nodes},
                {"edges", m.edges},
                {"detection_edges", m.detection_edges},
                {"keyframes", m.keyframes},
                {"landmarks", m.landmarks}};
  j["detections"] = {{"accepted", m.accepted_detections},
                     {"rejected_distance", m.rejected.distance},
                     {"rejected_yaw", m.rejected.yaw},
                     {"rejected_duplicate", m.rejected.duplicate}};
  j["opt_ms"] = {{"p50", m.opt_p50_ms}, {"p95", m.opt_p95_ms}, {"count", m.opt_times_ms.size()}};
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["mode"] = m.single_graph ? "single" : "dual";
  return j.dump(2);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace dualpg
