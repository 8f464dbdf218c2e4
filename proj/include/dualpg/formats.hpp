// Stream and file formats: odometry / detection JSON lines, gate maps, TUM
// trajectories, diagnostics and metrics JSON.
//
//   odometry.jsonl   {"t": s, "p": [x,y,z], "q": [qx,qy,qz,qw]}
//   detections.jsonl {"t": s, "dets": [{"p": [...], "q": [...], "info": [...]}]}
//                    ("q" absent for position-only detections, "info" optional
//                    row-major 6x6 or 3x3)
//   gates.json       [{"id": n, "p": [...], "q": [...]}]
//   *.tum            t x y z qx qy qz qw, '#' comments; ground truth files carry
//                    a "# laps t0 t1 ..." header line
#pragma once

#include "dualpg/evaluation.hpp"
#include "dualpg/simulator.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dualpg {

std::string odometry_record(const StampedPose& sample);
void write_odometry(std::ostream& out, const Trajectory& odometry);
/// Throws InputError (with line number) on malformed records or stamps that
/// do not strictly increase.
Trajectory read_odometry(std::istream& in);

std::string detection_record(const DetectionBatch& batch);
void write_detections(std::ostream& out, const std::vector<DetectionBatch>& batches);
std::vector<DetectionBatch> read_detections(std::istream& in);

void write_gates(std::ostream& out, std::span<const GatePrior> gates);
std::vector<GatePrior> read_gates(std::istream& in);

struct TumFile {
  Trajectory trajectory;
  std::vector<double> lap_stamps;
};

void write_tum(std::ostream& out, const Trajectory& trajectory,
               std::span<const double> lap_stamps = {});
TumFile read_tum(std::istream& in);

std::string diagnostics_record(const KeyframeDiagnostics& diag);
std::string metrics_json(const MetricsReport& report);

// File helpers; failures raise InputError (reads) or std::runtime_error (writes).
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace dualpg
