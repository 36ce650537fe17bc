#pragma once

#include <ostream>
#include <string>

#include "geoxray/config.hpp"

namespace geoxray {

// Runs the full acceptance suite at the configured desk scale, printing one
// pass/fail line per criterion and writing CSV artifacts under out_dir.
// Returns true when every criterion passes.
bool run_acceptance(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

}  // namespace geoxray
