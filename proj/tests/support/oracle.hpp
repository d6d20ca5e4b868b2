#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "splatedit/prompt_parser.hpp"

namespace oracle {

using splatedit::EditCommand;
using splatedit::InstanceId;
using splatedit::Vec3;

/// What grounding must return for a command, computed from first principles.
struct Expected {
  bool ambiguous = false;          // Middle with fewer than two references
  std::vector<InstanceId> survivors;  // after class + relation filters, ascending id
  std::optional<InstanceId> winner;   // empty when nothing survives
};

/// Brute force over the raw scene: per-instance scans, explicit view basis,
/// the predicate definitions applied to every candidate/reference pair, an
/// O(n^3) triangle test for the hull, and the lexical score formula.
Expected ground(const splatedit::GaussianScene& scene, const splatedit::SemanticOverlay& overlay,
                const EditCommand& command, const Vec3& up = Vec3::UnitZ(), double margin_ratio = 0.02);

struct RandomCase {
  fixtures::SceneBuilder builder;
  std::string prompt;
};

/// A random room of at most 20 labeled boxes plus a grounding prompt.
RandomCase random_case(std::mt19937& rng);

}  // namespace oracle
