#include "flowgraph/contract.hpp"

#include <algorithm>
#include <set>

#include "flowgraph/error.hpp"

namespace flowgraph {

namespace {

const StreamSlot* FindSlot(const std::vector<StreamSlot>& slots,
                           std::string_view tag) {
  for (const auto& s : slots) {
    if (s.tag == tag) return &s;
  }
  return nullptr;
}

void CheckUnique(const std::vector<StreamSlot>& slots, const char* ns) {
  std::set<std::string> seen;
  for (const auto& s : slots) {
    if (!seen.insert(s.tag).second) {
      throw FlowError(ErrorCode::kContractViolation,
                      std::string("duplicate ") + ns + " tag '" + s.tag + "'");
    }
  }
}

}  // namespace

const StreamSlot* CalculatorContract::FindInput(std::string_view tag) const {
  return FindSlot(inputs_, tag);
}

const StreamSlot* CalculatorContract::FindOutput(std::string_view tag) const {
  return FindSlot(outputs_, tag);
}

void CalculatorContract::CheckWellFormed() const {
  CheckUnique(inputs_, "input stream");
  CheckUnique(outputs_, "output stream");
  CheckUnique(input_side_packets_, "input side packet");
  CheckUnique(output_side_packets_, "output side packet");

  if (input_policy_.kind == InputPolicyKind::kGrouped) {
    std::set<std::string> covered;
    for (const auto& group : input_policy_.groups) {
      for (const auto& tag : group) {
        if (FindInput(tag) == nullptr) {
          throw FlowError(ErrorCode::kContractViolation,
                          "grouped policy names unknown input tag '" + tag +
                              "'");
        }
        if (!covered.insert(tag).second) {
          throw FlowError(ErrorCode::kContractViolation,
                          "grouped policy repeats input tag '" + tag + "'");
        }
      }
    }
    if (covered.size() != inputs_.size()) {
      throw FlowError(ErrorCode::kContractViolation,
                      "grouped policy must partition all input tags");
    }
  }
}

}  // namespace flowgraph
