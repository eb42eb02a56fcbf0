#pragma once

#include <string>
#include <vector>

#include "flowgraph/payload.hpp"

namespace flowgraph {

/// Payload type a contract declares for a stream slot. kAny accepts
/// anything; kSameAsInput resolves during validation to the type of the
/// named input stream.
struct TypeSpec {
  enum class Kind { kAny, kExact, kSameAsInput };

  Kind kind = Kind::kAny;
  PayloadTypeId exact = nullptr;
  std::string same_as_tag;

  static TypeSpec Any() { return {}; }
  static TypeSpec Exact(PayloadTypeId id) {
    return {Kind::kExact, id, {}};
  }
  template <typename T>
  static TypeSpec Of() {
    return Exact(PayloadTypeOf<T>());
  }
  static TypeSpec SameAsInput(std::string tag) {
    return {Kind::kSameAsInput, nullptr, std::move(tag)};
  }
};

struct StreamSlot {
  std::string tag;
  TypeSpec type;
  bool optional = false;
};

enum class InputPolicyKind { kDefault, kImmediate, kGrouped };

/// Grouped policies partition the input-stream tags; synchronization is
/// enforced within but not across groups.
struct InputPolicySpec {
  InputPolicyKind kind = InputPolicyKind::kDefault;
  std::vector<std::vector<std::string>> groups;

  static InputPolicySpec Default() { return {}; }
  static InputPolicySpec Immediate() {
    return {InputPolicyKind::kImmediate, {}};
  }
  static InputPolicySpec Grouped(std::vector<std::vector<std::string>> g) {
    return {InputPolicyKind::kGrouped, std::move(g)};
  }
};

/// What a calculator declares about itself: stream and side-packet slots
/// with payload types, its input policy, and whether the framework should
/// auto-advance its output bounds to the input timestamp + 1 after each
/// Process call (the zero-timestamp-offset declaration, which keeps
/// downstream settling prompt for calculators that only ever emit at the
/// current input timestamp).
class CalculatorContract {
 public:
  CalculatorContract& AddInput(std::string tag, TypeSpec type = TypeSpec::Any(),
                               bool optional = false) {
    inputs_.push_back({std::move(tag), type, optional});
    return *this;
  }
  CalculatorContract& AddOutput(std::string tag,
                                TypeSpec type = TypeSpec::Any()) {
    outputs_.push_back({std::move(tag), type, false});
    return *this;
  }
  CalculatorContract& AddInputSidePacket(std::string tag,
                                         TypeSpec type = TypeSpec::Any(),
                                         bool optional = false) {
    input_side_packets_.push_back({std::move(tag), type, optional});
    return *this;
  }
  CalculatorContract& AddOutputSidePacket(std::string tag,
                                          TypeSpec type = TypeSpec::Any()) {
    output_side_packets_.push_back({std::move(tag), type, false});
    return *this;
  }
  CalculatorContract& SetInputPolicy(InputPolicySpec policy) {
    input_policy_ = std::move(policy);
    return *this;
  }
  CalculatorContract& SetTimestampOffsetZero(bool value = true) {
    timestamp_offset_zero_ = value;
    return *this;
  }

  const std::vector<StreamSlot>& inputs() const { return inputs_; }
  const std::vector<StreamSlot>& outputs() const { return outputs_; }
  const std::vector<StreamSlot>& input_side_packets() const {
    return input_side_packets_;
  }
  const std::vector<StreamSlot>& output_side_packets() const {
    return output_side_packets_;
  }
  const InputPolicySpec& input_policy() const { return input_policy_; }
  bool timestamp_offset_zero() const { return timestamp_offset_zero_; }

  const StreamSlot* FindInput(std::string_view tag) const;
  const StreamSlot* FindOutput(std::string_view tag) const;

  /// Tags unique per namespace; grouped policy partitions the input tags.
  /// Throws ContractViolation on failure.
  void CheckWellFormed() const;

 private:
  std::vector<StreamSlot> inputs_;
  std::vector<StreamSlot> outputs_;
  std::vector<StreamSlot> input_side_packets_;
  std::vector<StreamSlot> output_side_packets_;
  InputPolicySpec input_policy_;
  bool timestamp_offset_zero_ = false;
};

}  // namespace flowgraph
