#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace intent {

/// Raised when a caller breaks a documented precondition (shape, range, state).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a statistic is undefined for the given input (zero variance, 0/0 ratio).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

struct TextTokens {
  std::vector<int64_t> tokens;
  bool operator==(const TextTokens&) const = default;
};

struct ReturnValue {
  double value = 0.0;
  bool operator==(const ReturnValue&) const = default;
};

struct VideoFrames {
  torch::Tensor frames;  // [N, C, H, W]
};

/// Hindsight annotation attached to a demonstration.
using Label = std::variant<TextTokens, ReturnValue>;

/// Condition fed to the instruction encoder.
using Instruction = std::variant<VideoFrames, TextTokens, ReturnValue>;

enum class Modality : uint8_t { Video = 0, Text = 1, Return = 2 };

Modality modality_of(const Instruction& instruction);
Modality modality_of(const Label& label);
Instruction as_instruction(const Label& label);
const char* to_string(Modality m);

/// Observation/action sequence with optional hindsight labels.
///
/// A freshly generated demonstration carries both a text label and a return
/// label; stripping removes both. `labels()` lists whichever are present.
struct Trajectory {
  torch::Tensor observations;  // [N, C, H, W] float32
  std::vector<int64_t> actions;
  std::optional<TextTokens> text;
  std::optional<ReturnValue> ret;

  int64_t length() const { return static_cast<int64_t>(actions.size()); }
  bool labeled() const { return text.has_value() || ret.has_value(); }
  std::vector<Label> labels() const;

  /// Contiguous sub-trajectory [start, start+len); labels are carried over.
  Trajectory window(int64_t start, int64_t len) const;

  void validate(int64_t num_actions, int64_t vocab_size) const;
};

}  // namespace intent
