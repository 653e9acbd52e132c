#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "foss/errors.hpp"

namespace foss {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);

/// Rounds a value to the storage precision of `dtype`.
inline double round_to(DType dtype, double v) {
  return dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

class Tape;
class Tensor;
class Parameter;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& out)>;

struct Node {
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> value;
  // Lazily allocated during backward; empty means "no gradient reached here".
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  Tape* tape = nullptr;
  const Parameter* source = nullptr;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
  bool differentiable() const { return tape != nullptr; }
};

}  // namespace detail

/// Dense row-major array. Values are immutable once created; a tensor that
/// lives on a recording tape participates in reverse-mode differentiation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, DType dtype = DType::f64);
  static Tensor zeros(Shape shape, DType dtype = DType::f64);
  static Tensor full(Shape shape, double value, DType dtype = DType::f64);
  static Tensor scalar(double value, DType dtype = DType::f64);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;
  /// Value of a single-element tensor.
  double item() const;

  /// True when the tensor was recorded on a tape.
  bool requires_grad() const;
  Tape* tape() const;
  /// Gradient after Tape::backward; zeros when nothing flowed here.
  std::vector<double> grad() const;

  /// Detached copy with no tape attachment.
  Tensor detach() const;

  /// In-place access for tensors that own their storage outright (parameter
  /// values, test fixtures). Never call on a tensor that is shared by a tape.
  std::span<double> mutable_data();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, DType, std::vector<double>, const std::vector<Tensor>&,
                            detail::BackwardFn);
  friend class Tape;

  std::shared_ptr<detail::Node> node_;
};

/// Creates the output of a differentiable operation. If any input lives on a
/// recording tape the result is recorded there with `backward`; otherwise the
/// result is a plain constant and `backward` is dropped. Values are rounded to
/// `dtype` storage precision.
Tensor make_result(Shape shape, DType dtype, std::vector<double> value,
                   const std::vector<Tensor>& inputs, detail::BackwardFn backward);

/// Shared dtype of a set of operands; raises ContractError if they disagree.
DType common_dtype(std::initializer_list<const Tensor*> operands);

/// Named trainable tensor with a gradient accumulator of the same shape.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  const Shape& shape() const { return value_.shape(); }
  std::size_t numel() const { return value_.numel(); }

  std::span<double> mutable_values() { return value_.mutable_data(); }
  void assign(std::span<const double> values);

  std::span<const double> grad() const { return grad_; }
  std::span<double> mutable_grad() { return grad_; }
  void zero_grad();

 private:
  std::string name_;
  Tensor value_;
  std::vector<double> grad_;
};

using ParameterList = std::vector<Parameter*>;

std::size_t count_scalars(const ParameterList& params);

/// Ordered record of executed operations. Node creation order is the
/// topological order, so backward is a single reverse sweep.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }

  /// Tensor view of a parameter for this tape. In record mode a leaf is
  /// created once per parameter and reused; in inference mode the parameter
  /// value is returned directly.
  Tensor leaf(const Parameter& param);

  /// Differentiable copy of a constant tensor (used to take gradients with
  /// respect to inputs).
  Tensor watch(const Tensor& constant);

  /// Reverse sweep from a single-element loss. Gradients of previous sweeps on
  /// this tape are cleared first, so repeated calls give identical results.
  void backward(const Tensor& loss);

  /// Gradient this tape computed for `param` (zeros if it was never used).
  std::vector<double> parameter_grad(const Parameter& param) const;

  /// Adds this tape's parameter gradients into Parameter::grad.
  void accumulate_parameter_grads();

  std::size_t size() const { return nodes_.size(); }

 private:
  friend Tensor make_result(Shape, DType, std::vector<double>, const std::vector<Tensor>&,
                            detail::BackwardFn);
  void record(const std::shared_ptr<detail::Node>& node) { nodes_.push_back(node); }

  Mode mode_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::vector<std::pair<Parameter*, Tensor>> leaves_;
  std::unordered_map<const Parameter*, std::size_t> leaf_index_;
};

/// Backward sweep followed by accumulation into the parameters' gradients.
void backward(Tape& tape, const Tensor& loss);

}  // namespace foss
