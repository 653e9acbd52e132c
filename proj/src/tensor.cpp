#include "foss/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace foss {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dtype) {
  if (foss::numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->dtype = dtype;
  if (dtype == DType::f32) {
    for (auto& v : values) v = round_to(dtype, v);
  }
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  auto n = foss::numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), dtype);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  auto n = foss::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return from({}, {value}, dtype); }

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape().empty() ? 1 : foss::numel(shape()); }

DType Tensor::dtype() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->dtype;
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor, got " + to_string(shape()));
  return node_->value[row * node_->shape[1] + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->tape != nullptr; }

Tape* Tensor::tape() const { return node_ ? node_->tape : nullptr; }

std::vector<double> Tensor::grad() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), std::vector<double>(data().begin(), data().end()), dtype()); }

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (node_->tape) throw ContractError("mutable_data() on a recorded tensor");
  return node_->value;
}

Tensor make_result(Shape shape, DType dtype, std::vector<double> value,
                   const std::vector<Tensor>& inputs, detail::BackwardFn backward) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    Tape* t = in.tape();
    if (!t) continue;
    if (tape && tape != t) throw ContractError("operands recorded on different tapes");
    tape = t;
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->dtype = dtype;
  if (dtype == DType::f32) {
    for (auto& v : value) v = round_to(dtype, v);
  }
  node->value = std::move(value);
  if (tape) {
    node->tape = tape;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

DType common_dtype(std::initializer_list<const Tensor*> operands) {
  bool first = true;
  DType dtype = DType::f64;
  for (const Tensor* t : operands) {
    if (!t || !t->defined()) continue;
    if (first) {
      dtype = t->dtype();
      first = false;
    } else if (t->dtype() != dtype) {
      throw ContractError(std::string("mixed dtypes in one graph: ") + to_string(dtype) + " and " +
                          to_string(t->dtype()));
    }
  }
  return dtype;
}

Parameter::Parameter(std::string name, Tensor init)
    : name_(std::move(name)), value_(init.detach()), grad_(value_.numel(), 0.0) {}

void Parameter::assign(std::span<const double> values) {
  if (values.size() != numel()) {
    throw DimensionError("parameter '" + name_ + "' expects " + std::to_string(numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  auto dst = value_.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = round_to(value_.dtype(), values[i]);
}

void Parameter::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

std::size_t count_scalars(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->numel();
  return n;
}

Tensor Tape::leaf(const Parameter& param) {
  if (!recording()) return param.value();
  if (auto it = leaf_index_.find(&param); it != leaf_index_.end()) return leaves_[it->second].second;
  Tensor t = watch(param.value());
  t.node()->source = &param;
  leaf_index_.emplace(&param, leaves_.size());
  leaves_.emplace_back(const_cast<Parameter*>(&param), t);
  return t;
}

Tensor Tape::watch(const Tensor& constant) {
  if (!recording()) return constant;
  auto node = std::make_shared<detail::Node>();
  node->shape = constant.shape();
  node->dtype = constant.dtype();
  node->value.assign(constant.data().begin(), constant.data().end());
  node->tape = this;
  record(node);
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.tape() != this) {
    throw ContractError("backward: loss was not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  for (auto& n : nodes_) n->grad.clear();
  loss.node()->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
  }
}

std::vector<double> Tape::parameter_grad(const Parameter& param) const {
  auto it = leaf_index_.find(&param);
  if (it == leaf_index_.end()) return std::vector<double>(param.numel(), 0.0);
  return leaves_[it->second].second.grad();
}

void Tape::accumulate_parameter_grads() {
  for (auto& [param, t] : leaves_) {
    const auto& g = t.node()->grad;
    if (g.empty()) continue;
    auto dst = param->mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

void backward(Tape& tape, const Tensor& loss) {
  tape.backward(loss);
  tape.accumulate_parameter_grads();
}

}  // namespace foss
