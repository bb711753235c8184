#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "videograph/tensor.hpp"

namespace videograph {

/// A learnable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Named parameters in insertion order with stable addresses.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& operator[](const std::string& name);
  const Parameter& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return items_.size(); }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::vector<Parameter*> pointers();
  void zero_grads();
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr; }
};

/// Reverse-mode tape. One forward/backward pass owns a tape; nothing on it
/// is shared across threads.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Repeated calls with the same parameter return the same node.
  Var param(Parameter& p);
  Var record(const char* op, Tensor value, std::span<const Var> parents, Backward backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient buffer of a node, allocated zeroed on first access.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id); }
  const char* op_name(std::uint32_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 for a single-element root and runs every
  /// recorded backward once, newest first.
  void backward(Var root);

  /// Adds scale * (accumulated node gradient) into each Parameter::grad.
  void flush_param_grads(double scale = 1.0);

  /// First node (in execution order) holding a non-finite value, or -1.
  long first_nonfinite() const;

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;  // deque: recording never invalidates earlier values
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace videograph
