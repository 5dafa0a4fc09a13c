#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vfi/rng.hpp"

namespace vfi {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Node;

// Dense (n, c, h, w) float32 tensor. Copies share the underlying buffer;
// buffers are treated as immutable once an operation has produced them.
// Parameter values are the one exception: the optimizer updates them in
// place between forward passes.
class Tensor {
 public:
  Shape shape{};
  std::shared_ptr<std::vector<float>> data;
  // Shared gradient slot. Present whenever requires_grad; sized lazily on
  // first accumulation so intermediate tensors cost nothing until backward.
  std::shared_ptr<std::vector<float>> grad;
  std::shared_ptr<Node> node;
  bool requires_grad = false;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, float v);
  static Tensor from_values(Shape s, std::vector<float> v);
  static Tensor uniform(Shape s, SeededRng& rng, float lo, float hi);

  bool defined() const { return static_cast<bool>(data); }
  std::int64_t numel() const { return shape.numel(); }
  float* ptr() { return data->data(); }
  const float* ptr() const { return data->data(); }

  float& at(int in, int ic, int iy, int ix) {
    return (*data)[((std::int64_t(in) * shape.c + ic) * shape.h + iy) * shape.w + ix];
  }
  float at(int in, int ic, int iy, int ix) const {
    return (*data)[((std::int64_t(in) * shape.c + ic) * shape.h + iy) * shape.w + ix];
  }
};

// One tape entry per produced tensor. `backprop` reads out.grad and
// accumulates into the parents' grad slots.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backprop;
};

// Thread-local tape switch. Recording is on by default; inference paths
// wrap themselves in NoGradGuard to avoid graph growth.
bool grad_enabled();

class GradGuard {
 public:
  explicit GradGuard(bool on);
  ~GradGuard();
  GradGuard(const GradGuard&) = delete;
  GradGuard& operator=(const GradGuard&) = delete;

 private:
  bool prev_;
};

class NoGradGuard : public GradGuard {
 public:
  NoGradGuard() : GradGuard(false) {}
};

// Returns the sized (numel, zero-filled on first use) gradient buffer of t.
std::vector<float>& grad_ref(const Tensor& t);

// Marks `out` as produced from `parents` with the given backward rule when
// recording is active and any parent needs gradients.
void attach_node(Tensor& out, std::vector<Tensor> parents,
                 std::function<void(const Tensor&)> backprop);

// Reverse-mode sweep from a scalar loss. Every reachable tensor with
// requires_grad receives d(loss)/d(tensor) accumulated into its grad slot.
void backward(const Tensor& loss);

// Named trainable tensor. The gradient buffer always matches the value
// shape and starts zeroed.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string name, Tensor value);

  Shape shape() const { return value.shape; }
  float* grad_ptr() { return value.grad->data(); }
  const std::vector<float>& grad() const { return *value.grad; }
  void zero_grad();
};

void zero_grads(std::vector<Parameter*>& params);

}  // namespace vfi
