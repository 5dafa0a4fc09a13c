#include "vfi/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vfi {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

static void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw std::invalid_argument("tensor shape entries must be non-negative, got " + s.str());
  }
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  check_shape(s);
  Tensor t;
  t.shape = s;
  t.data = std::make_shared<std::vector<float>>(std::size_t(s.numel()), 0.0f);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<float>>();
  return t;
}

Tensor Tensor::full(Shape s, float v) {
  Tensor t = zeros(s);
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

Tensor Tensor::from_values(Shape s, std::vector<float> v) {
  check_shape(s);
  if (std::int64_t(v.size()) != s.numel()) {
    throw std::invalid_argument("value count " + std::to_string(v.size()) +
                                " does not match shape " + s.str());
  }
  Tensor t;
  t.shape = s;
  t.data = std::make_shared<std::vector<float>>(std::move(v));
  return t;
}

Tensor Tensor::uniform(Shape s, SeededRng& rng, float lo, float hi) {
  Tensor t = zeros(s);
  for (auto& x : *t.data) x = rng.uniform(lo, hi);
  return t;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

GradGuard::GradGuard(bool on) : prev_(g_grad_enabled) { g_grad_enabled = on; }
GradGuard::~GradGuard() { g_grad_enabled = prev_; }

std::vector<float>& grad_ref(const Tensor& t) {
  if (!t.grad) throw std::runtime_error("tensor has no gradient slot");
  if (t.grad->empty()) t.grad->assign(std::size_t(t.numel()), 0.0f);
  return *t.grad;
}

void attach_node(Tensor& out, std::vector<Tensor> parents,
                 std::function<void(const Tensor&)> backprop) {
  if (!grad_enabled()) return;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad;
  if (!any) return;
  out.requires_grad = true;
  out.grad = std::make_shared<std::vector<float>>();
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backprop = std::move(backprop);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.shape.str());
  }
  if (!loss.node) {
    throw std::runtime_error("backward: tensor was not produced by a recorded computation");
  }

  // Iterative post-order DFS over the tape; parents visited before the
  // tensors they produce, then processed in reverse.
  std::vector<Tensor> order;
  std::unordered_set<const Node*> seen;
  struct Frame {
    Tensor t;
    std::size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({loss, 0});
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& parents = f.t.node->parents;
    if (f.next_parent < parents.size()) {
      const Tensor& p = parents[f.next_parent++];
      if (p.node && !seen.count(p.node.get())) {
        seen.insert(p.node.get());
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  grad_ref(loss)[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    it->node->backprop(*it);
  }
}

Parameter::Parameter(std::string name_, Tensor value_) : name(std::move(name_)), value(std::move(value_)) {
  value.requires_grad = true;
  if (!value.grad) value.grad = std::make_shared<std::vector<float>>();
  value.grad->assign(std::size_t(value.numel()), 0.0f);
}

void Parameter::zero_grad() {
  value.grad->assign(std::size_t(value.numel()), 0.0f);
}

void zero_grads(std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace vfi
