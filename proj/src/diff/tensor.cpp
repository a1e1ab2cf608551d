#include "textsplat/diff/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace textsplat::diff {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <typename T>
void Tensor<T>::backward() const {
  if (!impl_) throw GraphError("backward on an undefined tensor");
  if (impl_->values.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + shape_str(impl_->shape));
  }
  if (impl_->node && impl_->node->consumed) {
    throw GraphError("backward called twice on the same graph; run a new forward pass first");
  }
  if (!impl_->requires_grad) throw GraphError("loss is not connected to any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> seen;
  std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (cur->node && next < cur->node->inputs.size()) {
      TensorImpl<T>* child = cur->node->inputs[next++].get();
      if (!child || !child->requires_grad || !seen.insert(child).second) continue;
      if (child->node && child->node->consumed) {
        throw GraphError("graph reaches a tensor whose history was already consumed by backward");
      }
      stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(cur);
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* cur = *it;
    if (!cur->node) continue;
    if (!cur->grad.empty() && cur->node->backward) cur->node->backward(*cur);
    cur->node->consumed = true;
    cur->node->backward = nullptr;
    if (!cur->retain_grad) {
      cur->grad.clear();
      cur->grad.shrink_to_fit();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace textsplat::diff
