#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ccvit/numerics/tensor.hpp"

namespace ccvit::numerics {

// A trainable tensor with its gradient accumulator. Gradients accumulate
// across backward passes until zero_grad().
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool decay = true;

    void zero_grad() {
        if (grad.shape() != value.shape())
            grad = Tensor<T>(value.shape());
        else
            grad.fill(T{0});
    }
};

template <typename T>
class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    Tape<T>& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Tensor<T>& value() const { return tape_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    const Tensor<T>& grad() const { return tape_->grad(id_); }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Records primitive operations in execution order; backward() replays them in
// reverse to accumulate gradients. Single-threaded, one tape per step.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);

    // Leaf bound to an external parameter. The tape reads the parameter's
    // value in place and backward() accumulates into parameter.grad.
    Var<T> parameter(Parameter<T>& p);

    // Appends an op result. `name` labels non-finite errors.
    Var<T> record(std::string_view name, Tensor<T> value, std::initializer_list<Var<T>> parents, Backward backward);
    Var<T> record(std::string_view name, Tensor<T> value, const std::vector<Var<T>>& parents, Backward backward);

    const Tensor<T>& value(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    bool has_grad(std::size_t id) const { return nodes_[id].grad_ready; }

    // Gradient accumulator of a node; allocated as zeros on first access.
    Tensor<T>& grad(std::size_t id);
    const Tensor<T>& grad(std::size_t id) const;

    // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
    void backward(Var<T> loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* external_value = nullptr;
        Tensor<T> grad;
        Tensor<T>* external_grad = nullptr;
        bool grad_ready = false;
        bool needs_grad = false;
        Backward backward;
    };

    std::deque<Node> nodes_;
};

} // namespace ccvit::numerics
