#include "ccvit/numerics/tape.hpp"

namespace ccvit::numerics {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
    Node node;
    node.external_value = &p.value;
    node.external_grad = &p.grad;
    node.needs_grad = true;
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view name, Tensor<T> value, std::initializer_list<Var<T>> parents,
                       Backward backward) {
    return record(name, std::move(value), std::vector<Var<T>>(parents), std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view name, Tensor<T> value, const std::vector<Var<T>>& parents,
                       Backward backward) {
    if (!value.all_finite()) throw NumericError("non-finite value produced by " + std::string(name));
    Node node;
    node.value = std::move(value);
    for (const auto& p : parents) {
        if (&p.tape() != this) throw Error("operand of " + std::string(name) + " belongs to a different tape");
        node.needs_grad = node.needs_grad || nodes_[p.id()].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external_value ? *n.external_value : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
    Node& n = nodes_[id];
    Tensor<T>& g = n.external_grad ? *n.external_grad : n.grad;
    const auto& shape = value(id).shape();
    if (n.external_grad) {
        // Parameter accumulators persist across tapes; only fix up the shape.
        if (g.shape() != shape) g = Tensor<T>(shape);
    } else if (!n.grad_ready) {
        g = Tensor<T>(shape);
    }
    n.grad_ready = true;
    return g;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (!n.grad_ready) throw Error("gradient requested for a node that received none");
    return n.external_grad ? *n.external_grad : n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (value(loss.id()).size() != 1) throw ShapeError("backward() needs a scalar loss");
    grad(loss.id())[0] += T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.grad_ready && n.backward) n.backward(*this, i);
    }
}

template class Tape<float>;
template class Tape<double>;

} // namespace ccvit::numerics
