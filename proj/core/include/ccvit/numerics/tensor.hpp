#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccvit/common/error.hpp"

namespace ccvit::numerics {

using Shape = std::vector<std::size_t>;

// Storage starts on a 64-byte boundary. Vectorized reductions peel a
// prefix that depends on the address, so alignment that varied with the heap
// would make summation order (and the low bits of results) vary run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

// Dense row-major tensor owning its storage. T is float (training) or double
// (oracles and gradient checks).
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) { check_size(); }

    Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        check_size();
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
        return Tensor({rows, cols}, std::vector<T>(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    // Rows/cols view a tensor as a matrix whose last axis is the row.
    std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on) { requires_grad_ = on; }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != size())
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        Tensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        AlignedVector<U> out(data_.begin(), data_.end());
        Tensor<U> t(shape_, std::move(out));
        t.set_requires_grad(requires_grad_);
        return t;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    void check_size() const {
        if (shape_size(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }

    Shape shape_;
    AlignedVector<T> data_;
    bool requires_grad_ = false;
};

} // namespace ccvit::numerics
