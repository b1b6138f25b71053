#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxfeat {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Cache-line aligned storage, so vectorized kernels take the same code path
// (and produce the same bits) regardless of where the heap places a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

std::string ShapeString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

// Dense row-major array of doubles. Copies share storage; a Grid produced by
// an op is never written to afterwards, parameters are the only grids whose
// data changes (between optimizer steps, never while a tape references them).
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape shape, double fill = 0.0);
  Grid(Shape shape, std::vector<double> data);

  static Grid Scalar(double value);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::size_t size() const;

  // Convenience accessors for C x H x W grids.
  int channels() const { return dim(0); }
  int height() const { return dim(1); }
  int width() const { return dim(2); }

  std::span<const double> data() const&;
  std::span<const double> data() const&& = delete;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(int c, int y, int x) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  // Allocates a zero gradient buffer on first use. Const because Grid is a
  // handle; the buffer lives in the shared storage.
  std::span<double> grad() const;
  std::span<const double> grad_view() const;
  void zero_grad() const;
  void clear_grad() const;

  bool same_storage(const Grid& other) const {
    return storage_ == other.storage_;
  }

 private:
  struct Storage {
    Shape shape;
    AlignedVector data;
    AlignedVector grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

// Records differentiable ops in creation order, which is a topological order
// of the computation graph. Not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Grid> inputs, Grid output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  // Leaf gradients accumulate across calls; intermediate ones are reset.
  void backward(const Grid& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Grid> inputs;
    Grid output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace ctxfeat
