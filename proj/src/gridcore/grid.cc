#include "ctxfeat/gridcore/grid.h"

#include <algorithm>
#include <sstream>

namespace ctxfeat {

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + ShapeString(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Grid::Grid(Shape shape, double fill) : storage_(std::make_shared<Storage>()) {
  const std::size_t n = NumElements(shape);
  storage_->shape = std::move(shape);
  storage_->data.assign(n, fill);
}

Grid::Grid(Shape shape, std::vector<double> data)
    : storage_(std::make_shared<Storage>()) {
  if (NumElements(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + ShapeString(shape));
  }
  storage_->shape = std::move(shape);
  storage_->data.assign(data.begin(), data.end());
}

Grid Grid::Scalar(double value) { return Grid(Shape{1}, value); }

const Shape& Grid::shape() const {
  if (!storage_) throw std::logic_error("access to undefined Grid");
  return storage_->shape;
}

int Grid::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     ShapeString(s));
  }
  return s[axis];
}

std::size_t Grid::size() const { return storage_ ? storage_->data.size() : 0; }

std::span<const double> Grid::data() const& {
  if (!storage_) throw std::logic_error("access to undefined Grid");
  return storage_->data;
}

std::span<double> Grid::mutable_data() {
  if (!storage_) throw std::logic_error("access to undefined Grid");
  return storage_->data;
}

double Grid::at(int c, int y, int x) const {
  const Shape& s = shape();
  return storage_->data[(static_cast<std::size_t>(c) * s[1] + y) * s[2] + x];
}

double Grid::item() const {
  if (size() != 1) {
    throw ShapeError("item() on non-scalar grid " + ShapeString(shape()));
  }
  return storage_->data[0];
}

bool Grid::requires_grad() const {
  return storage_ && storage_->requires_grad;
}

void Grid::set_requires_grad(bool value) {
  if (!storage_) throw std::logic_error("access to undefined Grid");
  storage_->requires_grad = value;
}

bool Grid::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<double> Grid::grad() const {
  if (!storage_) throw std::logic_error("access to undefined Grid");
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0);
  return storage_->grad;
}

std::span<const double> Grid::grad_view() const {
  if (!storage_) return {};
  return storage_->grad;
}

void Grid::zero_grad() const {
  if (storage_ && !storage_->grad.empty()) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
  }
}

void Grid::clear_grad() const {
  if (storage_) {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
  }
}

void Tape::record(std::vector<Grid> inputs, Grid output, BackwardFn backward) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Grid& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? ShapeString(loss.shape()) : "undefined"));
  }
  for (Node& node : nodes_) node.output.clear_grad();
  Grid seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

}  // namespace ctxfeat
