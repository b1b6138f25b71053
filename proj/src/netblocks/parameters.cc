#include "ctxfeat/netblocks/parameters.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctxfeat {

void Parameters::add(std::string name, Grid value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(value));
}

bool Parameters::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

const Grid& Parameters::get(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw std::out_of_range("missing parameter '" + name + "'");
}

Grid& Parameters::get(const std::string& name) {
  return const_cast<Grid&>(std::as_const(*this).get(name));
}

std::size_t Parameters::num_scalars() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.second.size();
  return n;
}

void Parameters::zero_grad() {
  for (Entry& e : entries_) e.second.zero_grad();
}

Parameters Parameters::clone() const {
  Parameters copy;
  for (const Entry& e : entries_) {
    copy.add(e.first, Grid(e.second.shape(), std::vector<double>(e.second.data().begin(),
                                                                 e.second.data().end())));
  }
  return copy;
}

void AddConvParameters(Parameters& params, const std::string& name, int out_channels,
                       int in_channels, int kernel, std::mt19937_64& rng) {
  const int fan_in = in_channels * kernel * kernel;
  const double bound = std::sqrt(3.0 / fan_in);
  Grid weight(Shape{out_channels, in_channels, kernel, kernel});
  for (double& v : weight.mutable_data()) {
    // 53 random bits -> [0, 1); independent of the standard library's
    // distribution implementation.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = bound * (2.0 * u - 1.0);
  }
  params.add(name + ".weight", std::move(weight));
  params.add(name + ".bias", Grid(Shape{out_channels}));
}

void ZeroConvParameters(Parameters& params, const std::string& name) {
  for (const char* suffix : {".weight", ".bias"}) {
    for (double& v : params.get(name + suffix).mutable_data()) v = 0.0;
  }
}

}  // namespace ctxfeat
