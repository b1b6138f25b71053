#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ctxfeat/gridcore/grid.h"

namespace ctxfeat {

// Named, insertion-ordered collection of trainable grids.
class Parameters {
 public:
  using Entry = std::pair<std::string, Grid>;

  void add(std::string name, Grid value);
  bool contains(const std::string& name) const;
  const Grid& get(const std::string& name) const;
  Grid& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  void zero_grad();
  // Deep copy with fresh storage and no gradients.
  Parameters clone() const;

 private:
  std::vector<Entry> entries_;
};

// Adds "<name>.weight" (out x in x k x k, fan-in scaled uniform) and
// "<name>.bias" (zeros).
void AddConvParameters(Parameters& params, const std::string& name, int out_channels,
                       int in_channels, int kernel, std::mt19937_64& rng);

// Sets weight and bias of the named convolution to zero.
void ZeroConvParameters(Parameters& params, const std::string& name);

}  // namespace ctxfeat
