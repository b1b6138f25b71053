#include "ctxfeat/losses/average_precision.h"

#include "ctxfeat/gridcore/random.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctxfeat {
namespace {

// Position of a distance on the bin axis: segment m in [0, bins-2] and the
// fraction t in [0, 1] towards centre m + 1.
struct BinPosition {
  int m;
  double t;
  bool interior;  // derivative w.r.t. the distance is 1 / width
};

BinPosition Locate(double d, int bins, double width) {
  const double u = d / width;
  if (!(u > 0.0)) return {0, 0.0, false};
  if (u >= bins - 1) return {bins - 2, 1.0, false};
  const int m = std::min(static_cast<int>(std::floor(u)), bins - 2);
  return {m, u - m, true};
}

// First k entries of a deterministic partial Fisher-Yates shuffle.
std::vector<int> SampleWithoutReplacement(std::vector<int> pool, std::size_t k,
                                          std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + UniformIndex(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

double ExactAp(std::span<const double> distances, const std::vector<bool>& labels) {
  if (distances.size() != labels.size()) {
    throw std::invalid_argument("exact_ap: distances and labels differ in length");
  }
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  double sum = 0.0;
  int positives = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    ++positives;
    sum += static_cast<double>(positives) / static_cast<double>(r + 1);
  }
  if (positives == 0) throw std::invalid_argument("exact_ap: no positive label");
  return sum / positives;
}

Grid SoftApGroups(Tape& tape, const Grid& distances, const std::vector<ApGroup>& groups,
                  int bins) {
  if (bins < 2) throw std::invalid_argument("soft_ap: need at least 2 bins");
  const double width = 2.0 / (bins - 1);
  auto d = distances.data();

  struct GroupState {
    std::vector<BinPosition> pos;
    std::vector<double> cum_all, cum_pos;  // A_k, P_k
    double positives;
  };
  std::vector<GroupState> states;
  states.reserve(groups.size());
  Grid out(Shape{static_cast<int>(std::max<std::size_t>(groups.size(), 1))});
  auto ap = out.mutable_data();

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const ApGroup& group = groups[g];
    if (group.labels.size() != group.count || group.offset + group.count > d.size()) {
      throw std::invalid_argument("soft_ap: malformed group");
    }
    GroupState st;
    st.pos.resize(group.count);
    std::vector<double> all(bins, 0.0), pos(bins, 0.0);
    st.positives = 0.0;
    for (std::size_t i = 0; i < group.count; ++i) {
      const BinPosition b = Locate(d[group.offset + i], bins, width);
      st.pos[i] = b;
      all[b.m] += 1.0 - b.t;
      all[b.m + 1] += b.t;
      if (group.labels[i]) {
        pos[b.m] += 1.0 - b.t;
        pos[b.m + 1] += b.t;
        st.positives += 1.0;
      }
    }
    if (st.positives == 0.0) throw std::invalid_argument("soft_ap: no positive label");
    st.cum_all.resize(bins);
    st.cum_pos.resize(bins);
    std::partial_sum(all.begin(), all.end(), st.cum_all.begin());
    std::partial_sum(pos.begin(), pos.end(), st.cum_pos.begin());

    double sum = 0.0;
    for (std::size_t i = 0; i < group.count; ++i) {
      if (!group.labels[i]) continue;
      const auto [m, t, interior] = st.pos[i];
      const double prev_a = m > 0 ? st.cum_all[m - 1] : 0.0;
      const double prev_p = m > 0 ? st.cum_pos[m - 1] : 0.0;
      const double rank =
          0.5 * (1.0 + st.cum_all[m] + (1.0 - t) * prev_a + t * st.cum_all[m + 1]);
      const double hits =
          0.5 * (1.0 + st.cum_pos[m] + (1.0 - t) * prev_p + t * st.cum_pos[m + 1]);
      sum += hits / rank;
    }
    ap[g] = sum / st.positives;
    states.push_back(std::move(st));
  }
  if (groups.empty()) throw std::invalid_argument("soft_ap: no ranking problem");
  if (!distances.requires_grad()) return out;

  tape.record({distances}, out, [distances, out, groups, states = std::move(states), bins,
                                 width]() mutable {
    auto gout = out.grad();
    auto gd = distances.grad();
    std::vector<double> g_cum_all(bins), g_cum_pos(bins), g_all(bins), g_pos(bins);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const ApGroup& group = groups[g];
      const GroupState& st = states[g];
      const double upstream = gout[g] / st.positives;
      std::fill(g_cum_all.begin(), g_cum_all.end(), 0.0);
      std::fill(g_cum_pos.begin(), g_cum_pos.end(), 0.0);
      std::vector<double> g_t(group.count, 0.0);

      for (std::size_t i = 0; i < group.count; ++i) {
        if (!group.labels[i]) continue;
        const auto [m, t, interior] = st.pos[i];
        const double prev_a = m > 0 ? st.cum_all[m - 1] : 0.0;
        const double prev_p = m > 0 ? st.cum_pos[m - 1] : 0.0;
        const double rank =
            0.5 * (1.0 + st.cum_all[m] + (1.0 - t) * prev_a + t * st.cum_all[m + 1]);
        const double hits =
            0.5 * (1.0 + st.cum_pos[m] + (1.0 - t) * prev_p + t * st.cum_pos[m + 1]);
        const double g_hits = upstream / rank;
        const double g_rank = -upstream * hits / (rank * rank);

        g_cum_all[m] += 0.5 * g_rank;
        g_cum_all[m + 1] += 0.5 * t * g_rank;
        g_cum_pos[m] += 0.5 * g_hits;
        g_cum_pos[m + 1] += 0.5 * t * g_hits;
        if (m > 0) {
          g_cum_all[m - 1] += 0.5 * (1.0 - t) * g_rank;
          g_cum_pos[m - 1] += 0.5 * (1.0 - t) * g_hits;
        }
        g_t[i] += 0.5 * (st.cum_all[m + 1] - prev_a) * g_rank +
                  0.5 * (st.cum_pos[m + 1] - prev_p) * g_hits;
      }
      // Cumulative sums: a histogram bin feeds every later cumulative entry.
      double acc_all = 0.0, acc_pos = 0.0;
      for (int k = bins - 1; k >= 0; --k) {
        acc_all += g_cum_all[k];
        acc_pos += g_cum_pos[k];
        g_all[k] = acc_all;
        g_pos[k] = acc_pos;
      }
      for (std::size_t i = 0; i < group.count; ++i) {
        const auto [m, t, interior] = st.pos[i];
        g_t[i] += g_all[m + 1] - g_all[m];
        if (group.labels[i]) g_t[i] += g_pos[m + 1] - g_pos[m];
        if (interior) gd[group.offset + i] += g_t[i] / width;
      }
    }
  });
  return out;
}

Grid SoftAp(Tape& tape, const Grid& distances, const std::vector<bool>& labels, int bins) {
  return SoftApGroups(tape, distances, {ApGroup{0, distances.size(), labels}}, bins);
}

ApPlan SampleApPlan(const CorrespondenceField& field, int height_b, int width_b,
                    const ApSamplingConfig& config, std::mt19937_64& rng) {
  std::vector<int> valid;
  for (int r = 0; r < field.height; ++r) {
    for (int c = 0; c < field.width; ++c) {
      if (!field.is_valid(r, c)) continue;
      const double x = field.x(r, c), y = field.y(r, c);
      if (x >= 0.0 && y >= 0.0 && x <= width_b - 1 && y <= height_b - 1) {
        valid.push_back(r * field.width + c);
      }
    }
  }
  if (valid.empty()) throw UnusablePairError("ap sampling: no valid correspondence");

  std::vector<int> all_b(static_cast<std::size_t>(height_b) * width_b);
  std::iota(all_b.begin(), all_b.end(), 0);
  const std::vector<int> queries =
      SampleWithoutReplacement(std::move(valid), config.queries, rng);
  const std::vector<int> negatives =
      SampleWithoutReplacement(std::move(all_b), config.candidates, rng);

  const double radius = config.positive_radius;
  const double r2 = radius * radius;
  const int reach = static_cast<int>(std::ceil(radius));
  ApPlan plan;
  plan.queries.reserve(queries.size());
  for (int q : queries) {
    ApQuery query;
    query.pixel_a = q;
    const double tx = field.x(q / field.width, q % field.width);
    const double ty = field.y(q / field.width, q % field.width);
    const int cx = static_cast<int>(std::lround(tx)), cy = static_cast<int>(std::lround(ty));
    for (int y = cy - reach; y <= cy + reach; ++y) {
      for (int x = cx - reach; x <= cx + reach; ++x) {
        if (x < 0 || y < 0 || x >= width_b || y >= height_b) continue;
        if ((x - tx) * (x - tx) + (y - ty) * (y - ty) > r2) continue;
        query.pixels_b.push_back(y * width_b + x);
        query.labels.push_back(true);
      }
    }
    for (int n : negatives) {
      const double x = n % width_b, y = n / width_b;
      if ((x - tx) * (x - tx) + (y - ty) * (y - ty) <= r2) continue;
      query.pixels_b.push_back(n);
      query.labels.push_back(false);
    }
    plan.queries.push_back(std::move(query));
  }
  return plan;
}

Grid PlanDistances(Tape& tape, const Grid& descriptors_a, const Grid& descriptors_b,
                   const ApPlan& plan, std::vector<ApGroup>* groups) {
  if (descriptors_a.rank() != 3 || descriptors_b.rank() != 3 ||
      descriptors_a.channels() != descriptors_b.channels()) {
    throw ShapeError("plan distances: descriptor maps " + ShapeString(descriptors_a.shape()) +
                     " and " + ShapeString(descriptors_b.shape()) + " are incompatible");
  }
  const int depth = descriptors_a.channels();
  const std::size_t plane_a = static_cast<std::size_t>(descriptors_a.height()) *
                              descriptors_a.width();
  const std::size_t plane_b = static_cast<std::size_t>(descriptors_b.height()) *
                              descriptors_b.width();
  std::size_t total = 0;
  if (groups) groups->clear();
  for (const ApQuery& q : plan.queries) {
    if (groups) groups->push_back(ApGroup{total, q.pixels_b.size(), q.labels});
    total += q.pixels_b.size();
  }
  if (total == 0) throw UnusablePairError("plan distances: empty plan");

  Grid out(Shape{static_cast<int>(total)});
  auto y = out.mutable_data();
  auto a = descriptors_a.data();
  auto b = descriptors_b.data();
  std::size_t k = 0;
  for (const ApQuery& q : plan.queries) {
    for (int pb : q.pixels_b) {
      double sq = 0.0;
      for (int c = 0; c < depth; ++c) {
        const double diff = a[c * plane_a + q.pixel_a] - b[c * plane_b + pb];
        sq += diff * diff;
      }
      y[k++] = std::sqrt(sq);
    }
  }
  if (!descriptors_a.requires_grad() && !descriptors_b.requires_grad()) return out;
  tape.record({descriptors_a, descriptors_b}, out,
              [descriptors_a, descriptors_b, out, plan, depth, plane_a, plane_b]() mutable {
                auto gy = out.grad();
                auto y = out.data();
                auto a = descriptors_a.data();
                auto b = descriptors_b.data();
                const bool want_a = descriptors_a.requires_grad();
                const bool want_b = descriptors_b.requires_grad();
                std::span<double> ga, gb;
                if (want_a) ga = descriptors_a.grad();
                if (want_b) gb = descriptors_b.grad();
                std::size_t k = 0;
                for (const ApQuery& q : plan.queries) {
                  for (int pb : q.pixels_b) {
                    const double dist = y[k];
                    const double g = gy[k++];
                    if (dist < 1e-12 || g == 0.0) continue;
                    for (int c = 0; c < depth; ++c) {
                      const double diff = a[c * plane_a + q.pixel_a] - b[c * plane_b + pb];
                      const double v = g * diff / dist;
                      if (want_a) ga[c * plane_a + q.pixel_a] += v;
                      if (want_b) gb[c * plane_b + pb] -= v;
                    }
                  }
                }
              });
  return out;
}

Grid GatherPixels(Tape& tape, const Grid& map, const std::vector<int>& pixels) {
  if (map.rank() != 3 || map.channels() != 1) {
    throw ShapeError("gather: map must be 1 x H x W, got " + ShapeString(map.shape()));
  }
  if (pixels.empty()) throw std::invalid_argument("gather: no pixels");
  Grid out(Shape{static_cast<int>(pixels.size())});
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i] < 0 || static_cast<std::size_t>(pixels[i]) >= map.size()) {
      throw std::out_of_range("gather: pixel index out of range");
    }
    y[i] = map[pixels[i]];
  }
  if (!map.requires_grad()) return out;
  tape.record({map}, out, [map, out, pixels]() mutable {
    auto gy = out.grad();
    auto gm = map.grad();
    for (std::size_t i = 0; i < pixels.size(); ++i) gm[pixels[i]] += gy[i];
  });
  return out;
}

Grid ApLoss(Tape& tape, const Grid& ap, const Grid& reliability, double kappa) {
  if (ap.size() != reliability.size() || ap.size() == 0) {
    throw ShapeError("ap_loss: " + ShapeString(ap.shape()) + " AP values vs " +
                     ShapeString(reliability.shape()) + " reliabilities");
  }
  if (kappa < 0.0 || kappa > 1.0) throw std::invalid_argument("ap_loss: kappa outside [0,1]");
  const double n = static_cast<double>(ap.size());
  double total = 0.0;
  for (std::size_t i = 0; i < ap.size(); ++i) {
    total += reliability[i] * (ap[i] - kappa);
  }
  Grid out = Grid::Scalar((1.0 - kappa) - total / n);
  if (!ap.requires_grad() && !reliability.requires_grad()) return out;
  tape.record({ap, reliability}, out, [ap, reliability, out, kappa, n]() mutable {
    const double g = out.grad()[0] / n;
    if (ap.requires_grad()) {
      auto ga = ap.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= g * reliability[i];
    }
    if (reliability.requires_grad()) {
      auto gr = reliability.grad();
      for (std::size_t i = 0; i < gr.size(); ++i) gr[i] -= g * (ap[i] - kappa);
    }
  });
  return out;
}

}  // namespace ctxfeat
