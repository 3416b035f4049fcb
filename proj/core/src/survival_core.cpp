#include "tvflcm/survival_core.hpp"

#include "tvflcm/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace tvflcm {
namespace {

// Indices sorted by decreasing time; at equal time censored records come
// before events so that a running sum includes ties in the event's risk set.
std::vector<int> descending_order(std::span<const double> y, std::span<const int> d) {
  std::vector<int> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (y[a] != y[b]) return y[a] > y[b];
    return d[a] < d[b];
  });
  return idx;
}

struct Columns {
  std::vector<double> y;
  std::vector<int> d;
};

Columns columns(std::span<const SurvivalRecord> records) {
  Columns c;
  c.y.reserve(records.size());
  c.d.reserve(records.size());
  for (const auto& r : records) {
    c.y.push_back(r.y);
    c.d.push_back(r.delta);
  }
  return c;
}

}  // namespace

void validate_records(std::span<const SurvivalRecord> records) {
  std::size_t p = records.empty() ? 0 : records.front().x.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!std::isfinite(r.y) || r.y <= 0.0)
      throw ValidationError("record " + std::to_string(i) + " (id " + std::to_string(r.id) +
                            "): time must be finite and positive");
    if (r.delta != 0 && r.delta != 1)
      throw ValidationError("record " + std::to_string(i) + " (id " + std::to_string(r.id) +
                            "): event indicator must be 0 or 1");
    if (r.x.size() != p)
      throw ValidationError("record " + std::to_string(i) + ": covariate count differs from the first record");
    for (double v : r.x)
      if (!std::isfinite(v)) throw ValidationError("record " + std::to_string(i) + ": non-finite covariate");
  }
}

TieReport break_ties(std::vector<SurvivalRecord>& records) {
  TieReport rep;
  for (const auto& r : records) rep.scale = std::max(rep.scale, std::abs(r.y));
  if (rep.scale == 0.0) rep.scale = 1.0;
  const double unit = 1e-9 * rep.scale;
  // repeat until no event-time ties remain (a jitter could land on another event)
  for (int pass = 0; pass < 16; ++pass) {
    std::map<double, int> seen;
    int moved = 0;
    for (auto& r : records) {
      if (r.delta != 1) continue;
      int& count = seen[r.y];
      if (count > 0) {
        r.y += count * unit;
        ++moved;
      }
      ++count;
    }
    rep.jittered += moved;
    if (moved == 0) return rep;
  }
  require_no_ties(records);
  return rep;
}

void require_no_ties(std::span<const SurvivalRecord> records) {
  std::vector<double> t;
  for (const auto& r : records)
    if (r.delta == 1) t.push_back(r.y);
  std::sort(t.begin(), t.end());
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] == t[i - 1])
      throw ValidationError("tied event times at " + std::to_string(t[i]) +
                            "; break ties with break_ties() (rank * 1e-9 * max time jitter)");
}

CoxValue cox_partial_loglik(std::span<const double> eta, std::span<const SurvivalRecord> records, bool with_hessian) {
  const std::size_t n = records.size();
  detail::require(eta.size() == n, "cox_partial_loglik: eta has " + std::to_string(eta.size()) + " entries for " +
                                       std::to_string(n) + " records");
  for (double e : eta)
    if (!std::isfinite(e)) throw ValidationError("cox_partial_loglik: non-finite linear predictor");
  require_no_ties(records);
  const Columns c = columns(records);
  const auto order = descending_order(c.y, c.d);
  const double m = n ? *std::max_element(eta.begin(), eta.end()) : 0.0;

  std::vector<double> a(n), s0_at(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::exp(eta[i] - m);

  CoxValue out;
  out.value = 0.0;
  double s0 = 0.0;
  for (int i : order) {
    s0 += a[i];
    if (c.d[i] == 1) {
      s0_at[i] = s0;
      out.value += eta[i] - (m + std::log(s0));
    }
  }
  // ascending pass: cumulative sums over events with y_event <= y_j
  std::vector<double> cum1(n), cum2(n);
  std::vector<int> pos(n);
  double acc1 = 0.0, acc2 = 0.0;
  for (std::size_t r = n; r-- > 0;) {
    const int i = order[r];
    if (c.d[i] == 1) {
      acc1 += 1.0 / s0_at[i];
      acc2 += 1.0 / (s0_at[i] * s0_at[i]);
    }
    cum1[i] = acc1;
    cum2[i] = acc2;
    pos[i] = static_cast<int>(n - 1 - r);
  }
  out.gradient.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) out.gradient(j) = c.d[j] - a[j] * cum1[j];
  if (with_hessian) {
    out.hessian.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k <= j; ++k) {
        const double q = pos[j] < pos[k] ? cum2[j] : cum2[k];
        double h = a[j] * a[k] * q;
        if (j == k) h -= a[j] * cum1[j];
        out.hessian(j, k) = h;
        out.hessian(k, j) = h;
      }
    }
  }
  return out;
}

std::size_t poisson_row_count(std::span<const SurvivalRecord> records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.y);
  std::sort(y.begin(), y.end());
  std::size_t rows = 0;
  for (const auto& r : records) {
    if (r.delta != 1) continue;
    rows += static_cast<std::size_t>(y.end() - std::lower_bound(y.begin(), y.end(), r.y));
  }
  return rows;
}

PseudoPoissonData poisson_expand(std::span<const SurvivalRecord> records, int columns, const RowFiller& filler) {
  require_no_ties(records);
  detail::require(columns >= 0, "poisson_expand: negative column count");
  detail::require(columns == 0 || static_cast<bool>(filler), "poisson_expand: columns requested without a row filler");
  std::vector<int> events;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].delta == 1) events.push_back(static_cast<int>(i));
  std::stable_sort(events.begin(), events.end(), [&](int a, int b) { return records[a].y < records[b].y; });

  PseudoPoissonData out;
  const std::size_t total = poisson_row_count(records);
  out.subject.reserve(total);
  out.stratum.reserve(total);
  out.outcome.reserve(total);
  out.stratum_start.push_back(0);
  for (std::size_t k = 0; k < events.size(); ++k) {
    const double tk = records[events[k]].y;
    out.stratum_time.push_back(tk);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].y < tk) continue;
      out.subject.push_back(static_cast<int>(i));
      out.stratum.push_back(static_cast<int>(k));
      out.outcome.push_back(static_cast<int>(i) == events[k] ? 1.0 : 0.0);
    }
    if (out.subject.size() == static_cast<std::size_t>(out.stratum_start.back()))
      throw NumericalError("poisson_expand: empty risk set at t = " + std::to_string(tk));
    out.stratum_start.push_back(static_cast<int>(out.subject.size()));
  }
  if (columns > 0) {
    out.design.resize(static_cast<Eigen::Index>(out.rows()), columns);
    Eigen::RowVectorXd row(columns);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      row.setZero();
      filler(out.subject[r], out.stratum_time[out.stratum[r]], row);
      out.design.row(static_cast<Eigen::Index>(r)) = row;
    }
  }
  return out;
}

PseudoPoissonData poisson_expand_covariates(std::span<const SurvivalRecord> records) {
  const int p = records.empty() ? 0 : static_cast<int>(records.front().x.size());
  return poisson_expand(records, p, [&](int i, double, Eigen::Ref<Eigen::RowVectorXd> row) {
    for (int c = 0; c < p; ++c) row(c) = records[i].x[c];
  });
}

double CumulativeHazard::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

CumulativeHazard nelson_aalen(std::span<const double> time, std::span<const int> event, std::span<const double> eta_hat) {
  const std::size_t n = time.size();
  detail::require(event.size() == n && eta_hat.size() == n, "nelson_aalen: array length mismatch");
  for (double e : eta_hat)
    if (!std::isfinite(e)) throw ValidationError("nelson_aalen: non-finite linear predictor");
  const auto order = descending_order(time, event);
  const double m = n ? *std::max_element(eta_hat.begin(), eta_hat.end()) : 0.0;
  CumulativeHazard h;
  double s0 = 0.0;
  std::vector<std::pair<double, double>> jumps;
  for (std::size_t r = 0; r < n;) {
    const double t = time[order[r]];
    int events = 0;
    for (; r < n && time[order[r]] == t; ++r) {
      s0 += std::exp(eta_hat[order[r]] - m);
      events += event[order[r]];
    }
    if (events > 0) jumps.emplace_back(t, events * std::exp(-m) / s0);
  }
  std::reverse(jumps.begin(), jumps.end());
  double acc = 0.0;
  for (const auto& [t, j] : jumps) {
    acc += j;
    h.times.push_back(t);
    h.jumps.push_back(j);
    h.cumulative.push_back(acc);
  }
  return h;
}

CumulativeHazard nelson_aalen(std::span<const double> eta_hat, std::span<const SurvivalRecord> records) {
  const Columns c = columns(records);
  return nelson_aalen(c.y, c.d, eta_hat);
}

}  // namespace tvflcm
