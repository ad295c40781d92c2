#include "sparf/verify/accuracy.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sparf/core/attention.hpp"
#include "sparf/errors.hpp"

namespace sparf::verify {

namespace {

double rel_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool allowed_ratio(double r) {
  for (double a : {1.0, 0.5, 0.25, 0.125, 0.0625})
    if (r == a) return true;
  return false;
}

}  // namespace

std::vector<AccuracyRow> run_accuracy(const AccuracyOptions& o) {
  if (o.heads < 1) throw ConfigError("accuracy: heads must be >= 1");
  for (double r : o.ratios)
    if (!allowed_ratio(r)) throw ConfigError("accuracy: ratio must be one of 1, 1/2, 1/4, 1/8, 1/16");

  std::vector<AccuracyRow> rows;
  for (double ratio : o.ratios) {
    AccuracyRow row;
    row.ratio = ratio;
    row.r = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(o.head_dim))));
    row.k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(o.seq_len))));

    core::HeadConfig unit{o.head_dim, o.seq_len, row.r, row.k, 1, 1};
    core::HeadConfig grouped{o.head_dim, o.seq_len, row.r, row.k, o.embedding_group, o.token_group};
    unit.validate();
    grouped.validate();

    std::vector<double> err(o.heads), sparq_delta(o.heads), grouped_delta(o.heads);
    const auto n = static_cast<std::ptrdiff_t>(o.heads);
    const int team = o.threads > 0 ? o.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(team)
    for (std::ptrdiff_t h = 0; h < n; ++h) {
      const auto t = core::random_head(o.head_dim, o.seq_len, o.seed * 1000003ULL + static_cast<std::uint64_t>(h));
      const auto dense = core::dense_attention(t);
      const auto sparf = core::sparf_attention(t, unit);
      err[h] = rel_l2(sparf.out, dense);
      sparq_delta[h] = max_abs_diff(sparf.out, core::sparq_attention(t, row.r, row.k).out);
      grouped_delta[h] = max_abs_diff(core::sparf_attention(t, grouped).out, sparf.out);
    }
    for (std::size_t h = 0; h < o.heads; ++h) {
      row.mean_rel_l2 += err[h];
      row.max_rel_l2 = std::max(row.max_rel_l2, err[h]);
      row.max_sparq_delta = std::max(row.max_sparq_delta, sparq_delta[h]);
      row.max_grouped_delta = std::max(row.max_grouped_delta, grouped_delta[h]);
    }
    row.mean_rel_l2 /= static_cast<double>(o.heads);
    rows.push_back(row);
  }
  return rows;
}

std::string accuracy_csv(const std::vector<AccuracyRow>& rows) {
  std::string out = "ratio,r,k,mean_rel_l2,max_rel_l2,max_sparq_delta,max_grouped_delta\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%zu,%zu,%.9g,%.9g,%.9g,%.9g\n", r.ratio, r.r, r.k,
                  r.mean_rel_l2, r.max_rel_l2, r.max_sparq_delta, r.max_grouped_delta);
    out += buf;
  }
  return out;
}

}  // namespace sparf::verify
