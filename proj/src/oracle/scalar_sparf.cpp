#include "sparf/oracle/scalar_sparf.hpp"

#include <cmath>

namespace sparf::oracle {

namespace {

// Repeated max scan: lowest index wins on ties. Returns indices ascending.
std::vector<std::size_t> pick_largest(const std::vector<double>& key, std::size_t count) {
  std::vector<bool> taken(key.size(), false);
  for (std::size_t round = 0; round < count; ++round) {
    std::size_t best = key.size();
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (taken[i]) continue;
      if (best == key.size() || key[i] > key[best]) best = i;
    }
    taken[best] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < key.size(); ++i)
    if (taken[i]) out.push_back(i);
  return out;
}

}  // namespace

ScalarResult scalar_sparf(const core::HeadTensors& t, std::size_t r, std::size_t k,
                          std::size_t m, std::size_t n) {
  const std::size_t d = t.q.size();
  const std::size_t S = t.keys.rows();
  ScalarResult res;

  // Largest |q| components.
  std::vector<double> mag(d);
  double q_l1 = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    mag[c] = std::fabs(t.q[c]);
    q_l1 += mag[c];
  }
  res.embeddings = pick_largest(mag, r);

  // Copy whole embedding groups, then keep the selected columns.
  std::vector<bool> sel_emb(d, false);
  for (std::size_t c : res.embeddings) sel_emb[c] = true;
  std::vector<std::vector<double>> kept_cols;  // kept_cols[j][i] = K(i, emb_j)
  for (std::size_t g = 0; g * m < d; ++g) {
    bool touched = false;
    for (std::size_t c = g * m; c < (g + 1) * m && c < d; ++c) touched = touched || sel_emb[c];
    if (!touched) continue;
    std::vector<std::vector<double>> page;
    for (std::size_t c = g * m; c < (g + 1) * m && c < d; ++c) {
      std::vector<double> col(S);
      for (std::size_t i = 0; i < S; ++i) col[i] = t.keys(i, c);
      page.push_back(col);
    }
    for (std::size_t c = g * m; c < (g + 1) * m && c < d; ++c)
      if (sel_emb[c]) kept_cols.push_back(page[c - g * m]);
  }

  // Approximate scores with the tempered scale.
  double kept_l1 = 0.0;
  for (std::size_t c : res.embeddings) kept_l1 += std::fabs(t.q[c]);
  std::vector<double> s_hat(S, 0.0);
  if (kept_l1 == 0.0 || q_l1 == 0.0) {
    for (std::size_t i = 0; i < S; ++i) s_hat[i] = 1.0 / static_cast<double>(S);
  } else {
    const double temp = std::sqrt(static_cast<double>(d) * kept_l1 / q_l1);
    double mx = -1e300;
    for (std::size_t i = 0; i < S; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < res.embeddings.size(); ++j)
        acc += t.q[res.embeddings[j]] * kept_cols[j][i];
      s_hat[i] = acc / temp;
      if (s_hat[i] > mx) mx = s_hat[i];
    }
    double z = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      s_hat[i] = std::exp(s_hat[i] - mx);
      z += s_hat[i];
    }
    for (std::size_t i = 0; i < S; ++i) s_hat[i] /= z;
  }
  res.approx_scores = s_hat;

  // Token selection (no padding mask for an exact-length sequence).
  res.tokens = pick_largest(s_hat, k);

  // Score mass of the kept tokens.
  res.alpha = 0.0;
  for (std::size_t i : res.tokens) res.alpha += s_hat[i];
  if (res.alpha > 1.0) res.alpha = 1.0;

  // Copy whole token groups of K and V, keep the selected rows.
  std::vector<bool> sel_tok(S, false);
  for (std::size_t i : res.tokens) sel_tok[i] = true;
  std::vector<std::vector<double>> krows, vrows;
  for (std::size_t g = 0; g * n < S; ++g) {
    bool touched = false;
    for (std::size_t i = g * n; i < (g + 1) * n && i < S; ++i) touched = touched || sel_tok[i];
    if (!touched) continue;
    for (std::size_t i = g * n; i < (g + 1) * n && i < S; ++i) {
      if (!sel_tok[i]) continue;
      std::vector<double> kr(d), vr(d);
      for (std::size_t c = 0; c < d; ++c) {
        kr[c] = t.keys(i, c);
        vr[c] = t.values(i, c);
      }
      krows.push_back(kr);
      vrows.push_back(vr);
    }
  }

  // Exact softmax over the kept keys.
  std::vector<double> s(krows.size());
  double mx = -1e300;
  for (std::size_t j = 0; j < krows.size(); ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += t.q[c] * krows[j][c];
    s[j] = acc / std::sqrt(static_cast<double>(d));
    if (s[j] > mx) mx = s[j];
  }
  double z = 0.0;
  for (double& v : s) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : s) v /= z;

  // Blend with the value mean.
  res.out.assign(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < vrows.size(); ++j) acc += s[j] * vrows[j][c];
    res.out[c] = res.alpha * acc + (1.0 - res.alpha) * t.value_mean[c];
  }
  return res;
}

std::vector<double> scalar_dense(const core::HeadTensors& t) {
  const std::size_t d = t.q.size();
  const std::size_t S = t.keys.rows();
  std::vector<double> p(S);
  double mx = -1e300;
  for (std::size_t i = 0; i < S; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += t.q[c] * t.keys(i, c);
    p[i] = acc / std::sqrt(static_cast<double>(d));
    if (p[i] > mx) mx = p[i];
  }
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < S; ++i) acc += p[i] / z * t.values(i, c);
    out[c] = acc;
  }
  return out;
}

core::Matrix direct_gather_rows(const core::Matrix& mtx, const std::vector<std::size_t>& rows) {
  core::Matrix out(rows.size(), mtx.cols());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t c = 0; c < mtx.cols(); ++c) out(j, c) = mtx(rows[j], c);
  return out;
}

}  // namespace sparf::oracle
