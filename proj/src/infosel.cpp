#include "cmmmix/infosel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "cmmmix/error.hpp"

namespace cmmmix {
namespace {

int count_distinct(const std::vector<int>& codes) {
  std::vector<int> seen;
  for (int c : codes)
    if (c >= 0) seen.push_back(c);
  std::sort(seen.begin(), seen.end());
  return static_cast<int>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::vector<double> column_of(const Eigen::MatrixXd& m, int c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, c);
  return out;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::vector<int> discretize(std::span<const double> column, Kind kind, int bins) {
  std::vector<int> codes(column.size(), -1);
  if (kind != Kind::Continuous) {
    for (std::size_t i = 0; i < column.size(); ++i)
      if (!std::isnan(column[i])) codes[i] = static_cast<int>(column[i]) - 1;
    return codes;
  }
  if (bins < 1) throw Error(ErrorCode::InvalidConfig, "bins must be positive");
  std::vector<double> sorted;
  for (double v : column)
    if (!std::isnan(v)) sorted.push_back(v);
  if (sorted.empty()) return codes;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> cuts;
  for (int b = 1; b < bins; ++b) {
    const double c = sorted[(static_cast<std::size_t>(b) * n) / static_cast<std::size_t>(bins)];
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (std::isnan(column[i])) continue;
    codes[i] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), column[i]) - cuts.begin());
  }
  return codes;
}

double entropy_of_probs(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= (p / total) * std::log(p / total);
  return h;
}

double entropy(std::span<const double> column, Kind kind, int bins) {
  std::map<int, double> counts;
  for (int c : discretize(column, kind, bins))
    if (c >= 0) counts[c] += 1.0;
  std::vector<double> p;
  for (const auto& [k, v] : counts) p.push_back(v);
  return p.empty() ? 0.0 : entropy_of_probs(p);
}

double mi_from_table(const Eigen::MatrixXd& joint) {
  const double total = joint.sum();
  if (!(total > 0.0)) return 0.0;
  Eigen::VectorXd ra = Eigen::VectorXd::Zero(joint.rows());
  Eigen::VectorXd rb = Eigen::VectorXd::Zero(joint.cols());
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      ra(i) += joint(i, j);
      rb(j) += joint(i, j);
    }
  // Summed in sorted order so that transposing the table gives the same bits.
  std::vector<double> terms;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j)
      if (joint(i, j) > 0.0) {
        const double pij = joint(i, j) / total;
        terms.push_back(pij * std::log(pij / ((ra(i) / total) * (rb(j) / total))));
      }
  std::sort(terms.begin(), terms.end());
  double mi = 0.0;
  for (double t : terms) mi += t;
  return std::max(mi, 0.0);
}

MiEstimate empirical_mi(std::span<const double> a, Kind kind_a, std::span<const double> b,
                        Kind kind_b, int bins) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidConfig, "columns are not aligned");
  std::vector<double> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isnan(a[i]) && !std::isnan(b[i])) {
      pa.push_back(a[i]);
      pb.push_back(b[i]);
    }
  const auto ca = discretize(pa, kind_a, bins);
  const auto cb = discretize(pb, kind_b, bins);
  if (count_distinct(ca) < 2 || count_distinct(cb) < 2) return {0.0, true};
  const int ra = *std::max_element(ca.begin(), ca.end()) + 1;
  const int rb = *std::max_element(cb.begin(), cb.end()) + 1;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ra, rb);
  for (std::size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;
  return {mi_from_table(table), false};
}

double i_max(std::span<const double> mi_with_each_x) {
  if (mi_with_each_x.empty()) throw Error(ErrorCode::InvalidConfig, "no X columns");
  return *std::max_element(mi_with_each_x.begin(), mi_with_each_x.end());
}

MiReport mrmr_from_information(const Eigen::MatrixXd& fx_mi, const Eigen::VectorXd& h_nominal,
                               const Eigen::MatrixXd& ff_mi, const Eigen::VectorXd& h_fixed,
                               const MrmrOptions& options) {
  if (!(options.t1 > 0.0 && options.t1 < 1.0 && options.t2 > 0.0 && options.t2 < 1.0))
    throw Error(ErrorCode::InvalidThreshold, "thresholds must lie in (0, 1)");
  const auto q = static_cast<int>(fx_mi.rows());
  const auto pn = static_cast<int>(fx_mi.cols());
  if (q == 0) throw Error(ErrorCode::InvalidConfig, "no fixed variables to select from");
  if (pn == 0) throw Error(ErrorCode::InvalidConfig, "no nominal random variables");

  MiReport r;
  r.fx_mi = fx_mi.cwiseMax(0.0);
  r.ff_mi = ff_mi.cwiseMax(0.0);
  r.h_nominal = h_nominal;
  r.h_fixed = h_fixed;
  r.fx_normalized.resize(q, pn);
  for (int l = 0; l < q; ++l)
    for (int j = 0; j < pn; ++j) r.fx_normalized(l, j) = ratio(r.fx_mi(l, j), h_nominal(j));
  r.ff_normalized.resize(q, q);
  for (int l = 0; l < q; ++l)
    for (int m = 0; m < q; ++m) r.ff_normalized(l, m) = ratio(r.ff_mi(l, m), h_fixed(m));
  r.imax = r.fx_mi.rowwise().maxCoeff();
  r.imax_normalized = r.fx_normalized.rowwise().maxCoeff();

  std::vector<int> selected;
  std::vector<int> remaining;
  for (int l = 0; l < q; ++l) remaining.push_back(l);

  auto take = [&](int l, double score) {
    selected.push_back(l);
    remaining.erase(std::find(remaining.begin(), remaining.end(), l));
    r.trace.push_back({l, score});
  };

  int seed = 0;
  for (int l = 1; l < q; ++l)
    if (r.imax(l) > r.imax(seed)) seed = l;
  take(seed, r.imax(seed));

  for (;;) {
    if (remaining.empty()) {
      r.stop_reason = "exhausted";
      break;
    }
    double relevancy = -std::numeric_limits<double>::infinity();
    double redundancy = std::numeric_limits<double>::infinity();
    for (int l : remaining) {
      relevancy = std::max(relevancy, r.imax_normalized(l));
      double worst = 0.0;
      for (int s : selected) worst = std::max(worst, r.ff_normalized(s, l));
      redundancy = std::min(redundancy, worst);
    }
    if (relevancy < options.t1) {
      r.stop_reason = "relevancy";
      break;
    }
    if (redundancy > options.t2) {
      r.stop_reason = "redundancy";
      break;
    }
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int l : remaining) {
      double red = 0.0;
      for (int s : selected) red += r.ff_mi(l, s);
      const double score = r.imax(l) - red / static_cast<double>(selected.size());
      if (score > best_score) {
        best_score = score;
        best = l;
      }
    }
    take(best, best_score);
  }

  r.weights.assign(static_cast<std::size_t>(q), 0.0);
  for (int s : selected) r.weights[static_cast<std::size_t>(s)] = 1.0 / static_cast<double>(selected.size());
  return r;
}

MiReport mrmr_select(const MixedDataset& data, const MrmrOptions& options) {
  const auto& layout = data.layout();
  const auto& schema = data.schema();
  const int q = layout.q();
  const int pn = layout.p_n();
  if (q == 0) throw Error(ErrorCode::InvalidConfig, "no fixed variables to select from");
  if (pn == 0) throw Error(ErrorCode::InvalidConfig, "no nominal random variables");

  // Selection runs on the values as given; continuous fixed variables are
  // discretized, so standardization does not matter.
  std::vector<std::vector<double>> fcols, xcols;
  std::vector<Kind> fkinds;
  for (int c : layout.fixed) {
    fcols.push_back(column_of(data.values(), c));
    fkinds.push_back(schema[static_cast<std::size_t>(c)].kind);
  }
  for (int c : layout.random_nominal) xcols.push_back(column_of(data.values(), c));

  Eigen::MatrixXd fx(q, pn), ff = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd hf(q), hx(pn);
  std::vector<bool> degenerate_f(static_cast<std::size_t>(q), false);
  std::vector<bool> degenerate_x(static_cast<std::size_t>(pn), false);
  for (int l = 0; l < q; ++l) hf(l) = entropy(fcols[l], fkinds[l], options.bins);
  for (int j = 0; j < pn; ++j) hx(j) = entropy(xcols[j], Kind::Nominal, options.bins);
  for (int l = 0; l < q; ++l)
    for (int j = 0; j < pn; ++j) {
      const auto e = empirical_mi(fcols[l], fkinds[l], xcols[j], Kind::Nominal, options.bins);
      fx(l, j) = e.value;
      if (e.degenerate) {
        if (count_distinct(discretize(fcols[l], fkinds[l], options.bins)) < 2) degenerate_f[l] = true;
        if (count_distinct(discretize(xcols[j], Kind::Nominal, options.bins)) < 2) degenerate_x[j] = true;
      }
    }
  for (int l = 0; l < q; ++l)
    for (int m = 0; m < l; ++m) {
      const double v = empirical_mi(fcols[l], fkinds[l], fcols[m], fkinds[m], options.bins).value;
      ff(l, m) = ff(m, l) = v;
    }
  for (int l = 0; l < q; ++l) ff(l, l) = hf(l);

  MiReport r = mrmr_from_information(fx, hx, ff, hf, options);
  for (int c : layout.fixed) r.fixed_names.push_back(schema[static_cast<std::size_t>(c)].name);
  for (int c : layout.random_nominal) r.nominal_names.push_back(schema[static_cast<std::size_t>(c)].name);
  for (int l = 0; l < q; ++l)
    if (degenerate_f[l]) r.degenerate.push_back(r.fixed_names[l]);
  for (int j = 0; j < pn; ++j)
    if (degenerate_x[j]) r.degenerate.push_back(r.nominal_names[j]);
  return r;
}

nlohmann::json to_json(const MiReport& r) {
  nlohmann::json j;
  j["fixed"] = r.fixed_names;
  j["nominal"] = r.nominal_names;
  j["mi_fixed_nominal"] = matrix_json(r.fx_mi);
  j["mi_fixed_nominal_normalized"] = matrix_json(r.fx_normalized);
  j["imax"] = vector_json(r.imax);
  j["imax_normalized"] = vector_json(r.imax_normalized);
  j["mi_fixed_fixed"] = matrix_json(r.ff_mi);
  j["mi_fixed_fixed_normalized"] = matrix_json(r.ff_normalized);
  j["entropy_fixed"] = vector_json(r.h_fixed);
  j["entropy_nominal"] = vector_json(r.h_nominal);
  auto trace = nlohmann::json::array();
  for (const auto& s : r.trace) {
    nlohmann::json step{{"index", s.index}, {"score", s.score}};
    if (static_cast<std::size_t>(s.index) < r.fixed_names.size())
      step["name"] = r.fixed_names[static_cast<std::size_t>(s.index)];
    trace.push_back(step);
  }
  j["trace"] = trace;
  j["stop_reason"] = r.stop_reason;
  j["weights"] = r.weights;
  j["degenerate"] = r.degenerate;
  return j;
}

std::string format_table(const MiReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "variable" << std::right << std::setw(10) << "imax"
      << std::setw(12) << "imax_norm" << std::setw(10) << "weight" << "\n";
  for (Eigen::Index l = 0; l < r.imax.size(); ++l) {
    const std::string name = static_cast<std::size_t>(l) < r.fixed_names.size()
                                 ? r.fixed_names[static_cast<std::size_t>(l)]
                                 : "F" + std::to_string(l + 1);
    out << std::left << std::setw(20) << name << std::right << std::fixed << std::setprecision(4)
        << std::setw(10) << r.imax(l) << std::setw(12) << r.imax_normalized(l) << std::setw(10)
        << r.weights[static_cast<std::size_t>(l)] << "\n";
  }
  out << "stop: " << r.stop_reason << "\n";
  return out.str();
}

}  // namespace cmmmix
