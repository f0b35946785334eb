#include "cmmmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "cmmmix/error.hpp"
#include "cmmmix/linalg.hpp"

namespace cmmmix {

using detail::get_le;
using detail::put_le;

namespace {

constexpr char kStateMagic[8] = {'C', 'M', 'M', 'X', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 2;
constexpr int kMaxLocationTries = 1000;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw Error(ErrorCode::InvalidHyperpriors, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put_le(out, static_cast<std::uint64_t>(m.rows()));
  put_le(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_le(out, m(i, j));
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  std::uint64_t rows = 0, cols = 0;
  if (!get_le(in, rows) || !get_le(in, cols) || rows > (1u << 28) || cols > (1u << 28))
    throw Error(ErrorCode::Io, "truncated checkpoint");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!get_le(in, m(i, j))) throw Error(ErrorCode::Io, "truncated checkpoint");
  return m;
}

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidHyperpriors, what); }

}  // namespace

std::vector<double> default_cutoffs(int levels) {
  if (levels < 2) invalid("ordinal variables need at least two levels");
  if (levels == 2) return {0.0};
  std::vector<double> c(static_cast<std::size_t>(levels - 1));
  for (int l = 0; l < levels - 1; ++l) c[static_cast<std::size_t>(l)] = -3.0 + 6.0 * l / (levels - 2);
  return c;
}

Hyperpriors default_hyperpriors(const MixedDataset& data, int truncation,
                                std::optional<DistanceSpec> distance) {
  const auto& layout = data.layout();
  const int P = layout.latent_dim();
  Hyperpriors hp;
  hp.truncation = truncation;
  hp.v = 1.5 * 1.5;
  hp.a_alpha = 0.5;
  hp.b_alpha = 0.5;
  hp.a_tau = 3.0;
  hp.b_tau = (hp.a_tau - 1.0) * hp.v / 3.0;
  hp.h = hp.v / 3.0;
  hp.tau2_max = 6.0;
  hp.nu = P + 2.0;
  hp.a_s = P + 2.0;
  hp.b_s = (hp.nu - P - 1.0) / (3.0 * hp.a_s) * hp.v * Eigen::MatrixXd::Identity(P, P);
  for (int c : layout.random_nominal)
    hp.dirichlet.emplace_back(static_cast<std::size_t>(data.schema()[static_cast<std::size_t>(c)].levels), 1.0);
  for (int c : layout.random_ordinal)
    hp.cutoffs.push_back(default_cutoffs(data.schema()[static_cast<std::size_t>(c)].levels));
  if (distance) {
    hp.distance = std::move(*distance);
  } else if (layout.q() == 0) {
    hp.distance.dstar = 1.0;
  } else {
    hp.distance = equal_weight_spec(data, 1.0);
    hp.distance.dstar = data.rows() >= 2 ? solve_dstar(data, hp.distance, 0.2) : 1.0;
  }
  return hp;
}

void validate_hyperpriors(const Hyperpriors& hp, const Layout& layout) {
  const int P = layout.latent_dim();
  if (P < 1) invalid("the model needs at least one ordinal or continuous random variable");
  if (!(hp.a_alpha > 0 && hp.b_alpha > 0)) invalid("alpha prior parameters must be positive");
  if (!(hp.a_tau > 0 && hp.b_tau > 0)) invalid("tau^2 prior parameters must be positive");
  if (!(hp.tau2_max > 0)) invalid("tau2_max must be positive");
  if (!(hp.h > 0)) invalid("h must be positive");
  if (!(hp.nu > P + 1.0)) invalid("nu must exceed P + 1");
  if (!(hp.a_s > P - 1.0)) invalid("a_S must exceed P - 1");
  if (hp.b_s.rows() != P || hp.b_s.cols() != P || !is_symmetric_pd(hp.b_s))
    invalid("B_S must be a P x P positive-definite matrix");
  if (hp.truncation < 1) invalid("N must be at least 1");
  if (static_cast<int>(hp.dirichlet.size()) != layout.p_n())
    invalid("one Dirichlet concentration vector per nominal random variable");
  if (static_cast<int>(hp.cutoffs.size()) != layout.p_o())
    invalid("one cutoff vector per ordinal random variable");
  for (const auto& a : hp.dirichlet)
    for (double x : a)
      if (!(x > 0)) invalid("Dirichlet concentrations must be positive");
  for (const auto& c : hp.cutoffs) {
    for (std::size_t l = 0; l < c.size(); ++l) {
      if (!std::isfinite(c[l])) invalid("interior cutoffs must be finite");
      if (l > 0 && !(c[l] > c[l - 1])) invalid("cutoffs must be strictly increasing");
    }
  }
  if (static_cast<int>(hp.distance.size()) != layout.q())
    invalid("distance spec must cover every fixed variable");
  validate_distance_spec(hp.distance);
}

nlohmann::json hyperpriors_to_json(const Hyperpriors& hp) {
  nlohmann::json j;
  j["a_alpha"] = hp.a_alpha;
  j["b_alpha"] = hp.b_alpha;
  j["a_tau"] = hp.a_tau;
  j["b_tau"] = hp.b_tau;
  j["tau2_max"] = std::isinf(hp.tau2_max) ? nlohmann::json("inf") : nlohmann::json(hp.tau2_max);
  j["nu"] = hp.nu;
  j["a_s"] = hp.a_s;
  j["b_s"] = matrix_to_json(hp.b_s);
  j["h"] = hp.h;
  j["v"] = hp.v;
  j["dirichlet"] = hp.dirichlet;
  j["cutoffs"] = hp.cutoffs;
  j["truncation"] = hp.truncation;
  auto vars = nlohmann::json::array();
  for (const auto& v : hp.distance.variables)
    vars.push_back({{"kind", to_string(v.kind)}, {"levels", v.levels}, {"lower", v.lower}, {"upper", v.upper}});
  j["distance"] = {{"weights", hp.distance.weights}, {"dstar", hp.distance.dstar}, {"variables", vars}};
  return j;
}

Hyperpriors hyperpriors_from_json(const nlohmann::json& j) {
  try {
    Hyperpriors hp;
    hp.a_alpha = j.at("a_alpha").get<double>();
    hp.b_alpha = j.at("b_alpha").get<double>();
    hp.a_tau = j.at("a_tau").get<double>();
    hp.b_tau = j.at("b_tau").get<double>();
    const auto& t = j.at("tau2_max");
    hp.tau2_max = t.is_string() ? std::numeric_limits<double>::infinity() : t.get<double>();
    hp.nu = j.at("nu").get<double>();
    hp.a_s = j.at("a_s").get<double>();
    hp.b_s = matrix_from_json(j.at("b_s"));
    hp.h = j.at("h").get<double>();
    hp.v = j.value("v", 2.25);
    hp.dirichlet = j.at("dirichlet").get<std::vector<std::vector<double>>>();
    hp.cutoffs = j.at("cutoffs").get<std::vector<std::vector<double>>>();
    hp.truncation = j.at("truncation").get<int>();
    const auto& d = j.at("distance");
    hp.distance.weights = d.at("weights").get<std::vector<double>>();
    hp.distance.dstar = d.at("dstar").get<double>();
    for (const auto& v : d.at("variables")) {
      DistanceVariable dv;
      const auto kind = v.at("kind").get<std::string>();
      dv.kind = kind == "ordinal" ? Kind::Ordinal : kind == "nominal" ? Kind::Nominal : Kind::Continuous;
      dv.levels = v.at("levels").get<int>();
      dv.lower = v.at("lower").get<double>();
      dv.upper = v.at("upper").get<double>();
      hp.distance.variables.push_back(dv);
    }
    return hp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidHyperpriors, e.what());
  }
}

// ---------------------------------------------------------------------------

Model::Model(MixedDataset data, Design design, Hyperpriors hyper)
    : data_(std::move(data)), design_(std::move(design)), hyper_(std::move(hyper)) {
  validate_hyperpriors(hyper_, data_.layout());
  fixed_ = data_.fixed_matrix();
  for (int c : layout().random_nominal) design_uses_nominal_.push_back(design_.references(c));
  for (int c : layout().random_ordinal)
    if (design_.references(c)) throw Error(ErrorCode::InvalidDesign, "design uses a random ordinal");
  for (int c : layout().random_continuous)
    if (design_.references(c)) throw Error(ErrorCode::InvalidDesign, "design uses a random continuous");
  for (int j = 0; j < p_n(); ++j)
    if (static_cast<int>(hyper_.dirichlet[static_cast<std::size_t>(j)].size()) != nominal_levels(j))
      invalid("Dirichlet vector length must equal the category count");
  for (int r = 0; r < p_o(); ++r)
    if (static_cast<int>(hyper_.cutoffs[static_cast<std::size_t>(r)].size()) != ordinal_levels(r) - 1)
      invalid("cutoff count must be levels - 1");
}

int Model::latent_column(int r) const {
  return r < p_o() ? layout().random_ordinal[static_cast<std::size_t>(r)]
                   : layout().random_continuous[static_cast<std::size_t>(r - p_o())];
}

int Model::ordinal_levels(int r) const {
  return data_.schema()[static_cast<std::size_t>(layout().random_ordinal[static_cast<std::size_t>(r)])].levels;
}

int Model::nominal_levels(int j) const {
  return data_.schema()[static_cast<std::size_t>(nominal_column(j))].levels;
}

std::pair<double, double> Model::interval(int r, int level) const {
  const auto& c = hyper_.cutoffs[static_cast<std::size_t>(r)];
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double lo = level <= 1 ? -inf : c[static_cast<std::size_t>(level - 2)];
  const double hi = level >= static_cast<int>(c.size()) + 1 ? inf : c[static_cast<std::size_t>(level - 1)];
  return {lo, hi};
}

int Model::level_of(int r, double w) const {
  const auto& c = hyper_.cutoffs[static_cast<std::size_t>(r)];
  // levels are (gamma_{l-1}, gamma_l]: count cutoffs strictly below w
  return 1 + static_cast<int>(std::lower_bound(c.begin(), c.end(), w) - c.begin());
}

// ---------------------------------------------------------------------------

void refresh_design_row(const Model& model, ModelState& state, int i) {
  model.design().evaluate(state.row(i),
                          {state.design.row(i).data(), static_cast<std::size_t>(model.k())});
}

void refresh_neighborhoods(const Model& model, ModelState& state) {
  state.eta.resize(static_cast<std::size_t>(model.n()));
  const auto& spec = model.hyper().distance;
  const int q = model.q();
  std::vector<double> f(static_cast<std::size_t>(q));
  for (int i = 0; i < model.n(); ++i) {
    for (int l = 0; l < q; ++l) f[static_cast<std::size_t>(l)] = model.fixed()(i, l);
    state.eta[static_cast<std::size_t>(i)] = neighborhood(f, state.locations, spec);
  }
}

void refresh_caches(const Model& model, ModelState& state) {
  state.design.resize(model.n(), model.k());
  for (int i = 0; i < model.n(); ++i) refresh_design_row(model, state, i);
  refresh_neighborhoods(model, state);
}

std::vector<double> local_log_weights(std::span<const int> eta, const Eigen::VectorXd& sticks,
                                      const Eigen::VectorXd& log1m_sticks) {
  std::vector<double> out(eta.size());
  double log_rest = 0.0;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    const double v = sticks(eta[l]);
    if (l + 1 == eta.size()) {
      out[l] = log_rest;
    } else {
      out[l] = std::log(v) + log_rest;
      log_rest += log1m_sticks.size() ? log1m_sticks(eta[l]) : std::log1p(-v);
    }
  }
  return out;
}

std::vector<double> local_weights(std::span<const int> eta, const Eigen::VectorXd& sticks,
                                  const Eigen::VectorXd& log1m_sticks) {
  std::vector<double> out(eta.size());
  double rest = 1.0;
  for (std::size_t l = 0; l < eta.size(); ++l) {
    if (l + 1 == eta.size()) {
      out[l] = rest;
    } else {
      out[l] = sticks(eta[l]) * rest;
      rest = log1m_sticks.size() ? rest * std::exp(log1m_sticks(eta[l])) : rest - out[l];
    }
  }
  return out;
}

void set_stick(ModelState& s, int h, std::pair<double, double> log_draw) {
  s.sticks(h) = std::clamp(std::exp(log_draw.first), 1e-300, 1.0 - 0x1.0p-53);
  s.log1m_sticks(h) = log_draw.second;
}

void draw_location_prior(const Model& model, Rng& rng, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  for (int l = 0; l < model.q(); ++l) {
    const auto& v = model.location_support(l);
    if (v.kind == Kind::Continuous) {
      out(l) = v.lower + (v.upper - v.lower) * rng.uniform();
    } else {
      out(l) = 1.0 + std::min(v.levels - 1, static_cast<int>(rng.uniform() * v.levels));
    }
  }
}

ModelState init_state(const Model& model, std::uint64_t seed) {
  const int n = model.n(), N = model.N(), P = model.P(), k = model.k(), q = model.q();
  const auto& hp = model.hyper();
  const auto& data = model.data();
  ModelState s;
  s.sweep = 0;

  s.alpha = hp.a_alpha / hp.b_alpha;
  s.beta0 = Eigen::MatrixXd::Zero(k, P);
  const double tau_mean = hp.a_tau > 1.0 ? hp.b_tau / (hp.a_tau - 1.0) : hp.b_tau;
  s.tau2 = Eigen::VectorXd::Constant(k, std::min(tau_mean, hp.tau2_max));
  s.scale = hp.a_s * hp.b_s;

  {
    Rng rng(seed, 0, StreamTag::Init, 0);
    s.sticks.resize(N);
    s.log1m_sticks.resize(N);
    for (int h = 0; h < N; ++h) set_stick(s, h, draw_log_beta(rng, 1.0, s.alpha));
  }

  s.locations.resize(N, q);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxLocationTries && !ok; ++attempt) {
    Rng rng(seed, 0, StreamTag::Init, 1, static_cast<std::uint64_t>(attempt));
    for (int h = 0; h < N; ++h) draw_location_prior(model, rng, s.locations.row(h));
    refresh_neighborhoods(model, s);
    ok = std::all_of(s.eta.begin(), s.eta.end(), [](const auto& e) { return !e.empty(); });
  }
  if (!ok) throw Error(ErrorCode::InitFailure, "no location draw left every row with a neighbor");

  s.beta.assign(static_cast<std::size_t>(N), Eigen::MatrixXd());
  s.sigma.assign(static_cast<std::size_t>(N), Eigen::MatrixXd());
  s.psi.assign(static_cast<std::size_t>(N), {});
  for (int h = 0; h < N; ++h) {
    Rng rng(seed, 0, StreamTag::Init, 2, static_cast<std::uint64_t>(h));
    Eigen::MatrixXd b(k, P);
    for (int r = 0; r < P; ++r)
      for (int m = 0; m < k; ++m) b(m, r) = s.beta0(m, r) + std::sqrt(s.tau2(m)) * draw_normal(rng);
    s.beta[static_cast<std::size_t>(h)] = b;
    s.sigma[static_cast<std::size_t>(h)] = draw_inverse_wishart(rng, hp.nu, s.scale);
    for (int j = 0; j < model.p_n(); ++j)
      s.psi[static_cast<std::size_t>(h)].push_back(draw_dirichlet(rng, hp.dirichlet[static_cast<std::size_t>(j)]));
  }

  // Hot-deck every missing cell from the observed values of its column.
  s.completed = data.values();
  {
    Rng rng(seed, 0, StreamTag::Init, 3);
    for (std::size_t c = 0; c < data.cols(); ++c) {
      std::vector<double> observed;
      for (std::size_t i = 0; i < data.rows(); ++i)
        if (!data.missing(i, c)) observed.push_back(data.value(i, c));
      const auto& spec = data.schema()[c];
      for (std::size_t i = 0; i < data.rows(); ++i) {
        if (!data.missing(i, c)) continue;
        double v;
        if (!observed.empty()) {
          v = observed[std::min(observed.size() - 1,
                                static_cast<std::size_t>(rng.uniform() * static_cast<double>(observed.size())))];
        } else if (spec.categorical()) {
          v = 1.0 + std::min(spec.levels - 1, static_cast<int>(rng.uniform() * spec.levels));
        } else {
          v = 0.0;
        }
        s.completed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
      }
    }
  }
  s.design.resize(n, k);
  for (int i = 0; i < n; ++i) refresh_design_row(model, s, i);

  s.alloc.resize(static_cast<std::size_t>(n));
  s.latent.resize(n, P);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, 0, StreamTag::Init, 4, static_cast<std::uint64_t>(i));
    const auto& eta = s.eta[static_cast<std::size_t>(i)];
    const int h = eta[std::min(eta.size() - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(eta.size())))];
    s.alloc[static_cast<std::size_t>(i)] = h;
    const Eigen::RowVectorXd mean = s.design.row(i) * s.beta[static_cast<std::size_t>(h)];
    for (int r = 0; r < P; ++r) {
      const int col = model.latent_column(r);
      if (r < model.p_o()) {
        const auto [lo, hi] = model.interval(r, static_cast<int>(s.completed(i, col)));
        const double sd = std::sqrt(s.sigma[static_cast<std::size_t>(h)](r, r));
        s.latent(i, r) = draw_truncated_normal(rng, mean(r), sd, lo, hi);
      } else {
        s.latent(i, r) = s.completed(i, col);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::AllocationOutsideNeighborhood: return "AllocationOutsideNeighborhood";
    case ViolationKind::LatentIntervalViolation: return "LatentIntervalViolation";
    case ViolationKind::LatentMismatch: return "LatentMismatch";
    case ViolationKind::ObservedCellModified: return "ObservedCellModified";
    case ViolationKind::UnresolvedCell: return "UnresolvedCell";
    case ViolationKind::PsiNotSimplex: return "PsiNotSimplex";
    case ViolationKind::SigmaNotPD: return "SigmaNotPD";
    case ViolationKind::ScaleNotPD: return "ScaleNotPD";
    case ViolationKind::StickOutOfRange: return "StickOutOfRange";
    case ViolationKind::Tau2OutOfRange: return "Tau2OutOfRange";
    case ViolationKind::AlphaNonPositive: return "AlphaNonPositive";
    case ViolationKind::LocationOutOfSupport: return "LocationOutOfSupport";
    case ViolationKind::ShapeMismatch: return "ShapeMismatch";
  }
  return "Unknown";
}

std::vector<Violation> validate(const ModelState& s, const Model& model) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, std::string d) { out.push_back({k, std::move(d)}); };
  const int n = model.n(), N = model.N(), P = model.P(), k = model.k(), q = model.q();
  const auto& data = model.data();

  if (s.sticks.size() != N || s.log1m_sticks.size() != N || s.locations.rows() != N || s.locations.cols() != q ||
      static_cast<int>(s.beta.size()) != N || static_cast<int>(s.sigma.size()) != N ||
      static_cast<int>(s.psi.size()) != N || static_cast<int>(s.alloc.size()) != n ||
      s.latent.rows() != n || s.latent.cols() != P || s.completed.rows() != n ||
      s.completed.cols() != static_cast<Eigen::Index>(data.cols()) || s.beta0.rows() != k ||
      s.beta0.cols() != P || s.tau2.size() != k || s.scale.rows() != P ||
      static_cast<int>(s.eta.size()) != n) {
    add(ViolationKind::ShapeMismatch, "state dimensions do not match the model");
    return out;
  }

  for (int i = 0; i < n; ++i) {
    const auto& eta = s.eta[static_cast<std::size_t>(i)];
    const int h = s.alloc[static_cast<std::size_t>(i)];
    if (!std::binary_search(eta.begin(), eta.end(), h))
      add(ViolationKind::AllocationOutsideNeighborhood, "row " + std::to_string(i));
  }
  // Neighborhood cache must reflect the current locations.
  {
    ModelState fresh;
    fresh.locations = s.locations;
    refresh_neighborhoods(model, fresh);
    if (fresh.eta != s.eta) add(ViolationKind::ShapeMismatch, "stale neighborhood cache");
  }

  for (int i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < data.cols(); ++c) {
      const double v = s.completed(i, static_cast<Eigen::Index>(c));
      if (std::isnan(v)) {
        add(ViolationKind::UnresolvedCell, "row " + std::to_string(i) + " col " + std::to_string(c));
      } else if (!data.missing(static_cast<std::size_t>(i), c) && v != data.value(static_cast<std::size_t>(i), c)) {
        add(ViolationKind::ObservedCellModified, "row " + std::to_string(i) + " col " + std::to_string(c));
      }
    }
    for (int r = 0; r < P; ++r) {
      const int col = model.latent_column(r);
      const double w = s.latent(i, r);
      if (r < model.p_o()) {
        const auto [lo, hi] = model.interval(r, static_cast<int>(s.completed(i, col)));
        if (!(w > lo && w <= hi))
          add(ViolationKind::LatentIntervalViolation, "row " + std::to_string(i) + " coord " + std::to_string(r));
      } else if (w != s.completed(i, col)) {
        add(ViolationKind::LatentMismatch, "row " + std::to_string(i) + " coord " + std::to_string(r));
      }
    }
  }

  for (int h = 0; h < N; ++h) {
    const double v = s.sticks(h);
    const double l1m = s.log1m_sticks(h);
    if (!(v > 0.0 && v < 1.0) || !(l1m < 0.0) || std::abs(std::exp(l1m) - (1.0 - v)) > 1e-12)
      add(ViolationKind::StickOutOfRange, "component " + std::to_string(h));
    if (s.beta[static_cast<std::size_t>(h)].rows() != k || s.beta[static_cast<std::size_t>(h)].cols() != P)
      add(ViolationKind::ShapeMismatch, "beta " + std::to_string(h));
    if (!is_symmetric_pd(s.sigma[static_cast<std::size_t>(h)]))
      add(ViolationKind::SigmaNotPD, "component " + std::to_string(h));
    for (const auto& p : s.psi[static_cast<std::size_t>(h)])
      if (std::abs(p.sum() - 1.0) > 1e-12 || p.minCoeff() < 0.0)
        add(ViolationKind::PsiNotSimplex, "component " + std::to_string(h));
    for (int l = 0; l < q; ++l) {
      const auto& var = model.location_support(l);
      const double g = s.locations(h, l);
      const bool inside = var.kind == Kind::Continuous
                              ? (g >= var.lower && g <= var.upper)
                              : (g >= 1 && g <= var.levels && g == std::floor(g));
      if (!inside) add(ViolationKind::LocationOutOfSupport, "component " + std::to_string(h));
    }
  }
  for (int m = 0; m < k; ++m)
    if (!(s.tau2(m) > 0.0 && s.tau2(m) <= model.hyper().tau2_max))
      add(ViolationKind::Tau2OutOfRange, "row " + std::to_string(m));
  if (!is_symmetric_pd(s.scale)) add(ViolationKind::ScaleNotPD, "S");
  if (!(s.alpha > 0.0) || !std::isfinite(s.alpha)) add(ViolationKind::AlphaNonPositive, "alpha");
  return out;
}

// ---------------------------------------------------------------------------

void write_state(std::ostream& out, const ModelState& s) {
  out.write(kStateMagic, sizeof(kStateMagic));
  put_le(out, kStateVersion);
  put_le(out, s.sweep);
  put_le(out, s.alpha);
  write_matrix(out, s.sticks);
  write_matrix(out, s.log1m_sticks);
  write_matrix(out, s.locations);
  put_le(out, static_cast<std::uint64_t>(s.beta.size()));
  for (std::size_t h = 0; h < s.beta.size(); ++h) {
    write_matrix(out, s.beta[h]);
    write_matrix(out, s.sigma[h]);
    put_le(out, static_cast<std::uint64_t>(s.psi[h].size()));
    for (const auto& p : s.psi[h]) write_matrix(out, p);
  }
  put_le(out, static_cast<std::uint64_t>(s.alloc.size()));
  for (int a : s.alloc) put_le(out, static_cast<std::int64_t>(a));
  write_matrix(out, s.latent);
  write_matrix(out, Eigen::MatrixXd(s.completed));
  write_matrix(out, s.beta0);
  write_matrix(out, s.tau2);
  write_matrix(out, s.scale);
}

ModelState read_state(std::istream& in, const Model& model) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
    throw Error(ErrorCode::Io, "not a checkpoint file");
  std::uint32_t version = 0;
  if (!get_le(in, version) || version != kStateVersion)
    throw Error(ErrorCode::Io, "unsupported checkpoint version");
  ModelState s;
  if (!get_le(in, s.sweep) || !get_le(in, s.alpha)) throw Error(ErrorCode::Io, "truncated checkpoint");
  s.sticks = read_matrix(in);
  s.log1m_sticks = read_matrix(in);
  s.locations = read_matrix(in);
  std::uint64_t comps = 0;
  if (!get_le(in, comps) || comps > (1u << 20)) throw Error(ErrorCode::Io, "truncated checkpoint");
  for (std::uint64_t h = 0; h < comps; ++h) {
    s.beta.push_back(read_matrix(in));
    s.sigma.push_back(read_matrix(in));
    std::uint64_t pn = 0;
    if (!get_le(in, pn) || pn > (1u << 20)) throw Error(ErrorCode::Io, "truncated checkpoint");
    std::vector<Eigen::VectorXd> psi;
    for (std::uint64_t j = 0; j < pn; ++j) psi.push_back(read_matrix(in));
    s.psi.push_back(std::move(psi));
  }
  std::uint64_t n = 0;
  if (!get_le(in, n) || n > (1u << 30)) throw Error(ErrorCode::Io, "truncated checkpoint");
  s.alloc.resize(n);
  for (auto& a : s.alloc) {
    std::int64_t v = 0;
    if (!get_le(in, v)) throw Error(ErrorCode::Io, "truncated checkpoint");
    a = static_cast<int>(v);
  }
  s.latent = read_matrix(in);
  s.completed = read_matrix(in);
  s.beta0 = read_matrix(in);
  s.tau2 = read_matrix(in);
  s.scale = read_matrix(in);
  // Snapshots may carry no row-level arrays; those get no caches either.
  const bool rows = s.completed.size() > 0;
  if ((rows && (s.completed.rows() != model.n() || s.latent.cols() != model.P())) ||
      static_cast<int>(s.beta.size()) != model.N() || s.locations.rows() != model.N() ||
      s.log1m_sticks.size() != s.sticks.size())
    throw Error(ErrorCode::Io, "checkpoint does not match the model");
  if (rows) refresh_caches(model, s);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_state(out, state);
}

ModelState load_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return read_state(in, model);
}

}  // namespace cmmmix
