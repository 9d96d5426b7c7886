#pragma once

// Problem instances: spin graphs, Ising couplings and the transverse-field
// annealing Hamiltonian, all in the computational (sigma^z product) basis.
//
// Basis convention: state index s encodes the sigma^z bitstring with qubit 0
// as the most significant bit; bit value 0 is spin up (sigma^z = +1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qanneal/error.hpp"
#include "qanneal/linalg.hpp"

namespace qanneal {

enum class GraphClass { linear, complete, noncomplete, custom };

inline std::string_view to_string(GraphClass c) {
  switch (c) {
    case GraphClass::linear: return "linear";
    case GraphClass::complete: return "complete";
    case GraphClass::noncomplete: return "noncomplete";
    case GraphClass::custom: return "custom";
  }
  return "custom";
}

inline GraphClass graph_class_from_string(std::string_view s) {
  if (s == "linear") return GraphClass::linear;
  if (s == "complete") return GraphClass::complete;
  if (s == "noncomplete") return GraphClass::noncomplete;
  if (s == "custom") return GraphClass::custom;
  throw Error(Errc::invalid_parameter, "unknown graph class '" + std::string(s) + "'");
}

using Edge = std::pair<int, int>;

struct SpinGraph {
  int n = 0;
  std::vector<Edge> edges;  // i < j, sorted
  RealMatrix J;             // symmetric, zero diagonal, zero off the edge set
  double m0 = 0.0;          // pinning field on qubit 0
  std::uint64_t seed = 0;
  GraphClass graph_class = GraphClass::custom;

  [[nodiscard]] std::size_t dimension() const { return std::size_t{1} << n; }

  [[nodiscard]] bool has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges.begin(), edges.end(), Edge{i, j});
  }

  bool operator==(const SpinGraph& o) const {
    return n == o.n && edges == o.edges && J == o.J && m0 == o.m0 && seed == o.seed &&
           graph_class == o.graph_class;
  }
};

inline bool is_connected(const SpinGraph& g) {
  if (g.n <= 1) return true;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.n));
  for (auto [i, j] : g.edges) {
    adj[static_cast<std::size_t>(i)].push_back(j);
    adj[static_cast<std::size_t>(j)].push_back(i);
  }
  std::vector<bool> seen(static_cast<std::size_t>(g.n), false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int visited = 1;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = true;
        ++visited;
        q.push(w);
      }
    }
  }
  return visited == g.n;
}

/// Builds a graph from an explicit edge list. Edges are normalised to i < j,
/// sorted and de-duplicated; the result must be connected.
inline SpinGraph make_graph(int n, std::vector<Edge> edges, GraphClass cls = GraphClass::custom) {
  if (n < 1 || n > 16) throw Error(Errc::invalid_size, "qubit count must be in [1, 16]");
  for (auto& e : edges) {
    if (e.first == e.second || e.first < 0 || e.second < 0 || e.first >= n || e.second >= n)
      throw Error(Errc::invalid_parameter, "edge endpoint out of range or self-loop");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  SpinGraph g;
  g.n = n;
  g.edges = std::move(edges);
  g.J = RealMatrix::Zero(n, n);
  g.graph_class = cls;
  if (!is_connected(g)) throw Error(Errc::infeasible_instance, "graph is not connected");
  return g;
}

inline SpinGraph build_linear_graph(int n) {
  if (n < 2) throw Error(Errc::invalid_size, "linear graph needs n >= 2");
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return make_graph(n, std::move(edges), GraphClass::linear);
}

inline SpinGraph build_complete_graph(int n) {
  if (n < 2) throw Error(Errc::invalid_size, "complete graph needs n >= 2");
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return make_graph(n, std::move(edges), GraphClass::complete);
}

/// Edge count used for the "half the edges missing" class: ceil(n(n-1)/4).
constexpr int noncomplete_edge_count(int n) { return (n * (n - 1) + 3) / 4; }

/// Connected graph with ceil(n(n-1)/4) edges: a uniformly random labelled
/// spanning tree (decoded from a random Pruefer sequence) plus uniformly
/// chosen distinct extra edges.
inline SpinGraph sample_noncomplete_graph(int n, std::uint64_t seed) {
  if (n < 2) throw Error(Errc::invalid_size, "non-complete graph needs n >= 2");
  const int target = noncomplete_edge_count(n);
  if (target < n - 1)
    throw Error(Errc::infeasible_instance, "target edge count below n-1, cannot be connected");
  if (n < 3)
    throw Error(Errc::infeasible_instance, "no connected non-complete graph exists for n < 3");

  std::mt19937_64 rng(seed);
  std::vector<Edge> edges;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> prufer(static_cast<std::size_t>(n - 2));
  for (auto& p : prufer) p = pick(rng);
  std::vector<int> degree(static_cast<std::size_t>(n), 1);
  for (int p : prufer) ++degree[static_cast<std::size_t>(p)];
  for (int p : prufer) {
    int leaf = 0;
    while (degree[static_cast<std::size_t>(leaf)] != 1) ++leaf;
    edges.emplace_back(std::min(leaf, p), std::max(leaf, p));
    --degree[static_cast<std::size_t>(leaf)];
    --degree[static_cast<std::size_t>(p)];
  }
  // two vertices of degree one remain
  int u = -1;
  for (int v = 0; v < n; ++v) {
    if (degree[static_cast<std::size_t>(v)] != 1) continue;
    if (u < 0) {
      u = v;
    } else {
      edges.emplace_back(u, v);
      break;
    }
  }

  std::sort(edges.begin(), edges.end());
  std::vector<Edge> candidates;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!std::binary_search(edges.begin(), edges.end(), Edge{i, j})) candidates.emplace_back(i, j);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto extra = static_cast<std::size_t>(target) - edges.size();
  edges.insert(edges.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(extra));

  SpinGraph g = make_graph(n, std::move(edges), GraphClass::noncomplete);
  g.seed = seed;
  return g;
}

struct UniformCoupling {
  double J = 1.0;
};

struct GaussianCoupling {
  double mean = -2.0;
  double std = 0.1;  // standard deviation
  std::uint64_t seed = 0;
};

using CouplingMode = std::variant<UniformCoupling, GaussianCoupling>;

inline SpinGraph assign_couplings(SpinGraph g, const CouplingMode& mode) {
  g.J = RealMatrix::Zero(g.n, g.n);
  if (const auto* u = std::get_if<UniformCoupling>(&mode)) {
    for (auto [i, j] : g.edges) g.J(i, j) = g.J(j, i) = u->J;
    return g;
  }
  const auto& gm = std::get<GaussianCoupling>(mode);
  if (!(gm.std >= 0.0) || !std::isfinite(gm.mean))
    throw Error(Errc::invalid_parameter, "gaussian coupling needs std >= 0 and a finite mean");
  std::mt19937_64 rng(gm.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto [i, j] : g.edges) {
    const double v = gm.mean + gm.std * normal(rng);
    g.J(i, j) = g.J(j, i) = v;
  }
  return g;
}

/// Default pinning strength: a tenth of the mean |J| over edges.
inline double default_pinning(const SpinGraph& g) {
  if (g.edges.empty()) return 0.0;
  double s = 0.0;
  for (auto [i, j] : g.edges) s += std::abs(g.J(i, j));
  return 0.1 * s / static_cast<double>(g.edges.size());
}

inline int spin_of(std::size_t state, int qubit, int n) {
  return ((state >> (n - 1 - qubit)) & 1U) != 0 ? -1 : 1;
}

/// Diagonal of H_G = -m0 sz_0 - 1/2 sum_{i,j} J_ij sz_i sz_j.
inline RealVector ising_energies(const SpinGraph& g) {
  const std::size_t dim = g.dimension();
  RealVector e(static_cast<Eigen::Index>(dim));
  for (std::size_t s = 0; s < dim; ++s) {
    double v = -g.m0 * spin_of(s, 0, g.n);
    for (auto [i, j] : g.edges) v -= g.J(i, j) * spin_of(s, i, g.n) * spin_of(s, j, g.n);
    e(static_cast<Eigen::Index>(s)) = v;
  }
  return e;
}

inline Matrix ising_hamiltonian(const SpinGraph& g) {
  return ising_energies(g).cast<cplx>().asDiagonal();
}

/// sigma^x on `site` embedded in an n-qubit register.
inline Matrix site_sigma_x(int n, int site) {
  const auto dim = static_cast<Eigen::Index>(std::size_t{1} << n);
  Matrix m = Matrix::Zero(dim, dim);
  const auto mask = static_cast<Eigen::Index>(std::size_t{1} << (n - 1 - site));
  for (Eigen::Index s = 0; s < dim; ++s) m(s ^ mask, s) = 1.0;
  return m;
}

inline Matrix transverse_operator(int n) {
  if (n < 1) throw Error(Errc::invalid_size, "n must be >= 1");
  const auto dim = static_cast<Eigen::Index>(std::size_t{1} << n);
  Matrix m = Matrix::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    const auto mask = static_cast<Eigen::Index>(std::size_t{1} << (n - 1 - i));
    for (Eigen::Index s = 0; s < dim; ++s) m(s ^ mask, s) += 1.0;
  }
  return m;
}

enum class ScheduleMode { annealed, sudden };

struct AnnealSchedule {
  double mx0 = 0.0;
  double tau = 1.0;
  ScheduleMode mode = ScheduleMode::annealed;
};

inline double field_at(const AnnealSchedule& s, double t) {
  if (!(t >= 0.0)) throw Error(Errc::domain_error, "field_at needs t >= 0");
  if (s.mode == ScheduleMode::sudden) return t == 0.0 ? s.mx0 : 0.0;
  return s.mx0 * std::exp(-t / s.tau);
}

/// Right limit of the field at t (differs from field_at only for the sudden
/// protocol at t = 0, where the field is already switched off).
inline double field_after(const AnnealSchedule& s, double t) {
  if (s.mode == ScheduleMode::sudden) return 0.0;
  return field_at(s, t);
}

struct HamiltonianSet {
  Matrix hg;  // diagonal
  Matrix hx;  // sum_i sigma^x_i
  AnnealSchedule schedule;
  int n = 0;

  [[nodiscard]] Eigen::Index dimension() const { return hg.rows(); }
};

inline HamiltonianSet make_hamiltonians(const SpinGraph& g, const AnnealSchedule& s) {
  if (s.mode == ScheduleMode::annealed && !(s.tau > 0.0))
    throw Error(Errc::invalid_parameter, "annealing time tau must be > 0");
  return HamiltonianSet{ising_hamiltonian(g), transverse_operator(g.n), s, g.n};
}

inline Matrix hamiltonian_with_field(const HamiltonianSet& h, double field) {
  return h.hg - field * h.hx;
}

inline Matrix system_hamiltonian_at(const HamiltonianSet& h, double t) {
  return hamiltonian_with_field(h, field_at(h.schedule, t));
}

/// Scale used for the default transverse amplitude: max_i sum_j |J_ij|.
inline double max_abs_row_sum(const SpinGraph& g) {
  if (g.n == 0) return 0.0;
  return g.J.cwiseAbs().rowwise().sum().maxCoeff();
}

// ---------------------------------------------------------------------------
// JSON: {n, edges, J, m0, seed, class}. nlohmann/json writes doubles in
// shortest round-trip form, so parse(serialize(g)) == g bit for bit.

inline nlohmann::json graph_to_json(const SpinGraph& g) {
  nlohmann::json j;
  j["n"] = g.n;
  j["edges"] = nlohmann::json::array();
  for (auto [a, b] : g.edges) j["edges"].push_back({a, b});
  j["J"] = nlohmann::json::array();
  for (int r = 0; r < g.n; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < g.n; ++c) row.push_back(g.J(r, c));
    j["J"].push_back(std::move(row));
  }
  j["m0"] = g.m0;
  j["seed"] = g.seed;
  j["class"] = std::string(to_string(g.graph_class));
  return j;
}

inline SpinGraph graph_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    SpinGraph g = make_graph(n, std::move(edges), graph_class_from_string(j.at("class").get<std::string>()));
    const auto& jm = j.at("J");
    if (jm.size() != static_cast<std::size_t>(n))
      throw Error(Errc::dimension_mismatch, "J must be n x n");
    for (int r = 0; r < n; ++r) {
      if (jm[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(n))
        throw Error(Errc::dimension_mismatch, "J must be n x n");
      for (int c = 0; c < n; ++c) g.J(r, c) = jm[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    for (int r = 0; r < n; ++r) {
      if (g.J(r, r) != 0.0) throw Error(Errc::invalid_parameter, "J diagonal must be zero");
      for (int c = 0; c < n; ++c) {
        if (g.J(r, c) != g.J(c, r)) throw Error(Errc::invalid_parameter, "J must be symmetric");
        if (r != c && g.J(r, c) != 0.0 && !g.has_edge(r, c))
          throw Error(Errc::invalid_parameter, "J nonzero off the edge set");
      }
    }
    g.m0 = j.at("m0").get<double>();
    g.seed = j.at("seed").get<std::uint64_t>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("malformed graph json: ") + e.what());
  }
}

}  // namespace qanneal
