#include "saloha/aloha_model.hpp"

#include "saloha/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <sstream>
#include <string>

namespace saloha {

namespace {

using NodeArray = std::array<int, kMaxNodes>;

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

bool is_probability(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

// Table of p_k / r^b.
struct AttemptTable {
  std::array<std::array<double, 8>, kMaxNodes> t{};
  AttemptTable(const NetworkConfig& c) {
    for (int k = 0; k < c.n; ++k) {
      for (int b = 0; b <= c.K; ++b) t[k][b] = c.attempt_probability(k, b);
    }
  }
};

// Enumerates every one-slot move out of a network state (b, q) of the chain
// of `space.node()`, before the modeled node's own arrival is applied.
// Calls emit(next_b_self, self_departed, peer_key, probability).
template <typename Emit>
void for_each_move(const PhaseSpace& space, const NetworkConfig& config, const CouplingState& z,
                   const AttemptTable& table, const NodeArray& b, const NodeArray& q, Emit&& emit) {
  const int n = config.n;
  const int K = config.K;
  const int self = space.node();

  std::array<double, kMaxNodes> t{};
  for (int k = 0; k < n; ++k) t[k] = q[k] ? table.t[k][b[k]] : 0.0;

  NodeArray nb{};
  NodeArray qa{};
  NodeArray qn{};
  std::array<int, kMaxNodes> empty_peers{};

  const unsigned masks = 1u << n;
  for (unsigned mask = 0; mask < masks; ++mask) {
    double pr = 1.0;
    for (int k = 0; k < n && pr > 0.0; ++k) pr *= (mask >> k & 1u) ? t[k] : 1.0 - t[k];
    if (pr <= 0.0) continue;

    const int attempts = std::popcount(mask);
    for (int k = 0; k < n; ++k) {
      if (!(mask >> k & 1u)) {
        nb[k] = b[k];
      } else {
        nb[k] = attempts == 1 ? 0 : std::min(b[k] + 1, K);
      }
    }

    std::array<std::pair<int, double>, 2> outcomes{};
    int n_outcomes = 0;
    if (attempts != 1) {
      outcomes[n_outcomes++] = {-1, 1.0};
    } else {
      const int winner = std::countr_zero(mask);
      if (winner == self) {
        outcomes[n_outcomes++] = {self, 1.0};
      } else {
        outcomes[n_outcomes++] = {winner, z.z[winner]};
        outcomes[n_outcomes++] = {-1, 1.0 - z.z[winner]};
      }
    }

    for (int o = 0; o < n_outcomes; ++o) {
      const auto [dec, pd] = outcomes[o];
      if (pd <= 0.0) continue;
      int n_empty = 0;
      for (int k = 0; k < n; ++k) {
        if (k == self) continue;
        qa[k] = q[k] - (k == dec ? 1 : 0);
        if (qa[k] == 0 && !space.is_idle(k)) empty_peers[n_empty++] = k;
      }
      const unsigned subsets = 1u << n_empty;
      for (unsigned sub = 0; sub < subsets; ++sub) {
        double parr = 1.0;
        qn = qa;
        for (int e = 0; e < n_empty; ++e) {
          const int peer = empty_peers[e];
          if (sub >> e & 1u) {
            qn[peer] = 1;
            parr *= config.lambda[peer];
          } else {
            parr *= 1.0 - config.lambda[peer];
          }
        }
        if (parr <= 0.0) continue;
        const std::size_t key = space.peer_key(std::span<const int>(nb.data(), n),
                                               std::span<const int>(qn.data(), n));
        emit(nb[self], dec == self, key, pr * pd * parr);
      }
    }
  }
}

[[noreturn]] void left_space(const PhaseSpace& space) {
  std::ostringstream os;
  os << "transition of node " << space.node()
     << " leaves its phase space (pinned peers need z = 0, idle peers zero arrivals or p = 0)";
  throw ConfigError(os.str());
}

}  // namespace

void NetworkConfig::validate() const {
  if (n < 2 || n > kMaxNodes) config_error("network.n", "must be in [2, " + std::to_string(kMaxNodes) + "]");
  if (static_cast<int>(p.size()) != n) config_error("network.p", "expected " + std::to_string(n) + " entries");
  for (int k = 0; k < n; ++k) {
    if (!is_probability(p[k])) config_error("network.p[" + std::to_string(k) + "]", "must lie in [0, 1]");
  }
  if (!std::isfinite(r) || r < 1.0) config_error("network.r", "backoff factor must be >= 1");
  if (K < 0 || K > 7) config_error("network.K", "cutoff stage must be in [0, 7]");
  if (static_cast<int>(lambda.size()) != n) {
    config_error("arrivals", "expected " + std::to_string(n) + " arrival rates");
  }
  for (int k = 0; k < n; ++k) {
    if (!is_probability(lambda[k])) {
      config_error("arrivals[" + std::to_string(k) + "]", "rate must lie in [0, 1]");
    }
  }
}

double NetworkConfig::attempt_probability(int node, int stage) const {
  return p[static_cast<std::size_t>(node)] / std::pow(r, stage);
}

CouplingState CouplingState::initial(int n, std::optional<int> saturated_node) {
  CouplingState c;
  c.z.assign(static_cast<std::size_t>(n), 1.0);
  c.saturated.assign(static_cast<std::size_t>(n), false);
  if (saturated_node) {
    c.z[*saturated_node] = 0.0;
    c.saturated[*saturated_node] = true;
  }
  return c;
}

void CouplingState::validate(int n) const {
  if (static_cast<int>(z.size()) != n || static_cast<int>(saturated.size()) != n) {
    throw ConfigError("coupling: z and saturated must have one entry per node");
  }
  for (int k = 0; k < n; ++k) {
    if (!is_probability(z[k])) throw ConfigError("coupling: z[" + std::to_string(k) + "] outside [0, 1]");
    if (saturated[k] && z[k] != 0.0) {
      throw ConfigError("coupling: saturated node " + std::to_string(k) + " must have z = 0");
    }
  }
}

int AttemptVector::count() const { return static_cast<int>(std::count(a.begin(), a.end(), 1)); }
int DecrementVector::count() const { return static_cast<int>(std::count(d.begin(), d.end(), 1)); }

double transmit_prob(double p_k, double r, int b_k, bool nonempty) {
  return nonempty ? p_k / std::pow(r, b_k) : 0.0;
}

double attempt_prob(const NetworkState& s, const NetworkConfig& config, const AttemptVector& a) {
  double pr = 1.0;
  for (int k = 0; k < config.n; ++k) {
    const double t = transmit_prob(config.p[k], config.r, s.b[k], s.q_hat[k] == 1);
    pr *= a.a[k] ? t : 1.0 - t;
  }
  return pr;
}

int backoff_next(int b_k, const AttemptVector& a, int k, int K) {
  if (!a.a[k]) return b_k;
  if (a.count() == 1) return 0;
  return std::min(b_k + 1, K);
}

double decrement_prob(int i, const AttemptVector& a, const DecrementVector& d, const CouplingState& z) {
  const int attempts = a.count();
  const bool no_decrement = d.count() == 0;
  if (attempts != 1) return no_decrement ? 1.0 : 0.0;
  const int winner = static_cast<int>(std::find(a.a.begin(), a.a.end(), 1) - a.a.begin());
  if (winner == i) return (d.count() == 1 && d.d[i] == 1) ? 1.0 : 0.0;
  if (d.count() == 1 && d.d[winner] == 1) return z.z[winner];
  return no_decrement ? 1.0 - z.z[winner] : 0.0;
}

double arrival_prob(double lambda_i, int k) {
  if (k == 0) return 1.0 - lambda_i;
  if (k == 1) return lambda_i;
  return 0.0;
}

double indicator_transition_prob(double lambda_j, int q_hat, int q_hat_next, int k) {
  const double k0 = k == 0 ? 1.0 : 0.0;
  const double k1 = k == 1 ? 1.0 : 0.0;
  if (q_hat_next == 0) return (1.0 - lambda_j) * k0;  // (0,0) or (1,0)
  if (q_hat == 0) return lambda_j * k1;              // (0,1)
  return k0 + lambda_j * k1;                          // (1,1)
}

PhaseSpace::PhaseSpace(int n, int K, int node, std::vector<int> pinned, std::vector<int> idle)
    : n_(n), K_(K), node_(node), pinned_(std::move(pinned)), idle_(std::move(idle)) {
  if (n < 2 || n > kMaxNodes) throw ConfigError("phase space: n out of range");
  if (node < 0 || node >= n) throw ConfigError("phase space: node index out of range");
  std::sort(pinned_.begin(), pinned_.end());
  pinned_.erase(std::unique(pinned_.begin(), pinned_.end()), pinned_.end());
  for (int pn : pinned_) {
    if (pn == node || pn < 0 || pn >= n) throw ConfigError("phase space: invalid pinned node");
  }
  std::sort(idle_.begin(), idle_.end());
  idle_.erase(std::unique(idle_.begin(), idle_.end()), idle_.end());
  for (int pn : idle_) {
    if (pn == node || pn < 0 || pn >= n || is_pinned(pn)) throw ConfigError("phase space: invalid idle node");
  }

  const int peers = n - 1;
  for (int s = 0; s < peers; ++s) peer_codes_ *= static_cast<std::size_t>(K + 2);
  level0_lookup_.assign(peer_codes_, -1);
  upper_lookup_.assign(peer_codes_ * static_cast<std::size_t>(K + 1), -1);

  std::size_t b_tuples = 1;
  for (int s = 0; s < peers; ++s) b_tuples *= static_cast<std::size_t>(K + 1);
  const std::size_t q_tuples = std::size_t{1} << peers;

  for (int b_self = 0; b_self <= K; ++b_self) {
    for (std::size_t bt = 0; bt < b_tuples; ++bt) {
      for (std::size_t qt = 0; qt < q_tuples; ++qt) {
        Phase ph;
        ph.b_self = b_self;
        ph.b_others.resize(peers);
        ph.q_hat_others.resize(peers);
        std::size_t brest = bt;
        for (int s = peers - 1; s >= 0; --s) {
          ph.b_others[s] = static_cast<int>(brest % static_cast<std::size_t>(K + 1));
          brest /= static_cast<std::size_t>(K + 1);
          ph.q_hat_others[s] = static_cast<int>(qt >> (peers - 1 - s) & 1u);
        }
        bool valid = true;
        for (int s = 0; s < peers && valid; ++s) {
          if (ph.q_hat_others[s] == 0 && (ph.b_others[s] > 0 || is_pinned(peer_node(s)))) valid = false;
          if (ph.q_hat_others[s] == 1 && is_idle(peer_node(s))) valid = false;
        }
        if (!valid) continue;

        const NetworkState st = state_of(ph, false);
        const std::size_t key = peer_key(st.b, st.q_hat);
        upper_lookup_[static_cast<std::size_t>(b_self) * peer_codes_ + key] = static_cast<int>(upper_.size());
        upper_.push_back(ph);
        if (b_self == 0) {
          level0_lookup_[key] = static_cast<int>(level0_.size());
          level0_.push_back(ph);
        }
      }
    }
  }
}

bool PhaseSpace::is_pinned(int node) const {
  return std::binary_search(pinned_.begin(), pinned_.end(), node);
}

bool PhaseSpace::is_idle(int node) const {
  return std::binary_search(idle_.begin(), idle_.end(), node);
}

int PhaseSpace::peer_slot(int peer) const { return peer < node_ ? peer : peer - 1; }
int PhaseSpace::peer_node(int slot) const { return slot < node_ ? slot : slot + 1; }

std::size_t PhaseSpace::peer_key(std::span<const int> b, std::span<const int> q_hat) const {
  std::size_t key = 0;
  std::size_t scale = 1;
  for (int k = 0; k < n_; ++k) {
    if (k == node_) continue;
    const int code = q_hat[k] ? 1 + b[k] : 0;
    key += static_cast<std::size_t>(code) * scale;
    scale *= static_cast<std::size_t>(K_ + 2);
  }
  return key;
}

std::optional<std::size_t> PhaseSpace::level0_index(const Phase& ph) const {
  if (ph.b_self != 0) return std::nullopt;
  const auto h = upper_index(ph);
  if (!h) return std::nullopt;
  const NetworkState st = state_of(ph, true);
  const int idx = level0_lookup_[peer_key(st.b, st.q_hat)];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

std::optional<std::size_t> PhaseSpace::upper_index(const Phase& ph) const {
  const int peers = n_ - 1;
  if (static_cast<int>(ph.b_others.size()) != peers || static_cast<int>(ph.q_hat_others.size()) != peers) {
    return std::nullopt;
  }
  if (ph.b_self < 0 || ph.b_self > K_) return std::nullopt;
  for (int s = 0; s < peers; ++s) {
    if (ph.b_others[s] < 0 || ph.b_others[s] > K_) return std::nullopt;
    if (ph.q_hat_others[s] != 0 && ph.q_hat_others[s] != 1) return std::nullopt;
    if (ph.q_hat_others[s] == 0 && ph.b_others[s] != 0) return std::nullopt;
  }
  const NetworkState st = state_of(ph, false);
  const int idx = upper_lookup(ph.b_self, peer_key(st.b, st.q_hat));
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

NetworkState PhaseSpace::state_of(const Phase& ph, bool level0) const {
  NetworkState st;
  st.b.assign(static_cast<std::size_t>(n_), 0);
  st.q_hat.assign(static_cast<std::size_t>(n_), 0);
  st.b[node_] = level0 ? 0 : ph.b_self;
  st.q_hat[node_] = level0 ? 0 : 1;
  for (int s = 0; s < n_ - 1; ++s) {
    st.b[peer_node(s)] = ph.b_others[s];
    st.q_hat[peer_node(s)] = ph.q_hat_others[s];
  }
  return st;
}

double transition_prob(int i, const NetworkConfig& config, const CouplingState& z,
                       const ChainState& from, const ChainState& to) {
  const int n = config.n;
  if (from.level < 0 || to.level < 0 || std::abs(from.level - to.level) > 1) return 0.0;
  if ((from.level == 0 && from.phase.b_self != 0) || (to.level == 0 && to.phase.b_self != 0)) return 0.0;

  const PhaseSpace space(n, config.K, i);
  if (!space.upper_index(from.phase) || !space.upper_index(to.phase)) return 0.0;
  const NetworkState s = space.state_of(from.phase, from.level == 0);
  const NetworkState s2 = space.state_of(to.phase, to.level == 0);

  double total = 0.0;
  AttemptVector a{std::vector<int>(static_cast<std::size_t>(n), 0)};
  DecrementVector d{std::vector<int>(static_cast<std::size_t>(n), 0)};
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    for (int k = 0; k < n; ++k) a.a[k] = static_cast<int>(mask >> k & 1u);
    const double ptr = attempt_prob(s, config, a);
    if (ptr == 0.0) continue;

    bool backoff_matches = true;
    for (int k = 0; k < n; ++k) {
      if (backoff_next(s.b[k], a, k, config.K) != s2.b[k]) backoff_matches = false;
    }
    if (!backoff_matches) continue;

    // Decrement vectors: d = 0 and the n unit vectors.
    double pq = 0.0;
    for (int unit = -1; unit < n; ++unit) {
      std::fill(d.d.begin(), d.d.end(), 0);
      if (unit >= 0) d.d[unit] = 1;
      const double pdec = decrement_prob(i, a, d, z);
      if (pdec == 0.0) continue;
      double term = pdec * arrival_prob(config.lambda[i], to.level - from.level + d.d[i]);
      for (int j = 0; j < n && term != 0.0; ++j) {
        if (j == i) continue;
        term *= indicator_transition_prob(config.lambda[j], s.q_hat[j], s2.q_hat[j],
                                          s2.q_hat[j] - s.q_hat[j] + d.d[j]);
      }
      pq += term;
    }
    total += ptr * pq;
  }
  return total;
}

ArrivalChain ArrivalChain::bernoulli(double lambda) {
  ArrivalChain a;
  a.d0 = Matrix::Constant(1, 1, 1.0 - lambda);
  a.d1 = Matrix::Constant(1, 1, lambda);
  return a;
}

QbdChain assemble_extended(const PhaseSpace& space, const NetworkConfig& config,
                           const CouplingState& z, const ArrivalChain& arrivals) {
  if (space.n() != config.n || space.K() != config.K) {
    throw ConfigError("assemble: phase space does not match the network configuration");
  }
  z.validate(config.n);
  for (int pn : space.pinned()) {
    if (z.z[pn] != 0.0) left_space(space);
  }
  for (int pn : space.idle()) {
    // a peer that never transmits looks empty to everyone else
    if (config.lambda[pn] != 0.0 && config.p[pn] != 0.0) left_space(space);
  }
  const Eigen::Index c = arrivals.states();
  if (c < 1 || arrivals.d0.cols() != c || arrivals.d1.rows() != c || arrivals.d1.cols() != c) {
    throw ConfigError("assemble: arrival matrices must be square and of equal order");
  }

  const auto m0 = static_cast<Eigen::Index>(space.m0());
  const auto m = static_cast<Eigen::Index>(space.m());
  QbdChain out;
  out.b1 = Matrix::Zero(m0 * c, m0 * c);
  out.b0 = Matrix::Zero(m0 * c, m * c);
  out.b2 = Matrix::Zero(m * c, m0 * c);
  out.a0 = Matrix::Zero(m * c, m * c);
  out.a1 = Matrix::Zero(m * c, m * c);
  out.a2 = Matrix::Zero(m * c, m * c);

  const AttemptTable table(config);
  const int self = space.node();
  NodeArray b{};
  NodeArray q{};

  auto load = [&](const Phase& ph, bool level0) {
    const NetworkState st = space.state_of(ph, level0);
    for (int k = 0; k < config.n; ++k) {
      b[k] = st.b[k];
      q[k] = st.q_hat[k];
    }
  };

  // Spreads `pr` over arrival-state pairs into block `dst` at base (row, col).
  auto spread = [&](Matrix& dst, Eigen::Index row, Eigen::Index col, double pr, const Matrix& dk) {
    for (Eigen::Index u = 0; u < c; ++u) {
      for (Eigen::Index v = 0; v < c; ++v) {
        const double w = dk(u, v);
        if (w != 0.0) dst(row * c + u, col * c + v) += pr * w;
      }
    }
  };

  for (Eigen::Index h = 0; h < m0; ++h) {
    load(space.level0_phase(static_cast<std::size_t>(h)), true);
    for_each_move(space, config, z, table, b, q, [&](int nb_self, bool, std::size_t key, double pr) {
      const int stay = space.level0_lookup(key);
      const int up = space.upper_lookup(nb_self, key);
      if (stay < 0 || up < 0) left_space(space);
      spread(out.b1, h, stay, pr, arrivals.d0);
      spread(out.b0, h, up, pr, arrivals.d1);
    });
  }

  for (Eigen::Index h = 0; h < m; ++h) {
    load(space.upper_phase(static_cast<std::size_t>(h)), false);
    for_each_move(space, config, z, table, b, q, [&](int nb_self, bool departed, std::size_t key, double pr) {
      const int same = space.upper_lookup(nb_self, key);
      if (same < 0) left_space(space);
      if (!departed) {
        spread(out.a1, h, same, pr, arrivals.d0);
        spread(out.a0, h, same, pr, arrivals.d1);
      } else {
        const int empty = space.level0_lookup(key);
        if (empty < 0) left_space(space);
        spread(out.a2, h, same, pr, arrivals.d0);
        spread(out.b2, h, empty, pr, arrivals.d0);
        spread(out.a1, h, same, pr, arrivals.d1);
      }
    });
  }
  (void)self;
  return out;
}

NodeChain assemble_chain(int i, const NetworkConfig& config, const CouplingState& z) {
  return assemble_chain(i, config, z, PhaseSpace(config.n, config.K, i));
}

NodeChain assemble_chain(int i, const NetworkConfig& config, const CouplingState& z,
                         const PhaseSpace& space) {
  if (space.node() != i) throw ConfigError("assemble: phase space belongs to another node");
  return {space, assemble_extended(space, config, z, ArrivalChain::bernoulli(config.lambda[i]))};
}

NodeChain saturate(const NodeChain& full, int saturated_node) {
  const PhaseSpace& fs = full.space;
  if (saturated_node == fs.node()) throw ConfigError("saturate: a chain cannot saturate its own node");
  std::vector<int> pins = fs.pinned();
  pins.push_back(saturated_node);
  PhaseSpace reduced(fs.n(), fs.K(), fs.node(), pins, fs.idle());

  std::vector<Eigen::Index> keep0;
  std::vector<Eigen::Index> keep;
  for (const Phase& ph : reduced.level0_phases()) keep0.push_back(static_cast<Eigen::Index>(*fs.level0_index(ph)));
  for (const Phase& ph : reduced.upper_phases()) keep.push_back(static_cast<Eigen::Index>(*fs.upper_index(ph)));

  const QbdChain& c = full.chain;
  if (c.m0() != static_cast<Eigen::Index>(fs.m0()) || c.m() != static_cast<Eigen::Index>(fs.m())) {
    throw ConfigError("saturate: only base (c = 1) chains can be restricted");
  }
  QbdChain out;
  out.b1 = c.b1(keep0, keep0);
  out.b0 = c.b0(keep0, keep);
  out.b2 = c.b2(keep, keep0);
  out.a0 = c.a0(keep, keep);
  out.a1 = c.a1(keep, keep);
  out.a2 = c.a2(keep, keep);
  try {
    out.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("saturate: restricted phase set is not closed (") + e.what() + ")");
  }
  return {std::move(reduced), std::move(out)};
}

double success_probability(const NetworkConfig& config, const PhaseSpace& space, const Phase& ph) {
  const int i = space.node();
  double pr = config.attempt_probability(i, ph.b_self);
  for (int s = 0; s < config.n - 1; ++s) {
    if (ph.q_hat_others[s]) pr *= 1.0 - config.attempt_probability(space.peer_node(s), ph.b_others[s]);
  }
  return pr;
}

std::vector<double> success_vector(const NetworkConfig& config, const PhaseSpace& space) {
  std::vector<double> out;
  out.reserve(space.m());
  for (const Phase& ph : space.upper_phases()) out.push_back(success_probability(config, space, ph));
  return out;
}

}  // namespace saloha
