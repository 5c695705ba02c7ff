#pragma once

// Per-node QBD chain of a buffered slotted-Aloha network with K-exponential
// backoff. The chain of node i tracks its own queue length (the level), the
// backoff stages of all nodes and an emptiness indicator for every peer.

#include "saloha/qbd.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace saloha {

inline constexpr int kMaxNodes = 6;

struct NetworkConfig {
  int n = 2;
  std::vector<double> p;       // initial transmission probability per node
  double r = 1.0;              // backoff factor
  int K = 0;                   // cutoff stage
  std::vector<double> lambda;  // Bernoulli arrival rate per node

  /// Throws ConfigError naming the offending field.
  void validate() const;

  double attempt_probability(int node, int stage) const;
};

/// Peer coupling: z[j] = P(q_j = 1 | q_j >= 1). A saturated node never
/// empties, so its z is 0.
struct CouplingState {
  std::vector<double> z;
  std::vector<bool> saturated;

  static CouplingState initial(int n, std::optional<int> saturated_node = std::nullopt);
  void validate(int n) const;
};

/// a[k] = 1 when node k transmits in the slot.
struct AttemptVector {
  std::vector<int> a;
  int count() const;
};

/// At most one component is 1: the single queue that loses a packet.
struct DecrementVector {
  std::vector<int> d;
  int count() const;
};

/// Full per-slot view of the network as seen by one chain.
struct NetworkState {
  std::vector<int> b;      // backoff stage per node
  std::vector<int> q_hat;  // 1 when the queue is nonempty
};

// Single-slot transition ingredients.

/// (p_k / r^b_k) when the queue is nonempty, else 0.
double transmit_prob(double p_k, double r, int b_k, bool nonempty);
/// Product over nodes of the attempt / no-attempt probabilities.
double attempt_prob(const NetworkState& s, const NetworkConfig& config, const AttemptVector& a);
/// Next backoff stage of node k.
int backoff_next(int b_k, const AttemptVector& a, int k, int K);
double decrement_prob(int i, const AttemptVector& a, const DecrementVector& d, const CouplingState& z);
double arrival_prob(double lambda_i, int k);
/// Probability that a peer's emptiness indicator moves q_hat -> q_hat_next
/// when it needs k new packets to do so.
double indicator_transition_prob(double lambda_j, int q_hat, int q_hat_next, int k);

struct Phase {
  int b_self = 0;
  std::vector<int> b_others;      // peers in increasing node order
  std::vector<int> q_hat_others;  // peers in increasing node order

  friend bool operator==(const Phase&, const Phase&) = default;
};

/// Lexicographic phase enumeration for the chain of one node. Sort key is
/// (b_self, b_others, q_hat_others); level-0 phases have b_self = 0. Pinned
/// nodes are peers whose indicator is fixed to 1 (saturated peers); idle
/// nodes are peers fixed empty (no arrivals, so they never leave 0).
class PhaseSpace {
 public:
  PhaseSpace(int n, int K, int node, std::vector<int> pinned = {}, std::vector<int> idle = {});

  int n() const { return n_; }
  int K() const { return K_; }
  int node() const { return node_; }
  const std::vector<int>& pinned() const { return pinned_; }
  bool is_pinned(int node) const;
  const std::vector<int>& idle() const { return idle_; }
  bool is_idle(int node) const;

  std::size_t m0() const { return level0_.size(); }
  std::size_t m() const { return upper_.size(); }

  const Phase& level0_phase(std::size_t h) const { return level0_[h]; }
  const Phase& upper_phase(std::size_t h) const { return upper_[h]; }
  const std::vector<Phase>& level0_phases() const { return level0_; }
  const std::vector<Phase>& upper_phases() const { return upper_; }

  std::optional<std::size_t> level0_index(const Phase& ph) const;
  std::optional<std::size_t> upper_index(const Phase& ph) const;

  /// Network view of a phase; node's own q_hat is 0 at level 0, else 1.
  NetworkState state_of(const Phase& ph, bool level0) const;
  /// Position of `peer` inside b_others / q_hat_others.
  int peer_slot(int peer) const;
  int peer_node(int slot) const;

  // Mixed-radix codes of the peer part: per peer 0 = empty, 1 + b = nonempty.
  std::size_t peer_key(std::span<const int> b, std::span<const int> q_hat) const;
  int level0_lookup(std::size_t peer_key) const { return level0_lookup_[peer_key]; }
  int upper_lookup(int b_self, std::size_t peer_key) const {
    return upper_lookup_[static_cast<std::size_t>(b_self) * peer_codes_ + peer_key];
  }

 private:
  int n_;
  int K_;
  int node_;
  std::vector<int> pinned_;
  std::vector<int> idle_;
  std::size_t peer_codes_ = 1;
  std::vector<Phase> level0_;
  std::vector<Phase> upper_;
  std::vector<int> level0_lookup_;
  std::vector<int> upper_lookup_;
};

/// Transition probability between two states of the chain of node i, summed
/// over all attempt vectors and decrement vectors. Levels must be concrete
/// (>= 0); transitions spanning more than one level have probability 0.
struct ChainState {
  int level = 0;
  Phase phase;
};
double transition_prob(int i, const NetworkConfig& config, const CouplingState& z,
                       const ChainState& from, const ChainState& to);

struct NodeChain {
  PhaseSpace space;
  QbdChain chain;
};

/// Arrival chain driving the modeled node; Bernoulli is the c = 1 case.
struct ArrivalChain {
  Matrix d0;
  Matrix d1;
  static ArrivalChain bernoulli(double lambda);
  Eigen::Index states() const { return d0.rows(); }
};

/// Chain of `node` over `space`, with the modeled node's own arrivals driven by
/// `arrivals`. Phase order is the base order refined by the arrival state
/// (arrival state varies fastest). Peers are Bernoulli at config.lambda.
QbdChain assemble_extended(const PhaseSpace& space, const NetworkConfig& config,
                           const CouplingState& z, const ArrivalChain& arrivals);

/// Full (unpinned) chain of node i with Bernoulli arrivals.
NodeChain assemble_chain(int i, const NetworkConfig& config, const CouplingState& z);
/// Chain of i over a given (possibly pinned) space. Pinned peers need z = 0.
NodeChain assemble_chain(int i, const NetworkConfig& config, const CouplingState& z,
                         const PhaseSpace& space);

/// Restriction of an assembled chain to the phases where `saturated_node`
/// is nonempty. Throws ConfigError if that set is not closed (z of the
/// saturated node must be 0).
NodeChain saturate(const NodeChain& full, int saturated_node);

/// Probability that node i alone transmits in a given upper-level phase.
double success_probability(const NetworkConfig& config, const PhaseSpace& space, const Phase& ph);
std::vector<double> success_vector(const NetworkConfig& config, const PhaseSpace& space);

}  // namespace saloha
