#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "mergeplan/checks.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

struct PomcpowParams {
  int n_queries = 2000;
  int max_depth = 72;
  double ucb_c = 50.0;      // exploration constant, same units as returns
  double k_obs = 4.0;       // observation widening scale
  double alpha_obs = 0.1;   // observation widening exponent
};

// Monte-Carlo tree search over a generative POMDP with progressive widening
// on observations. Actions form a small finite set explored by UCB.
//
// The Model type supplies (duck-typed):
//   types   State, Action, Observation
//   methods actions() -> const std::vector<Action>&
//           step(s, a, rng) -> StepSample{next, obs, reward}
//           reward_to(s, a, next) -> double   (reward for a resampled successor)
//           obs_weight(o, s, a, next) -> double
//           obs_equal(o1, o2) -> bool
//           rollout_value(s, depth, rng) -> double  (discounted, gamma^0 first)
//           discount() -> double
template <class Model>
class Pomcpow {
 public:
  using State = typename Model::State;
  using ActionT = typename Model::Action;
  using Obs = typename Model::Observation;

  Pomcpow(const Model& model, const PomcpowParams& params) : model_(&model), params_(params) {
    if (params.n_queries <= 0 || params.max_depth <= 0) {
      throw InvalidInput("Pomcpow: n_queries and max_depth must be positive");
    }
    if (model.actions().empty()) throw InvalidInput("Pomcpow: empty action set");
  }

  // Builds a fresh tree from n_queries root samples and returns the root
  // action with the highest estimated value.
  template <class RootSampler>
  ActionT plan(RootSampler&& sample_root, RngStream& rng) {
    nodes_.clear();
    make_node();
    for (int i = 0; i < params_.n_queries; ++i) {
      State s = sample_root(rng);
      simulate(s, 0, params_.max_depth, rng);
    }

    const auto& root = nodes_[0];
    int best = -1;
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t ai = 0; ai < root.edges.size(); ++ai) {
      if (root.edges[ai].n > 0 && root.edges[ai].q > best_q) {
        best_q = root.edges[ai].q;
        best = static_cast<int>(ai);
      }
    }
    MERGEPLAN_CHECK(best >= 0, "no root action was ever visited");
    return model_->actions()[static_cast<std::size_t>(best)];
  }

  // Root action statistics from the last plan() call, indexed like actions().
  std::vector<double> root_q_values() const {
    std::vector<double> q;
    for (const ActionEdge& e : nodes_[0].edges) q.push_back(e.q);
    return q;
  }
  std::vector<int> root_visit_counts() const {
    std::vector<int> n;
    for (const ActionEdge& e : nodes_[0].edges) n.push_back(e.n);
    return n;
  }

 private:
  struct ObsEdge {
    Obs obs{};
    int count = 0;  // times this observation branch was chosen
    int node = -1;
  };

  struct ActionEdge {
    int n = 0;
    double q = 0.0;
    std::vector<ObsEdge> children;
  };

  // A belief node. states/weights hold the importance-weighted successor
  // states accumulated for this history.
  struct Node {
    int n = 0;
    std::vector<ActionEdge> edges;
    std::vector<State> states;
    std::vector<double> weights;
    double weight_sum = 0.0;
  };

  int make_node() {
    nodes_.emplace_back();
    nodes_.back().edges.resize(model_->actions().size());
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Unvisited actions first (in listed order), then UCB over estimates.
  int select_action(const Node& node) const {
    for (std::size_t i = 0; i < node.edges.size(); ++i) {
      if (node.edges[i].n == 0) return static_cast<int>(i);
    }
    const double log_n = std::log(static_cast<double>(node.n));
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < node.edges.size(); ++i) {
      const ActionEdge& e = node.edges[i];
      const double score = e.q + params_.ucb_c * std::sqrt(log_n / e.n);
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  double simulate(const State& s, int node_idx, int depth, RngStream& rng) {
    if (depth == 0) return 0.0;

    const int ai = select_action(nodes_[node_idx]);
    const ActionT& action = model_->actions()[static_cast<std::size_t>(ai)];
    auto sample = model_->step(s, action, rng);

    // Progressive widening: grow the observation branch set only while the
    // child count stays within k_obs * N(ha)^alpha_obs.
    ActionEdge& edge_pre = nodes_[node_idx].edges[static_cast<std::size_t>(ai)];
    const double bound =
        params_.k_obs * std::pow(static_cast<double>(edge_pre.n), params_.alpha_obs);
    int ci = -1;
    bool fresh = false;
    if (static_cast<double>(edge_pre.children.size()) <= bound) {
      for (std::size_t i = 0; i < edge_pre.children.size(); ++i) {
        if (model_->obs_equal(edge_pre.children[i].obs, sample.obs)) {
          ci = static_cast<int>(i);
          break;
        }
      }
      if (ci < 0) {
        const int child_node = make_node();  // may move nodes_; re-fetch edge
        ActionEdge& edge = nodes_[node_idx].edges[static_cast<std::size_t>(ai)];
        edge.children.push_back(ObsEdge{sample.obs, 0, child_node});
        ci = static_cast<int>(edge.children.size()) - 1;
        fresh = true;
      }
      nodes_[node_idx].edges[static_cast<std::size_t>(ai)].children[static_cast<std::size_t>(ci)]
          .count++;
    } else {
      // Reuse an existing branch, chosen in proportion to past traffic.
      ActionEdge& edge = edge_pre;
      int total = 0;
      for (const ObsEdge& o : edge.children) total += o.count;
      std::int64_t pick = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(total));
      ci = 0;
      for (std::size_t i = 0; i < edge.children.size(); ++i) {
        pick -= edge.children[i].count;
        if (pick < 0) {
          ci = static_cast<int>(i);
          break;
        }
      }
      edge.children[static_cast<std::size_t>(ci)].count++;
      sample.obs = edge.children[static_cast<std::size_t>(ci)].obs;
    }

    double total_return;
    {
      ActionEdge& edge = nodes_[node_idx].edges[static_cast<std::size_t>(ai)];
      MERGEPLAN_CHECK(static_cast<double>(edge.children.size()) <=
                          params_.k_obs *
                                  std::pow(static_cast<double>(std::max(edge.n, 1)),
                                           params_.alpha_obs) +
                              1.0,
                      "observation widening bound exceeded");
      const int child_idx = edge.children[static_cast<std::size_t>(ci)].node;
      Node& child = nodes_[child_idx];
      child.states.push_back(sample.next);
      const double w = model_->obs_weight(sample.obs, s, action, sample.next);
      child.weights.push_back(w);
      child.weight_sum += w;

      if (fresh) {
        total_return =
            sample.reward + model_->discount() * model_->rollout_value(sample.next, depth - 1, rng);
      } else {
        // Re-draw the successor from this branch's weighted belief so the
        // value estimate marginalizes over states consistent with it.
        const State& s2 = pick_weighted(child, rng);
        const double r2 = model_->reward_to(s, action, s2);
        total_return = r2 + model_->discount() * simulate(s2, child_idx, depth - 1, rng);
      }
    }

    Node& node = nodes_[node_idx];
    ActionEdge& edge = node.edges[static_cast<std::size_t>(ai)];
    node.n++;
    edge.n++;
    edge.q += (total_return - edge.q) / edge.n;
    return total_return;
  }

  const State& pick_weighted(const Node& node, RngStream& rng) const {
    if (node.weight_sum <= 0.0) {
      // All accumulated weights vanished; any stored state is as good.
      const std::uint64_t i = rng() % node.states.size();
      return node.states[static_cast<std::size_t>(i)];
    }
    const double u = uniform_real(rng, 0.0, node.weight_sum);
    double cum = 0.0;
    for (std::size_t i = 0; i < node.states.size(); ++i) {
      cum += node.weights[i];
      if (cum >= u) return node.states[i];
    }
    return node.states.back();
  }

  const Model* model_;
  PomcpowParams params_;
  std::deque<Node> nodes_;
};

}  // namespace mergeplan
