#include "fedsim/algorithms.hpp"

#include <algorithm>
#include <cassert>

#include "fedsim/parallel.hpp"

namespace fedsim {

ServerState ServerState::init(int num_clients, int dim, ParamVector x0) {
  ServerState s;
  if (x0.empty()) x0.assign(dim, 0.0);
  if (static_cast<int>(x0.size()) != dim) throw DimensionMismatch("init: x0 vs dim");
  s.params = std::move(x0);
  s.cached_avg.assign(dim, 0.0);
  s.last_participation.assign(num_clients, 0);
  return s;
}

SelectionOutcome select_latest(const std::vector<int>& available,
                               const std::vector<long>& last_participation, int K, bool strict) {
  if (strict && static_cast<int>(available.size()) < K)
    throw InsufficientAvailable("select_latest: " + std::to_string(available.size()) +
                                " available, need " + std::to_string(K));
  SelectionOutcome out;
  out.available_count = static_cast<int>(available.size());
  std::vector<std::pair<long, int>> order;
  order.reserve(available.size());
  for (int id : available) order.emplace_back(last_participation[id], id);
  std::sort(order.begin(), order.end());  // (participation, id): ties by id
  int k = std::min<int>(K, static_cast<int>(order.size()));
  for (int j = 0; j < k; ++j) out.selected.push_back(order[j].second);
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

SelectionOutcome select_uniform(const std::vector<int>& available, int K, bool strict,
                                RandomStream& stream) {
  if (strict && static_cast<int>(available.size()) < K)
    throw InsufficientAvailable("select_uniform: " + std::to_string(available.size()) +
                                " available, need " + std::to_string(K));
  SelectionOutcome out;
  out.available_count = static_cast<int>(available.size());
  std::vector<int> pool = available;
  int k = std::min<int>(K, static_cast<int>(pool.size()));
  for (int j = 0; j < k; ++j) {  // partial Fisher-Yates
    int swap_with = j + stream.uniform_index(static_cast<int>(pool.size()) - j);
    std::swap(pool[j], pool[swap_with]);
  }
  out.selected.assign(pool.begin(), pool.begin() + k);
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

namespace {

// C local SGD iterations from the round-start model. The update u accumulates
// the same -gamma*step terms applied to the local model, so u is exactly the
// local displacement. prox_mu > 0 adds the proximal pull toward the global
// model, matching fedprox_local_step bit for bit.
void run_local_iterations(const TrainingProblem& problem, const ParamVector& x_start, int client,
                          long round, const EngineOptions& opt, const StreamFactory& streams,
                          ParamVector& u) {
  ParamVector x_loc = x_start;
  ParamVector g;
  u.assign(x_start.size(), 0.0);
  for (int c = 1; c <= opt.local_iters; ++c) {
    problem.client_grad(x_loc, client, round, c, opt.batch_size, streams, g);
    for (size_t d = 0; d < x_loc.size(); ++d) {
      double step = opt.prox_mu > 0.0
                        ? opt.gamma * (g[d] + opt.prox_mu * (x_loc[d] - x_start[d]))
                        : opt.gamma * g[d];
      x_loc[d] -= step;
      u[d] -= step;
    }
  }
}

}  // namespace

void fedlaavg_step(ServerState& server, std::vector<ClientCache>& caches,
                   const std::vector<int>& available, const TrainingProblem& problem,
                   const EngineOptions& opt, const StreamFactory& streams,
                   const StepObserver* observer) {
  long t = server.step + 1;
  SelectionOutcome sel =
      select_latest(available, server.last_participation, opt.select_count, opt.strict);
  int ns = static_cast<int>(sel.selected.size());
  double inv_n = 1.0 / static_cast<double>(caches.size());

  std::vector<ParamVector> grads(ns);
  for_each_client(ns, opt.threads, [&](int k) {
    problem.client_grad(server.params, sel.selected[k], t, 1, opt.batch_size, streams, grads[k]);
  });

  // Difference uploads merge in ascending id order (sel.selected is sorted),
  // fixing the summation order regardless of thread count.
  for (int k = 0; k < ns; ++k) {
    int i = sel.selected[k];
    ParamVector& old = caches[i].last_upload;
    if (old.empty()) old.assign(server.params.size(), 0.0);
    for (size_t d = 0; d < server.params.size(); ++d)
      server.cached_avg[d] += (grads[k][d] - old[d]) * inv_n;
    old = std::move(grads[k]);
    server.last_participation[i] = t;
  }
  for (size_t d = 0; d < server.params.size(); ++d)
    server.params[d] -= opt.gamma * server.cached_avg[d];
  server.step = t;

  if (observer) (*observer)({t, &server, &caches, &sel});
}

void fedlaavg_round(ServerState& server, std::vector<ClientCache>& caches,
                    const std::vector<int>& available, const TrainingProblem& problem,
                    const EngineOptions& opt, const StreamFactory& streams,
                    const StepObserver* observer) {
  long r = server.step + 1;
  SelectionOutcome sel =
      select_latest(available, server.last_participation, opt.select_count, opt.strict);
  int ns = static_cast<int>(sel.selected.size());
  double inv_n = 1.0 / static_cast<double>(caches.size());

  std::vector<ParamVector> updates(ns);
  for_each_client(ns, opt.threads, [&](int k) {
    run_local_iterations(problem, server.params, sel.selected[k], r, opt, streams, updates[k]);
  });

  for (int k = 0; k < ns; ++k) {
    int i = sel.selected[k];
    ParamVector& old = caches[i].last_upload;
    if (old.empty()) old.assign(server.params.size(), 0.0);
    for (size_t d = 0; d < server.params.size(); ++d)
      server.cached_avg[d] += (updates[k][d] - old[d]) * inv_n;
    old = std::move(updates[k]);
    server.last_participation[i] = r;
  }
  for (size_t d = 0; d < server.params.size(); ++d) server.params[d] += server.cached_avg[d];
  server.step = r;

  if (observer) (*observer)({r, &server, &caches, &sel});
}

void fedavg_round(ServerState& server, const std::vector<int>& available,
                  const TrainingProblem& problem, const EngineOptions& opt,
                  const StreamFactory& streams, const StepObserver* observer) {
  long r = server.step + 1;
  RandomStream pick = streams.make("select", -1, r, 0);
  SelectionOutcome sel = select_uniform(available, opt.select_count, opt.strict, pick);
  int ns = static_cast<int>(sel.selected.size());

  if (ns > 0) {
    std::vector<ParamVector> updates(ns);
    for_each_client(ns, opt.threads, [&](int k) {
      run_local_iterations(problem, server.params, sel.selected[k], r, opt, streams, updates[k]);
    });
    // Fresh mean over the selected updates, in ascending id order.
    double inv_k = 1.0 / static_cast<double>(ns);
    ParamVector delta(server.params.size(), 0.0);
    for (int k = 0; k < ns; ++k)
      for (size_t d = 0; d < delta.size(); ++d) delta[d] += updates[k][d] * inv_k;
    for (size_t d = 0; d < server.params.size(); ++d) server.params[d] += delta[d];
    for (int i : sel.selected) server.last_participation[i] = r;
  }
  server.step = r;

  if (observer) (*observer)({r, &server, nullptr, &sel});
}

ParamVector fedprox_local_step(const ParamVector& x_local, const ParamVector& x_global,
                               const ParamVector& g, double mu, double gamma) {
  if (x_local.size() != x_global.size() || x_local.size() != g.size())
    throw DimensionMismatch("fedprox_local_step: size mismatch");
  ParamVector out(x_local.size());
  for (size_t d = 0; d < out.size(); ++d)
    out[d] = x_local[d] - gamma * (g[d] + mu * (x_local[d] - x_global[d]));
  return out;
}

void seqsgd_round(ServerState& server, const TrainingProblem& problem, const EngineOptions& opt,
                  int steps_per_round, const StreamFactory& streams,
                  const StepObserver* observer) {
  long r = server.step + 1;
  ParamVector g;
  for (int s = 1; s <= steps_per_round; ++s) {
    problem.pooled_grad(server.params, r, s, opt.batch_size, streams, g);
    for (size_t d = 0; d < server.params.size(); ++d) server.params[d] -= opt.gamma * g[d];
    if (observer) {
      long inner = (r - 1) * steps_per_round + s;
      (*observer)({inner, &server, nullptr, nullptr});
    }
  }
  server.step = r;
}

std::vector<ParamVector> fedlaavg_round_reference(const TrainingProblem& problem,
                                                  const Schedule& schedule, long rounds,
                                                  const EngineOptions& opt,
                                                  const StreamFactory& streams,
                                                  const ParamVector& x0) {
  int n = problem.num_clients();
  int m = static_cast<int>(x0.size());
  int C = opt.local_iters;
  ParamVector x = x0;
  std::vector<long> last(n, 0);
  std::vector<ParamVector> locals(n, ParamVector(m, 0.0));
  // Gradients of each client's last participating round, one slot per local
  // offset; zeros stand in for "never participated".
  std::vector<std::vector<ParamVector>> stale(n, std::vector<ParamVector>(C, ParamVector(m, 0.0)));
  double scale = opt.gamma / static_cast<double>(n);

  std::vector<ParamVector> per_round;
  per_round.reserve(rounds);
  ParamVector g(m), acc(m);
  for (long r = 1; r <= rounds; ++r) {
    std::vector<int> avail = schedule.available(r);
    SelectionOutcome sel = select_latest(avail, last, opt.select_count, opt.strict);
    for (int i : sel.selected) {
      locals[i] = x;
      last[i] = r;
    }
    for (int c = 1; c <= C; ++c) {
      for (int i : sel.selected) {
        problem.client_grad(locals[i], i, r, c, opt.batch_size, streams, g);
        stale[i][c - 1] = g;  // fresh gradient enters this global step
      }
      acc.assign(m, 0.0);
      for (int i = 0; i < n; ++i)
        for (int d = 0; d < m; ++d) acc[d] += stale[i][c - 1][d];
      for (int d = 0; d < m; ++d) x[d] -= scale * acc[d];
      for (int i : sel.selected)
        for (int d = 0; d < m; ++d) locals[i][d] -= opt.gamma * stale[i][c - 1][d];
    }
    per_round.push_back(x);
  }
  return per_round;
}

}  // namespace fedsim
