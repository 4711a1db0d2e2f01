#pragma once

#include <functional>
#include <vector>

#include "fedsim/availability.hpp"
#include "fedsim/objectives.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

// Server-side state. Memory discipline: the model, exactly one extra
// parameter-sized aggregate cache, and O(N) scalars — nothing else.
struct ServerState {
  ParamVector params;
  ParamVector cached_avg;  // running average: gradients (step) or updates (round)
  std::vector<long> last_participation;  // 0 = never participated
  long step = 0;  // completed iterations (step mode) or rounds (round mode)

  static ServerState init(int num_clients, int dim, ParamVector x0 = {});
  // Structural count of parameter-sized buffers held by the server.
  int parameter_vector_count() const { return 2; }
};

// Client-side memory of the last uploaded quantity (zero until first upload).
struct ClientCache {
  ParamVector last_upload;
};

struct SelectionOutcome {
  std::vector<int> selected;  // ascending ids
  int available_count = 0;
};

// K available clients with the smallest last-participation values, ties by
// ascending id. Non-strict mode selects everyone when fewer than K are
// available; strict mode throws InsufficientAvailable.
SelectionOutcome select_latest(const std::vector<int>& available,
                               const std::vector<long>& last_participation, int K, bool strict);

// K available clients uniformly without replacement.
SelectionOutcome select_uniform(const std::vector<int>& available, int K, bool strict,
                                RandomStream& stream);

struct EngineOptions {
  double gamma = 0.01;
  int local_iters = 1;  // C
  int select_count = 1;  // K
  bool strict = false;
  int batch_size = 1;
  double prox_mu = 0.0;
  int threads = 1;  // client-loop kernel width; merges stay ordered
};

// Post-step observation hook for traces and invariant checks.
struct StepView {
  long step = 0;
  const ServerState* server = nullptr;
  const std::vector<ClientCache>* caches = nullptr;
  const SelectionOutcome* selection = nullptr;
};
using StepObserver = std::function<void(const StepView&)>;

// One latest-average iteration: selected clients upload gradient differences,
// the cache absorbs them at weight 1/N, then x <- x - gamma * cache.
void fedlaavg_step(ServerState& server, std::vector<ClientCache>& caches,
                   const std::vector<int>& available, const TrainingProblem& problem,
                   const EngineOptions& opt, const StreamFactory& streams,
                   const StepObserver* observer = nullptr);

// One latest-average round: selected clients run C local SGD iterations from
// the global model, upload update differences, then x <- x + cache.
void fedlaavg_round(ServerState& server, std::vector<ClientCache>& caches,
                    const std::vector<int>& available, const TrainingProblem& problem,
                    const EngineOptions& opt, const StreamFactory& streams,
                    const StepObserver* observer = nullptr);

// One round of the participant-mean baseline family: uniform selection, C
// local iterations (prox-regularized when prox_mu > 0), fresh mean over the
// selected updates. C=1, mu=0 is plain FedSGD.
void fedavg_round(ServerState& server, const std::vector<int>& available,
                  const TrainingProblem& problem, const EngineOptions& opt,
                  const StreamFactory& streams, const StepObserver* observer = nullptr);

// x_local - gamma * (g + mu * (x_local - x_global)), exposed for testing.
ParamVector fedprox_local_step(const ParamVector& x_local, const ParamVector& x_global,
                               const ParamVector& g, double mu, double gamma);

// steps_per_round sequential pooled mini-batch SGD steps; the observer (when
// given) fires after each inner step with the running iteration index.
void seqsgd_round(ServerState& server, const TrainingProblem& problem, const EngineOptions& opt,
                  int steps_per_round, const StreamFactory& streams,
                  const StepObserver* observer = nullptr);

// Reference form of the round algorithm, advancing per iteration: stale local
// gradients of absent clients enter every global step directly. Returns the
// global params after each round; agrees with fedlaavg_round at round ends.
// Serial, memory-heavy (N*C cached gradients) — a test oracle, not a engine.
std::vector<ParamVector> fedlaavg_round_reference(const TrainingProblem& problem,
                                                  const Schedule& schedule, long rounds,
                                                  const EngineOptions& opt,
                                                  const StreamFactory& streams,
                                                  const ParamVector& x0);

}  // namespace fedsim
