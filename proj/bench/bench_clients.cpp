// Times the client-gradient kernel serial vs. OpenMP on a logistic workload
// and verifies the two paths produce bit-identical parameters (the merges are
// serialized in ascending client order, so they must).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <thread>

#include "fedsim/algorithms.hpp"
#include "fedsim/objectives.hpp"

using namespace fedsim;

namespace {

struct BenchResult {
  ParamVector params;
  double seconds = 0.0;
};

BenchResult run(int threads, int rounds) {
  const int n_clients = 64;
  const int classes = 8;
  const int dim = 64;
  const long samples = 65536;

  StreamFactory streams(12345);
  SyntheticGeometry geom;
  geom.dim = dim;
  LogisticProblem problem(partition_synthetic(n_clients, classes, samples, streams, geom),
                          classes, dim);

  EngineOptions opt;
  opt.gamma = 0.05;
  opt.local_iters = 4;
  opt.select_count = n_clients;
  opt.batch_size = 64;
  opt.threads = threads;

  ServerState server = ServerState::init(n_clients, problem.dim());
  std::vector<ClientCache> caches(n_clients);
  std::vector<int> everyone(n_clients);
  for (int i = 0; i < n_clients; ++i) everyone[i] = i;

  auto t0 = std::chrono::steady_clock::now();
  for (int r = 1; r <= rounds; ++r)
    fedlaavg_round(server, caches, everyone, problem, opt, streams);
  auto t1 = std::chrono::steady_clock::now();

  BenchResult res;
  res.params = std::move(server.params);
  res.seconds = std::chrono::duration<double>(t1 - t0).count();
  return res;
}

bool bit_identical(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  int rounds = argc > 1 ? std::atoi(argv[1]) : 20;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;

  std::printf("client kernel benchmark: 64 clients x 4 local iters, %d rounds\n", rounds);
  BenchResult serial = run(1, rounds);
  std::printf("  serial reference : %8.3f s\n", serial.seconds);

#ifdef FEDSIM_HAVE_OPENMP
  BenchResult parallel = run(hw, rounds);
  std::printf("  OpenMP x%-8d : %8.3f s  (speedup %.2fx)\n", hw, parallel.seconds,
              serial.seconds / parallel.seconds);
  if (!bit_identical(serial.params, parallel.params)) {
    std::printf("FAIL: parallel parameters differ from the serial reference\n");
    return 1;
  }
  std::printf("  parallel output bit-identical to serial reference\n");
#else
  std::printf("  OpenMP not available; serial path only\n");
#endif
  return 0;
}
