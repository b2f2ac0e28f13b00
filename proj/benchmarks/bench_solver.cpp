#include <benchmark/benchmark.h>

#include "spmds/analysis.hpp"
#include "spmds/io.hpp"
#include "spmds/solver.hpp"
#include "spmds/traffic.hpp"

using namespace spmds;

namespace {

const io::EvCase& ev13() {
  static const io::EvCase c = io::build_ev_case(io::load_scenario(SPMDS_DATA_DIR "/ieee13_scenario.json"));
  return c;
}

const io::EvCase& ev123() {
  static const io::EvCase c = io::build_ev_case(io::load_scenario(SPMDS_DATA_DIR "/ieee123_scenario.json"));
  return c;
}

void step_ev(benchmark::State& state, const io::EvCase& c, solve::Method m) {
  solve::SolverConfig cfg = io::load_scenario(SPMDS_DATA_DIR "/ieee13_scenario.json").solver;
  cfg.method = m;
  cfg.threads = static_cast<int>(state.range(0));
  const solve::GroupStructure groups =
      m == solve::Method::spmds
          ? c.groups
          : solve::single_group(c.problem->agent_count(), static_cast<int>(c.problem->impact().rows()));
  solve::IterationState s = solve::initial_state(*c.problem, groups);
  for (auto _ : state) {
    s = m == solve::Method::spmds ? solve::spmds_step(s, *c.problem, groups, cfg)
                                  : solve::spds_step(s, *c.problem, cfg);
    benchmark::DoNotOptimize(s.U.data());
  }
}

void BM_Spmds13(benchmark::State& s) { step_ev(s, ev13(), solve::Method::spmds); }
void BM_Spds13(benchmark::State& s) { step_ev(s, ev13(), solve::Method::spds); }
void BM_Spmds123(benchmark::State& s) { step_ev(s, ev123(), solve::Method::spmds); }
void BM_Spds123(benchmark::State& s) { step_ev(s, ev123(), solve::Method::spds); }

BENCHMARK(BM_Spmds13)->Arg(1)->Arg(4);
BENCHMARK(BM_Spds13)->Arg(1);
BENCHMARK(BM_Spmds123)->Arg(1)->Arg(4);
BENCHMARK(BM_Spds123)->Arg(1);

void BM_PolyhedronProjection(benchmark::State& state) {
  const auto inst = traffic::build_fig7_instance();
  Vector y = Vector::LinSpaced(inst.problem.agent_count(), -1.0, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(traffic::project_polyhedron(inst.problem.impact(), Vector(inst.problem.capacity().col(0)), y));
}
BENCHMARK(BM_PolyhedronProjection);

void BM_Fig7Run(benchmark::State& state) {
  const auto c = io::build_traffic_case(io::load_scenario(SPMDS_DATA_DIR "/fig7_scenario.json"));
  auto cfg = io::load_scenario(SPMDS_DATA_DIR "/fig7_scenario.json").solver;
  cfg.eps0 = 1e-300;
  cfg.max_iters = 1000;
  for (auto _ : state) benchmark::DoNotOptimize(solve::run(*c.problem, c.groups, cfg).final_state.U.data());
}
BENCHMARK(BM_Fig7Run)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
