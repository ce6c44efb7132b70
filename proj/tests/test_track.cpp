#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "saetrack/analysis.hpp"
#include "saetrack/synth.hpp"
#include "saetrack/track.hpp"
#include "support.hpp"

using namespace saetrack;
using saetrack::testing::TempDir;

namespace {

std::vector<std::uint64_t> range(std::uint64_t start, std::uint64_t stop, std::uint64_t step = 1) {
  std::vector<std::uint64_t> out;
  for (auto v = start; v < stop; v += step) out.push_back(v);
  return out;
}

std::vector<std::uint64_t> concat(std::initializer_list<std::vector<std::uint64_t>> parts) {
  std::vector<std::uint64_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

TrackConfig small_config(std::uint64_t seed) {
  auto tc = testing::desk_track_config(seed, 16);
  tc.budget = {16000, 4000, {}};
  return tc;
}

synth::Track small_track(std::uint64_t seed, std::size_t steps = 6) {
  synth::SynthConfig c;
  c.dim = 16;
  c.steps = steps;
  c.seed = seed;
  for (int i = 0; i < 3; ++i) c.clusters.push_back({synth::ClusterKind::kToken, 40, 0, 0, 0.5, {}});
  c.clusters.push_back({synth::ClusterKind::kConcept, 40, 0, std::min<std::size_t>(1, steps - 1), 0.0, {}});
  return synth::generate_track(c);
}

}  // namespace

TEST_CASE("build_schedule") {
  CHECK(build_schedule({{0, 1, 33}, {33, 5, 24}}) == concat({range(0, 33), range(33, 153, 5)}));
  CHECK(build_schedule({{0, 1, 1}}) == std::vector<std::uint64_t>{0});
  CHECK(build_schedule({{0, 2, 3}, {6, 3, 2}}) == std::vector<std::uint64_t>{0, 2, 4, 6, 9});

  SUBCASE("CRFM GPT-2 series has 609 checkpoints") {
    const auto steps = build_schedule({{0, 10, 10}, {100, 50, 38}, {2000, 100, 180}, {20000, 1000, 381}});
    CHECK(steps.size() == 609);
    CHECK(steps == concat({range(0, 100, 10), range(100, 2000, 50), range(2000, 20000, 100),
                           range(20000, 400001, 1000)}));
  }
  SUBCASE("Pythia series") {
    const auto steps = build_schedule({{0, 1, 2}, {2, 2, 1}, {4, 4, 1}, {8, 8, 1}, {16, 16, 1}, {32, 32, 1},
                                       {64, 64, 1}, {128, 128, 1}, {256, 256, 1}, {512, 488, 1},
                                       {1000, 1000, 143}});
    CHECK(steps.size() == 154);
    CHECK(std::vector<std::uint64_t>(steps.begin(), steps.begin() + 12) ==
          std::vector<std::uint64_t>{0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000});
    CHECK(steps.back() == 143000);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_schedule({}), ScheduleError);
    CHECK_THROWS_AS(build_schedule({{0, 0, 3}}), ScheduleError);
    CHECK_THROWS_WITH_AS(build_schedule({{0, 1, 3}, {4, 1, 2}}), doctest::Contains("segment 1"), ScheduleError);
  }
  SUBCASE("strictly increasing and deterministic") {
    const auto a = build_schedule({{5, 3, 7}, {26, 11, 4}});
    CHECK(std::is_sorted(a.begin(), a.end(), std::less_equal<>{}));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(a == build_schedule({{5, 3, 7}, {26, 11, 4}}));
  }
}

TEST_CASE("budgets") {
  // First SAE 300M tokens, chain positions 1-4 at 5M, the rest 15M.
  BudgetPlan plan{300'000'000, 15'000'000, {{1, 5'000'000}, {2, 5'000'000}, {3, 5'000'000}, {4, 5'000'000}}};
  CHECK(plan.tokens_for(0) == 300'000'000);
  for (std::size_t k = 1; k <= 4; ++k) CHECK(plan.tokens_for(k) == 5'000'000);
  CHECK(plan.tokens_for(5) == 15'000'000);
  CHECK(plan.tokens_for(100) == 15'000'000);
  CHECK(steps_for_budget(128000, 64) == 2000);
  CHECK(steps_for_budget(65, 64) == 2);
  CHECK_THROWS_AS(steps_for_budget(10, 0), ConfigError);

  TrackConfig tc;
  tc.budget = {100, 200, {}};
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc.budget = {0, 0, {}};
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("track_next with a zero budget returns prev") {
  const auto track = small_track(1, 2);
  SaeOptions o;
  o.dim = 16;
  o.features = 16;
  const auto prev = random_init<double>(o, 2);
  const auto r = track_next(prev, track.shards[1], 0, TrainConfig{});
  CHECK(r.params.w_dec == prev.w_dec);
  CHECK(r.metrics.empty());
}

TEST_CASE("run_track") {
  SUBCASE("one shard gives one fresh SAE") {
    const auto track = small_track(3, 1);
    const auto run = run_track(track.shards, small_config(3));
    REQUIRE(run.entries.size() == 1);
    CHECK(run.schedule.steps() == std::vector<std::uint64_t>{0});
    CHECK(run.entries[0].metrics.back().step == 250);
  }
  SUBCASE("forward chain starts every later SAE below a fresh init") {
    const auto track = small_track(4);
    const auto tc = small_config(4);
    const auto run = run_track(track.shards, tc);
    REQUIRE(run.entries.size() == 6);
    for (std::size_t k = 1; k < 6; ++k) {
      CHECK(run.entries[k].checkpoint_step == k);
      const double warm = evaluate(run.entries[k - 1].params, track.shards[k]).total_loss;
      const double fresh = evaluate(random_init<double>(tc.sae, k), track.shards[k]).total_loss;
      CHECK(warm < fresh);
      CHECK(run.entries[k].metrics.back().step == 63);  // ceil(4000 / 64)
    }
  }
  SUBCASE("errors") {
    const auto track = small_track(5, 3);
    CHECK_THROWS_AS(run_track({}, small_config(5)), ConfigError);
    auto reversed = track.shards;
    std::swap(reversed[0], reversed[2]);
    CHECK_THROWS_AS(run_track(reversed, small_config(5)), ConfigError);
    CHECK_THROWS_AS(run_track(track.shards, small_config(5), Schedule{{{0, 2, 3}}}), ConfigError);
    auto wrong_dim = small_config(5);
    wrong_dim.sae.dim = 8;
    CHECK_THROWS_AS(run_track(track.shards, wrong_dim), ConfigError);
  }
  SUBCASE("deterministic") {
    const auto track = small_track(6, 3);
    const auto a = run_track(track.shards, small_config(6));
    const auto b = run_track(track.shards, small_config(6));
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.entries[k].params.w_dec == b.entries[k].params.w_dec);
  }
}

TEST_CASE("reverse tracking keeps the forward run's progress trends") {
  // Reverse tracking starts from the final checkpoint. Planted concept features still show
  // rising progress over training steps, as they do going forward.
  const auto track = synth::generate_track(synth::default_config(2));
  auto tc = testing::desk_track_config(2);
  tc.budget = {64000, 16000, {}};
  const auto fwd = run_track(track.shards, tc);
  tc.direction = TrackDirection::kReverse;
  const auto rev = run_track(track.shards, tc);
  CHECK(rev.entries.front().metrics.back().step == 250);  // rest budget on the earliest shard
  CHECK(rev.entries.back().metrics.back().step == 1000);

  for (const auto* run : {&fwd, &rev}) {
    const auto matches = testing::match_clusters(*run, track);
    std::size_t rising = 0, concepts = 0;
    for (const auto& m : matches) {
      if (track.truth.clusters[m.cluster].kind == synth::ClusterKind::kToken) continue;
      ++concepts;
      const auto s = progress_series(*run, track.shards, m.topk, {});
      std::vector<double> steps, values;
      for (const auto& p : s.values) {
        steps.push_back(static_cast<double>(p.step));
        values.push_back(p.value);
      }
      rising += testing::spearman(steps, values) >= 0.8;
    }
    CHECK(rising == concepts);
  }
}

TEST_CASE("compare_convergence") {
  const auto track = small_track(7, 2);
  const auto tc = small_config(7);
  const auto run = run_track(track.shards, tc);
  const auto cmp = compare_convergence(run.entries[0].params, random_init<double>(tc.sae, 99), track.shards[1],
                                       tc.train, 250, 10);
  CHECK(cmp.fresh_curve.front().first == 0);
  CHECK(cmp.fresh_curve.back().first == 250);
  CHECK(cmp.warm_initial_loss < cmp.fresh_initial_loss);
  REQUIRE(cmp.warm_steps_to_match.has_value());
  CHECK(*cmp.warm_steps_to_match < 250);
  CHECK_THROWS_AS(compare_convergence(run.entries[0].params, run.entries[0].params, track.shards[1], tc.train, 10, 0),
                  ArgumentError);
}

TEST_CASE("persist and read a track run") {
  TempDir dir("track");
  const auto track = small_track(8, 3);
  const auto run = run_track(track.shards, small_config(8));
  persist_track(run, dir.path());
  const auto back = read_track(dir.path());
  REQUIRE(back.entries.size() == 3);
  CHECK(back.schedule.steps() == run.schedule.steps());
  CHECK(back.config == run.config);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.entries[k].params.w_dec == run.entries[k].params.w_dec.cast<float>().cast<double>());
    CHECK(back.entries[k].metrics.size() == run.entries[k].metrics.size());
    CHECK(back.entries[k].metrics.back().total_loss == run.entries[k].metrics.back().total_loss);
  }
  CHECK_THROWS_AS(read_track(dir.path() / "nope"), IoError);
}

TEST_CASE("train config JSON round trip") {
  TrainConfig c;
  c.learning_rate = 0.002;
  c.batch_size = 17;
  c.seed = 44;
  const auto back = train_config_from_json(to_json(c));
  CHECK(back.learning_rate == 0.002);
  CHECK(back.batch_size == 17);
  CHECK(back.seed == 44);
}
