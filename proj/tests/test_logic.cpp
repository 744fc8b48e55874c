#include "stirap/logic.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace stirap;
using Catch::Approx;

namespace {

ObservableSeries single_sample(const StateVector& c) {
  Trajectory traj;
  traj.times = {0.0};
  traj.states = {c};
  return observables(traj, {{0, 2}});
}

std::vector<std::string> words(const SisoResult& r) {
  std::vector<std::string> out;
  for (const auto& w : r.words) out.push_back(w.to_string());
  return out;
}

}  // namespace

TEST_CASE("population bit readout") {
  const LogicEncoding enc;
  StateVector c = StateVector::Zero(3);
  c(2) = std::sqrt(0.995);
  c(0) = std::sqrt(0.005);
  CHECK(read_population_bit(single_sample(c), 2, 0.0, enc) == 1);
  c.setZero();
  c(0) = c(2) = std::sqrt(0.5);
  CHECK(read_population_bit(single_sample(c), 2, 0.0, enc) == 0);
  CHECK(read_population_bit(single_sample(basis_state(3, 0)), 2, 0.0, enc) == 0);
}

TEST_CASE("coherence bit readout") {
  const LogicEncoding enc;
  StateVector c = StateVector::Zero(3);
  c(0) = c(2) = 1.0 / std::sqrt(2.0);
  CHECK(read_coherence_bit(single_sample(c), {0, 2}, 0.0, enc) == 1);
  CHECK(read_coherence_bit(single_sample(-c.cwiseProduct(Eigen::Vector3cd(1, 1, -1))), {0, 2}, 0.0, enc) == 1);
  CHECK(read_coherence_bit(single_sample(basis_state(3, 2)), {0, 2}, 0.0, enc) == 0);
  CHECK(read_coherence_bit(single_sample(StateVector::Zero(3)), {0, 2}, 0.0, enc) == 0);
}

TEST_CASE("encoding validation") {
  CHECK_THROWS_AS(require_valid(LogicEncoding{0.4, 0.4}), ValidationError);
  CHECK_THROWS_AS(require_valid(LogicEncoding{0.9, 0.6}), ValidationError);
  CHECK_NOTHROW(require_valid(LogicEncoding{}));
}

TEST_CASE("transfer channel routing") {
  CHECK(SimContext::transfer_channels(0, 2) == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(SimContext::transfer_channels(2, 0) == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(SimContext::transfer_channels(6, 4) == std::pair<std::size_t, std::size_t>{5, 4});
  CHECK_THROWS_AS(SimContext::transfer_channels(0, 4), ValidationError);
}

TEST_CASE("TFF rows") {
  const SimContext ctx;
  const auto hold = tff_step(0, 0, ctx);
  CHECK(hold.next == 0);
  CHECK(hold.remark == Remark::Hold);
  const auto up = tff_step(0, 1, ctx);
  CHECK(up.next == 1);
  CHECK(up.remark == Remark::Toggle);
  const auto down = tff_step(1, 1, ctx);
  CHECK(down.next == 0);
  CHECK(down.remark == Remark::Toggle);
  CHECK(down.readout.rho00 > 0.99);
  CHECK_THROWS_AS(tff_step(2, 1, ctx), ValidationError);
}

TEST_CASE("TFF toggle is an involution") {
  const SimContext ctx;
  for (int q : {0, 1}) {
    const auto runs = tff_run(q, {1, 1}, ctx);
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].next == 1 - q);
    CHECK(runs[1].next == q);
  }
}

TEST_CASE("DFF rows: next depends only on D") {
  const SimContext ctx;
  for (int d : {0, 1}) {
    const auto a = dff_step(d, 0, ctx);
    const auto b = dff_step(d, 1, ctx);
    CHECK(a.next == d);
    CHECK(b.next == d);
    CHECK(a.q_bar == 1 - d);
    CHECK(a.remark == (d ? Remark::Set : Remark::Reset));
  }
  const auto set_from_one = dff_step(1, 1, ctx);
  CHECK(set_from_one.readout.rho00 == Approx(0.5).margin(0.03));
  CHECK(set_from_one.readout.rho22 == Approx(0.5).margin(0.03));
  CHECK(std::abs(set_from_one.readout.re_rho02) >= 0.45);
}

TEST_CASE("truth tables pass with default parameters") {
  const auto report = verify_truth_tables(SimContext{});
  CHECK(report.rows.size() == 8);
  CHECK(report.passed() == 8);
  CHECK(report.all_pass());
}

TEST_CASE("truth tables fail when adiabaticity is broken") {
  SimContext ctx;
  ctx.omega0 = 1.0;
  const auto report = verify_truth_tables(ctx);
  CHECK_FALSE(report.all_pass());
}

TEST_CASE("strict thresholds flag borderline rows with their measured values") {
  SimContext ctx;
  ctx.encoding.population_high = 0.999;
  const auto report = verify_tff_table(ctx);
  CHECK_FALSE(report.all_pass());
  for (const auto& row : report.rows)
    if (!row.pass) {
      CHECK(std::max(row.measured.readout.rho00, row.measured.readout.rho22) < 0.999);
      CHECK(std::max(row.measured.readout.rho00, row.measured.readout.rho22) > 0.9);
    }
}

TEST_CASE("data words") {
  const auto w = make_level_word("0100", 7);
  CHECK(w.to_string() == "0100");
  CHECK(w.ones() == 1);
  CHECK(w.labels == std::vector<std::string>{"0", "2", "4", "6"});
  CHECK_THROWS_AS(make_level_word("01", 7), ValidationError);
  CHECK_THROWS_AS(make_level_word("0120", 7), ValidationError);
}

TEST_CASE("population shift register") {
  const SimContext ctx;
  SECTION("right shift on 5 levels") {
    const auto r = siso_shift(make_level_word("100", 5), 5, ShiftDirection::Right, RegisterMode::Population, ctx);
    CHECK(words(r) == std::vector<std::string>{"100", "010", "001"});
  }
  SECTION("left shift on 5 levels") {
    const auto r = siso_shift(make_level_word("001", 5), 5, ShiftDirection::Left, RegisterMode::Population, ctx);
    CHECK(words(r) == std::vector<std::string>{"001", "010", "100"});
  }
  SECTION("one bit moves one position per clock on 7 levels") {
    const auto r = siso_shift(make_level_word("0100", 7), 7, ShiftDirection::Right, RegisterMode::Population, ctx);
    REQUIRE(r.words.size() == 3);
    for (std::size_t i = 0; i < r.words.size(); ++i) {
      CHECK(r.words[i].ones() == 1);
      CHECK(r.words[i].bits[1 + i] == 1);
    }
  }
  SECTION("already at the end") {
    const auto r = siso_shift(make_level_word("001", 5), 5, ShiftDirection::Right, RegisterMode::Population, ctx);
    CHECK(words(r) == std::vector<std::string>{"001"});
  }
  SECTION("invalid inputs") {
    CHECK_THROWS_AS(siso_shift(make_level_word("110", 5), 5, ShiftDirection::Right, RegisterMode::Population, ctx),
                    ValidationError);
    CHECK_THROWS_AS(siso_shift(make_level_word("100", 5), 7, ShiftDirection::Right, RegisterMode::Population, ctx),
                    ValidationError);
  }
}

TEST_CASE("coherence shift register on 7 levels") {
  const SimContext ctx;
  const auto r = siso_shift(make_level_word("1000", 7), 7, ShiftDirection::Right, RegisterMode::Coherence, ctx);
  CHECK(words(r) == std::vector<std::string>{"1000", "0100", "0010", "0001"});
  CHECK(r.words.back().labels == std::vector<std::string>{"P00", "P02", "P04", "P06"});
  // Exactly one coherence bit is set after each clock, the one the dark-state
  // analysis predicts for that step.
  for (std::size_t step = 1; step <= 3; ++step) {
    const auto& w = r.words[step];
    const auto predicted = predicted_coherences(step_table_angles(step_from_number(step)));
    std::size_t set = 0;
    for (std::size_t b = 1; b < w.bits.size(); ++b) {
      set += w.bits[b];
      CHECK((w.bits[b] == 1) == (predicted.magnitude(0, 2 * b) > 0.25));
    }
    CHECK(set == 1);
  }
}

TEST_CASE("coherence shift register on 5 levels moves rho24 to rho04 to rho02") {
  const SimContext ctx;
  const auto r = siso_shift(make_level_word("011", 5), 5, ShiftDirection::Left, RegisterMode::Coherence, ctx);
  CHECK(words(r) == std::vector<std::string>{"011", "101", "110"});
  const auto last = r.trajectory.final_state();
  CHECK(std::abs(last(0) * std::conj(last(2))) >= 0.45);
}

TEST_CASE("coherence register input checks") {
  const SimContext ctx;
  CHECK_THROWS_AS(siso_shift(make_level_word("000", 5), 5, ShiftDirection::Right, RegisterMode::Coherence, ctx),
                  ValidationError);
  CHECK_THROWS_AS(siso_shift(make_level_word("111", 5), 5, ShiftDirection::Right, RegisterMode::Coherence, ctx),
                  ValidationError);
  CHECK_THROWS_AS(siso_shift(make_level_word("001", 5), 5, ShiftDirection::Right, RegisterMode::Coherence, ctx),
                  ValidationError);
}
