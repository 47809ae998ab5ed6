#include <cmath>
#include <limits>

#include "doctest.h"
#include "equiroute/baselines.hpp"
#include "equiroute/eval.hpp"
#include "equiroute/oracle.hpp"
#include "equiroute/report.hpp"
#include "../support/reference.hpp"

using namespace equiroute;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SweepCurve curve_of(std::vector<CostPerf> pts) {
  SweepCurve c;
  for (const auto& p : pts) c.points.push_back({p.x, p.x, p.y, {1}, 0});
  return c;
}

/// Always returns the same score row, so selections only depend on costs.
class FixedRouter final : public Router {
 public:
  FixedRouter(std::vector<double> s) : s_(std::move(s)) {}
  std::string kind() const override { return "fixed"; }
  std::size_t num_models() const override { return s_.size(); }
  std::vector<double> scores(const RoutingTable&, std::size_t) const override { return s_; }

 private:
  std::vector<double> s_;
};

RoutingTable abc_table(std::vector<double> a) {
  RoutingTable t;
  t.models = {{0, "A", 1}, {1, "B", 2}, {2, "C", 3}};
  t.query_ids = {"q"};
  t.embeddings = Matrix(1, 1, 0.0);
  t.perf = Matrix(1, 3, std::move(a));
  t.cost = Matrix(1, 3, {1, 2, 3});
  return t;
}

}  // namespace

TEST_CASE("budget_grid") {
  RoutingTable t;
  t.models = {{0, "a", 1}, {1, "b", 1}};
  t.query_ids = {"x", "y"};
  t.embeddings = Matrix(2, 1);
  t.perf = Matrix(2, 2);
  t.cost = Matrix(2, 2, {1, 2, 1.5, 3});
  const auto q = all_indices(2);
  CHECK(budget_grid(t, q, 3) == std::vector<double>{1, 2, 3});
  CHECK(budget_grid(t, q, 2) == std::vector<double>{1, 3});
  t.cost.fill(0.25);
  CHECK(budget_grid(t, q, 4) == std::vector<double>(4, 0.25));
  CHECK_THROWS_AS(budget_grid(t, q, 1), ValidationError);
  CHECK_THROWS_AS(budget_grid(t, std::vector<std::size_t>{}, 5), ValidationError);
  CHECK(budget_grid(t, q).size() == 100);
}

TEST_CASE("sweep examples") {
  std::mt19937_64 gen(3);
  const RoutingTable t = ref::random_table(gen, 50, 4, 2);
  const auto q = all_indices(50);
  const OracleRouter oracle(4);
  const double top[] = {1e9};
  auto c = sweep(oracle, t, q, top, CostSource::oracle, nullptr);
  double row_max = 0.0;
  for (std::size_t n : q) row_max += *std::max_element(t.perf.row(n).begin(), t.perf.row(n).end());
  CHECK(c.points[0].mean_perf == doctest::Approx(row_max / 50).epsilon(1e-14));

  // Model 0 wins every score comparison; above column 0's max it is always chosen.
  const FixedRouter first({1, 0, 0, 0});
  double col_max = 0.0, col_mean = 0.0;
  for (std::size_t n : q) {
    col_max = std::max(col_max, t.cost(n, 0));
    col_mean += t.cost(n, 0) / 50;
  }
  const double grid[] = {col_max, col_max + 1, 100};
  c = sweep(first, t, q, grid, CostSource::oracle, nullptr);
  for (const auto& p : c.points) {
    CHECK(p.mean_cost == doctest::Approx(col_mean).epsilon(1e-14));
    CHECK(p.calls[0] == 50);
  }

  // Two queries by hand: a = [[1, 0], [0.5, 1]], c = [[1, 2], [1, 3]].
  RoutingTable h;
  h.models = {{0, "a", 1}, {1, "b", 1}};
  h.query_ids = {"x", "y"};
  h.embeddings = Matrix(2, 1);
  h.perf = Matrix(2, 2, {1, 0, 0.5, 1});
  h.cost = Matrix(2, 2, {1, 2, 1, 3});
  const double budgets[] = {3, 2, 0.5};
  c = sweep(OracleRouter(2), h, all_indices(2), budgets, CostSource::oracle, nullptr);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].budget == 2);  // ties in mean cost keep grid order
  CHECK(c.points[0].mean_cost == 1.0);
  CHECK(c.points[0].mean_perf == 0.75);
  CHECK(c.points[1].budget == 0.5);
  CHECK(c.points[1].clamped == 2);
  CHECK(c.points[2].mean_cost == 2.0);
  CHECK(c.points[2].mean_perf == 1.0);
  CHECK(c.points[2].calls == std::vector<std::size_t>{1, 1});
}

TEST_CASE("nauc, peak score and qnc on hand curves") {
  const std::vector<CostPerf> two{{0, 0.5}, {1, 1.0}};
  CHECK(std::abs(nauc(two) - 0.75) <= 1e-12);
  const std::vector<CostPerf> flat{{2, 1}, {3, 1}, {7, 1}};
  CHECK(nauc(flat) == 1.0);
  const std::vector<CostPerf> one{{1, 0.3}};
  CHECK_THROWS_WITH(nauc(one), doctest::Contains("degenerate cost range"));
  const std::vector<CostPerf> same_x{{1, 0.3}, {1, 0.5}};
  CHECK_THROWS_AS(nauc(same_x), ValidationError);

  // Duplicate x contributes zero area: merged keeps the max y.
  const SweepCurve dup = curve_of({{0, 0.5}, {1, 0.8}, {1, 1.0}});
  const auto merged = merged_points(dup);
  REQUIRE(merged.size() == 2);
  CHECK(merged[1].y == 1.0);
  CHECK(nauc(dup) == doctest::Approx(0.75));

  const std::vector<CostPerf> hand{{1, 0.7}, {2, 0.8}, {3, 0.8}};
  const auto peak = peak_score(hand);
  CHECK(peak.score == 0.8);
  CHECK(peak.cost == 2);
  CHECK(peak_score(one).score == 0.3);
  const auto q = qnc(hand, 0.8, 3.0);
  REQUIRE(q.achieved());
  CHECK(*q.relative == 2.0 / 3.0);
  const std::vector<CostPerf> short_of{{1, 0.7}, {2, 0.79}};
  CHECK_FALSE(qnc(short_of, 0.8, 3.0).achieved());
}

TEST_CASE("property: nauc is invariant to interpolated insertions") {
  std::mt19937_64 gen(44);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CostPerf> pts;
    double x = u(gen);
    for (int i = 0; i < 6; ++i) {
      pts.push_back({x, u(gen)});
      x += 0.1 + u(gen);
    }
    const double base = nauc(pts);
    const std::size_t at = 1 + static_cast<std::size_t>(u(gen) * 4.99);
    const double w = u(gen);
    const CostPerf mid{pts[at - 1].x + w * (pts[at].x - pts[at - 1].x),
                       pts[at - 1].y + w * (pts[at].y - pts[at - 1].y)};
    pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(at), mid);
    CHECK(nauc(pts) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("property: dominating curves reach the best model no later") {
  std::mt19937_64 gen(45);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CostPerf> low, high;
    for (int i = 0; i < 8; ++i) {
      const double y = u(gen);
      low.push_back({static_cast<double>(i + 1), y});
      high.push_back({static_cast<double>(i + 1), std::min(1.0, y + 0.3 * u(gen))});
    }
    low.back().y = 1.0;
    high.back().y = 1.0;
    const auto ql = qnc(low, 0.9, 8.0);
    const auto qh = qnc(high, 0.9, 8.0);
    REQUIRE(ql.achieved());
    REQUIRE(qh.achieved());
    CHECK(*qh.relative <= *ql.relative);
  }
}

TEST_CASE("standalone_best picks the lowest index on ties") {
  RoutingTable t;
  t.models = {{0, "a", 1}, {1, "b", 1}, {2, "c", 1}};
  t.query_ids = {"x", "y"};
  t.embeddings = Matrix(2, 1);
  t.perf = Matrix(2, 3, {1, 0, 1, 0, 1, 0});
  t.cost = Matrix(2, 3, {1, 2, 3, 1, 4, 5});
  const auto b = standalone_best(t, all_indices(2));
  CHECK(b.j_max == 0);
  CHECK(b.a_max == 0.5);
  CHECK(b.x_max == 1.0);
}

TEST_CASE("rci worked examples") {
  const std::size_t q[] = {0};
  const std::size_t pick_c[] = {2};
  const std::size_t pick_b[] = {1};
  const std::size_t pick_a[] = {0};
  CHECK(rci(abc_table({1, 1, 1}), pick_c, q).rci == 1.0);
  CHECK(rci(abc_table({0, 1, 0}), pick_c, q).rci == 1.0);
  const auto b = rci(abc_table({0, 1, 0}), pick_b, q);
  CHECK(b.rci == 0.0);
  CHECK(b.records[0].cheaper == 1);
  CHECK(b.records[0].cheaper_good == 0);
  CHECK(rci(abc_table({1, 1, 1}), pick_a, q).rci == 0.0);
  CHECK(rci(abc_table({1, 1, 1}), pick_b, q).rci == 1.0);
  CHECK(rci(abc_table({0.5, 1, 1}), pick_c, q).rci == 0.5);
  const std::size_t bad[] = {3};
  CHECK_THROWS_AS(rci(abc_table({1, 1, 1}), bad, q), ValidationError);
}

TEST_CASE("property: rci matches brute force and stays in [0, 1]") {
  std::mt19937_64 gen(46);
  for (int trial = 0; trial < 100; ++trial) {
    const RoutingTable t = ref::random_table(gen, 20, 5, 1);
    const auto q = all_indices(20);
    std::vector<std::size_t> sel(20);
    std::uniform_int_distribution<std::size_t> pick(0, 4);
    double expect = 0.0;
    for (std::size_t n = 0; n < 20; ++n) {
      sel[n] = pick(gen);
      expect += ref::collapse_score(ref::row(t.perf, n), ref::row(t.cost, n), sel[n]);
    }
    const auto r = rci(t, sel, q);
    CHECK(r.rci == doctest::Approx(expect / 20).epsilon(1e-14));
    CHECK(r.rci >= 0.0);
    CHECK(r.rci <= 1.0);
  }
}

TEST_CASE("oracle rci is zero without cost ties") {
  SynthConfig cfg;
  cfg.n_queries = 500;
  cfg.tie_fraction = 1.0;
  const RoutingTable t = generate_synthetic(cfg);
  const auto q = all_indices(500);
  std::vector<std::size_t> oracle(500), expensive(500, t.num_models() - 1);
  for (std::size_t n : q) oracle[n] = oracle_select(t, n, kInf);
  CHECK(rci(t, oracle, q).rci == 0.0);

  // Model K-1 is never uniquely optimal; each query scores the share of cheaper
  // models that match it, which reaches 1 once every model ties.
  const auto partial = rci(t, expensive, q);
  CHECK(partial.rci > 0.0);
  CHECK(partial.rci < 1.0);
  RoutingTable all_equal = t;
  all_equal.perf.fill(1.0);
  CHECK(rci(all_equal, expensive, q).rci == 1.0);
}

TEST_CASE("call rates") {
  std::mt19937_64 gen(47);
  const RoutingTable t = ref::random_table(gen, 40, 3, 2);
  const auto q = all_indices(40);
  const auto grid = budget_grid(t, q, 10);
  const auto constant = sweep(FixedRouter({0, 0, 1}), t, q, grid, CostSource::oracle, nullptr);
  const Matrix shares_const = call_rate_curve(constant);
  for (std::size_t i = 0; i < shares_const.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 3; ++j) total += shares_const(i, j);
    CHECK(total == doctest::Approx(1.0));
  }
  CHECK(shares_const(shares_const.rows() - 1, 2) == 1.0);

  // Strongest model always tied with a cheaper one: the oracle never calls it.
  SynthConfig cfg;
  cfg.n_queries = 300;
  cfg.tie_fraction = 1.0;
  const RoutingTable tied = generate_synthetic(cfg);
  const auto tq = all_indices(300);
  const auto oc = sweep(OracleRouter(tied.num_models()), tied, tq, budget_grid(tied, tq), CostSource::oracle, nullptr);
  const Matrix shares = call_rate_curve(oc);
  for (std::size_t i = 0; i < shares.rows(); ++i) CHECK(shares(i, tied.num_models() - 1) == 0.0);
}

TEST_CASE("property: oracle dominates any router at every budget") {
  std::mt19937_64 gen(48);
  for (int trial = 0; trial < 30; ++trial) {
    const RoutingTable t = ref::random_table(gen, 60, 4, 3);
    const auto q = all_indices(60);
    const auto grid = budget_grid(t, q, 25);
    const auto oc = sweep(OracleRouter(4), t, q, grid, CostSource::oracle, nullptr);
    const KnnRouter knn = train_knn(t, make_split(60, {3, 1, 6}, 1), 5);
    const auto kc = sweep(knn, t, q, grid, CostSource::oracle, nullptr);
    for (const auto& p : kc.points) {
      const auto o = std::find_if(oc.points.begin(), oc.points.end(), [&](const CurvePoint& x) { return x.budget == p.budget; });
      REQUIRE(o != oc.points.end());
      CHECK(o->mean_perf >= p.mean_perf);
    }
  }
}

TEST_CASE("noise sensitivity and training-set evaluation") {
  SynthConfig cfg;
  cfg.n_queries = 400;
  const RoutingTable t = generate_synthetic(cfg);
  const auto q = all_indices(400);
  const double sigmas[] = {0.0, 0.3};
  const auto rows = noise_sensitivity(t, q, sigmas, kInf, 5);
  const auto oc = sweep(OracleRouter(t.num_models()), t, q, std::vector<double>{kInf}, CostSource::oracle, nullptr);
  CHECK(rows[0].accuracy == oc.points[0].mean_perf);
  CHECK(rows[0].strongest_share ==
        static_cast<double>(oc.points[0].calls[most_expensive_model(t, q)]) / 400.0);
  CHECK(rows[0].accuracy >= rows[1].accuracy);

  const RouterTrainer knn = [](const RoutingTable& tab, const SplitIndices& s) {
    return std::unique_ptr<Router>(new KnnRouter(train_knn(tab, s, 7)));
  };
  const Evaluation a = training_set_eval(knn, t, 20, CostSource::oracle, {});
  const KnnRouter direct = train_knn(t, full_split(400), 7);
  const Evaluation b = evaluate_router(direct, t, q, 20, CostSource::oracle, nullptr);
  CHECK(metrics_json(a.metrics) == metrics_json(b.metrics));
  CHECK(curve_csv(a.curve) == curve_csv(b.curve));
}

TEST_CASE("report writers") {
  MetricsSummary m;
  m.peak_score = 0.5;
  const std::string j = metrics_json(m);
  for (const char* key : {"\"nauc\"", "\"peak_score\"", "\"qnc\"", "\"rci\"", "\"qnc_relative\""}) {
    CHECK(j.find(key) != std::string::npos);
  }
  CHECK(j.find("\"qnc\": \"/\"") != std::string::npos);
  const SweepCurve c = curve_of({{1, 0.5}});
  CHECK(curve_csv(c) == "budget,mean_cost,mean_perf,calls_model_0,clamped\n1,1,0.5,1,0\n");
  CHECK(noise_csv({{0.1, 0.9, 0.25}}) == "sigma,accuracy,strongest_share\n0.1,0.9,0.25\n");
}
