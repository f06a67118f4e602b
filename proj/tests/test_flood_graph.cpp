#include <doctest.h>

#include "dualflood/errors.hpp"
#include "dualflood/flood_graph.hpp"
#include "test_helpers.hpp"

using namespace dualflood;

TEST_CASE("validate_graph: clean path graph has no violations") {
  CHECK(validate_graph(dftest::path_graph(3)).ok());
}

TEST_CASE("validate_graph: reports self-loops") {
  FloodGraph g = dftest::path_graph(3);
  g.edge_src.push_back(0);
  g.edge_dst.push_back(0);
  g.num_edges += 1;
  g.static_edge_features = Eigen::MatrixXd::Ones(g.num_edges, 3);
  const auto report = validate_graph(g);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const auto& v : report.violations) found = found || v.find("self-loop at node 0") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_graph: reports out-of-range endpoints") {
  FloodGraph g = dftest::path_graph(3);
  g.edge_src.push_back(0);
  g.edge_dst.push_back(5);
  g.num_edges += 1;
  g.static_edge_features = Eigen::MatrixXd::Ones(g.num_edges, 3);
  const auto report = validate_graph(g);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const auto& v : report.violations) found = found || v.find("endpoint out of range") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_graph: duplicate edge, overlapping boundary sets, bad curves") {
  FloodGraph g = dftest::path_graph(4);
  g.edge_src.push_back(0);
  g.edge_dst.push_back(1);  // duplicate of the first edge
  g.num_edges += 1;
  g.static_edge_features = Eigen::MatrixXd::Ones(g.num_edges, 3);
  g.outflow_nodes = {0};  // also an inflow node
  g.depth_curves[1].depth = {0.0, -1.0};  // decreasing
  g.static_node_features(2, 0) = 0.0;     // zero area
  const auto report = validate_graph(g);
  CHECK(report.violations.size() >= 4);
}

TEST_CASE("compute_node_fluxes: single positive edge") {
  const FloodGraph g = dftest::path_graph(2);
  Eigen::VectorXd q(1);
  q << 3.0;
  const NodeFluxes f = compute_node_fluxes(g, q);
  CHECK(f.inflow[0] == 0.0);
  CHECK(f.inflow[1] == 3.0);
  CHECK(f.outflow[0] == 3.0);
  CHECK(f.outflow[1] == 0.0);
}

TEST_CASE("compute_node_fluxes: single negative edge swaps the roles") {
  const FloodGraph g = dftest::path_graph(2);
  Eigen::VectorXd q(1);
  q << -3.0;
  const NodeFluxes f = compute_node_fluxes(g, q);
  CHECK(f.inflow[0] == 3.0);
  CHECK(f.inflow[1] == 0.0);
  CHECK(f.outflow[0] == 0.0);
  CHECK(f.outflow[1] == 3.0);
}

TEST_CASE("compute_node_fluxes: triangle with mixed signs matches the enumeration oracle") {
  FloodGraph g = dftest::path_graph(3);
  g.edge_src = {0, 1, 2};
  g.edge_dst = {1, 2, 0};
  g.num_edges = 3;
  g.static_edge_features = Eigen::MatrixXd::Ones(3, 3);
  Eigen::VectorXd q(3);
  q << 2.0, -1.0, 4.0;
  const NodeFluxes f = compute_node_fluxes(g, q);
  const auto oracle = dftest::flux_oracle(g, q);
  for (int i = 0; i < 3; ++i) {
    CHECK(f.inflow[i] == oracle.inflow[i]);
    CHECK(f.outflow[i] == oracle.outflow[i]);
  }
  // hand enumeration: arcs (0->1,2), (2->1,1) from the reversed -1 edge, (2->0,4)
  CHECK(f.inflow[0] == 4.0);
  CHECK(f.inflow[1] == 2.0 + 1.0);
  CHECK(f.inflow[2] == 0.0);
  CHECK(f.outflow[0] == 2.0);
  CHECK(f.outflow[1] == 0.0);
  CHECK(f.outflow[2] == 1.0 + 4.0);
}

TEST_CASE("compute_node_fluxes: conservation identity and negation swap on random graphs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    dftest::Rng rng(seed);
    const FloodGraph g = dftest::random_graph(8, 10, seed);
    const Eigen::VectorXd q = dftest::random_vector(g.num_edges, rng, -5.0, 5.0);
    const NodeFluxes f = compute_node_fluxes(g, q);
    CHECK(f.inflow.minCoeff() >= 0.0);
    CHECK(f.outflow.minCoeff() >= 0.0);
    const double total = q.cwiseAbs().sum();
    CHECK(f.inflow.sum() == doctest::Approx(total).epsilon(1e-12));
    CHECK(f.outflow.sum() == doctest::Approx(total).epsilon(1e-12));

    const NodeFluxes fneg = compute_node_fluxes(g, -q);
    CHECK((fneg.inflow - f.outflow).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fneg.outflow - f.inflow).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("compute_node_fluxes: zero flow gives zero fluxes") {
  const FloodGraph g = dftest::random_graph(6, 5, 4);
  const NodeFluxes f = compute_node_fluxes(g, Eigen::VectorXd::Zero(g.num_edges));
  CHECK(f.inflow.isZero());
  CHECK(f.outflow.isZero());
}

TEST_CASE("compute_node_fluxes: rejects non-finite flow") {
  const FloodGraph g = dftest::path_graph(2);
  Eigen::VectorXd q(1);
  q << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(compute_node_fluxes(g, q), DataError);
}

TEST_CASE("compute_node_fluxes: gradient through the tape matches finite differences") {
  const FloodGraph g = dftest::random_graph(6, 6, 9);
  dftest::Rng rng(77);
  // keep all |q| away from the relu kink
  Eigen::VectorXd q0(g.num_edges);
  for (int k = 0; k < g.num_edges; ++k) {
    const double mag = rng.uniform(0.5, 2.0);
    q0[k] = rng.uniform() < 0.5 ? -mag : mag;
  }
  const Eigen::VectorXd a = dftest::random_vector(g.num_nodes, rng);
  const Eigen::VectorXd b = dftest::random_vector(g.num_nodes, rng);

  auto scalar = [&](const Eigen::VectorXd& q) {
    ad::Tape t;
    ad::Var in, out;
    compute_node_fluxes(t, g, t.leaf(q), &in, &out);
    // nonlinear mix so the chain rule is actually exercised
    const ad::Var mixed = t.add(t.mean_sq(t.mul_elem(in, t.constant(a))),
                                t.mean_sq(t.mul_elem(out, t.constant(b))));
    return t.value(mixed)(0, 0);
  };

  ad::Tape t;
  const ad::Var vq = t.leaf(q0);
  ad::Var in, out;
  compute_node_fluxes(t, g, vq, &in, &out);
  const ad::Var mixed = t.add(t.mean_sq(t.mul_elem(in, t.constant(a))),
                              t.mean_sq(t.mul_elem(out, t.constant(b))));
  t.backward(mixed);
  const Eigen::VectorXd grad = t.grad(vq).col(0);
  const Eigen::VectorXd fd = dftest::fd_gradient(scalar, q0);
  for (int k = 0; k < g.num_edges; ++k) {
    const double denom = std::max(std::abs(fd[k]), 1e-8);
    CHECK(std::abs(grad[k] - fd[k]) / denom <= 1e-5);
  }
}

TEST_CASE("depth curve: evaluation, extrapolation and clamping below zero") {
  DepthCurve c;
  c.volume = {0.0, 10.0, 30.0};
  c.depth = {0.0, 1.0, 1.5};
  CHECK(c.eval(0.0) == 0.0);
  CHECK(c.eval(-5.0) == 0.0);
  CHECK(c.eval(5.0) == doctest::Approx(0.5));
  CHECK(c.eval(20.0) == doctest::Approx(1.25));
  CHECK(c.eval(50.0) == doctest::Approx(1.5 + 0.5 / 20.0 * 20.0));  // final slope carried on
}
