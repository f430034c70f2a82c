#include <doctest.h>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/scenegraph.hpp"
#include "core/util.hpp"
#include "test_support.hpp"

using namespace hazgraph;
using json = nlohmann::json;

namespace {

prompts::PromptLibrary library() { return prompts::PromptLibrary::load(HG_PROMPT_DIR); }

classify::HazardRationale rationale() {
  return {42, "plastic strapping left on workplace floor"};
}

// The worked slip-hazard example shipped with the prompt templates.
scenegraph::SceneGraph example_graph() {
  return scenegraph::graph_from_json(
      util::read_file(std::string(HG_PROMPT_DIR) + "/example_graph.json"));
}

}  // namespace

TEST_CASE("graph request embeds the rationale, the schema keys, and the worked example") {
  auto req = scenegraph::build_graph_request(rationale(), library());
  CHECK(req.user_prompt.find("plastic strapping left on workplace floor") != std::string::npos);
  for (const char* key : {"\"nodes\"", "\"edges\"", "\"attributes\"", "\"is_hazard\""}) {
    CHECK(req.user_prompt.find(key) != std::string::npos);
  }
  // The worked example is the slip-hazard graph.
  for (const char* chunk : {"Spilled Water", "clear", "slippery", "Warning Sign", "not deployed",
                            "Stacked Boxes", "on wet floor", "Industrial Cart", "parked near spill",
                            "Factory Floor", "concrete", "wet surface"}) {
    CHECK(req.user_prompt.find(chunk) != std::string::npos);
  }
}

TEST_CASE("the example graph validates, with Spilled Water as the hazard node") {
  auto graph = example_graph();
  CHECK(graph.nodes.size() == 5);
  CHECK(graph.edges.size() == 4);
  CHECK(graph.hazard_node().label == "Spilled Water");
  CHECK_NOTHROW(scenegraph::validate_scene_graph(graph));
}

TEST_CASE("parse_scene_graph accepts a graph JSON wrapped in prose") {
  const std::string raw = "Here is the scene graph you asked for:\n" +
                          util::read_file(std::string(HG_PROMPT_DIR) + "/example_graph.json") +
                          "\nLet me know if you need anything else.";
  auto graph = scenegraph::parse_scene_graph(raw, rationale());
  CHECK(graph.nodes.size() == 5);
  CHECK(graph.source_rationale.record_id == 42);
  CHECK(graph.hazard_node().label == "Spilled Water");
}

TEST_CASE("rejections: empty graph, zero hazard nodes, multiple hazard nodes") {
  auto expect_code = [&](const char* raw, ErrorCode code) {
    try {
      scenegraph::parse_scene_graph(raw, rationale());
      FAIL("expected error for: ", raw);
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };

  expect_code("no json here at all", ErrorCode::unparseable_graph);
  expect_code(R"({"nodes": []})", ErrorCode::empty_graph);
  expect_code(R"({"nodes": [{"id":"a","label":"box","attributes":["x"],"is_hazard":false}]})",
              ErrorCode::no_hazard_node);
  expect_code(
      R"({"nodes": [
            {"id":"a","label":"box","attributes":[],"is_hazard":true},
            {"id":"b","label":"cart","attributes":[],"is_hazard":true}],
          "edges": [{"source":"a","target":"b","relation":"near"}]})",
      ErrorCode::multiple_hazard_nodes);
  expect_code(
      R"({"nodes": [
            {"id":"a","label":"box","attributes":["wet"],"is_hazard":true},
            {"id":"b","label":"cart","attributes":["metal"],"is_hazard":false}]})",
      ErrorCode::hazard_node_isolated);
}

TEST_CASE("repair: duplicate attributes dedupe, dangling and self-loop edges drop with warnings") {
  const std::string raw = R"({
    "nodes": [
      {"id":"a","label":"spill","attributes":["wet","wet","slippery"],"is_hazard":true},
      {"id":"b","label":"floor","attributes":["concrete"],"is_hazard":false},
      {"id":"c","label":"","attributes":[],"is_hazard":false},
      {"id":"d","label":"lone cone","attributes":[],"is_hazard":false}
    ],
    "edges": [
      {"source":"a","target":"b","relation":"on"},
      {"source":"a","target":"a","relation":"near"},
      {"source":"a","target":"zzz","relation":"near"},
      {"source":"b","target":"a","relation":""}
    ]
  })";
  // Node "c" has an empty label: unparseable regardless of repair.
  CHECK_THROWS_AS(scenegraph::parse_scene_graph(raw, rationale()), Error);

  const std::string fixable = R"({
    "nodes": [
      {"id":"a","label":"spill","attributes":["wet","wet","slippery"],"is_hazard":true},
      {"id":"b","label":"floor","attributes":["concrete"],"is_hazard":false},
      {"id":"d","label":"lone cone","attributes":[],"is_hazard":false}
    ],
    "edges": [
      {"source":"a","target":"b","relation":"on"},
      {"source":"a","target":"a","relation":"near"},
      {"source":"a","target":"zzz","relation":"near"},
      {"source":"b","target":"a","relation":""}
    ]
  })";
  auto graph = scenegraph::parse_scene_graph(fixable, rationale());
  REQUIRE(graph.nodes.size() == 2);  // "lone cone" dropped: isolated, no attributes
  CHECK(graph.nodes[0].attributes == std::vector<std::string>{"wet", "slippery"});
  CHECK(graph.edges.size() == 1);  // self-loop, dangling, empty-relation edges dropped
  CHECK(graph.repair_warnings.size() == 5);  // dedupe, self-loop, dangling, empty relation, lone prop
}

TEST_CASE("serialization round-trip is field-equal") {
  auto graph = example_graph();
  auto reparsed = scenegraph::graph_from_json(scenegraph::graph_to_json(graph));
  CHECK(reparsed == graph);
}

TEST_CASE("100 random graphs: round-trip field-equal, assertion count = attrs + edges") {
  std::uint64_t state = 20250810;
  for (int trial = 0; trial < 100; ++trial) {
    auto graph = testsupport::random_graph(state);
    CHECK_NOTHROW(scenegraph::validate_scene_graph(graph));

    auto reparsed = scenegraph::graph_from_json(scenegraph::graph_to_json(graph));
    CHECK(reparsed == graph);

    std::size_t attr_total = 0;
    for (const auto& node : graph.nodes) attr_total += node.attributes.size();
    auto assertions = scenegraph::graph_to_assertions(graph);
    CHECK(assertions.size() == attr_total + graph.edges.size());

    // Every assertion resolves to a live node or edge; pure and repeatable.
    for (const auto& assertion : assertions) {
      if (assertion.kind == scenegraph::Assertion::Kind::attribute) {
        const auto* node = graph.find_node(assertion.node_id);
        REQUIRE(node != nullptr);
        CHECK(assertion.attribute_index < static_cast<int>(node->attributes.size()));
      } else {
        CHECK(assertion.edge_index < static_cast<int>(graph.edges.size()));
      }
    }
    auto again = scenegraph::graph_to_assertions(graph);
    REQUIRE(again.size() == assertions.size());
    for (std::size_t i = 0; i < assertions.size(); ++i) {
      CHECK(again[i].text == assertions[i].text);
      CHECK(again[i].assertion_id == assertions[i].assertion_id);
    }
  }
}

TEST_CASE("assertion templating matches the documented phrasing") {
  scenegraph::SceneGraph graph;
  graph.graph_id = "g1";
  graph.nodes = {
      {"p", "platform", {"metal"}, false},
      {"h", "hard hat", {}, true},
  };
  graph.edges = {{"h", "p", "below"}};

  auto assertions = scenegraph::graph_to_assertions(graph);
  REQUIRE(assertions.size() == 2);
  CHECK(assertions[0].text == "The platform is metal.");
  CHECK(assertions[0].kind == scenegraph::Assertion::Kind::attribute);
  CHECK(assertions[1].text == "The hard hat is below the platform.");
  CHECK(assertions[1].kind == scenegraph::Assertion::Kind::relation);
}

TEST_CASE("relation smoothing: lexicon passthrough, copula stripping, article handling") {
  scenegraph::SceneGraph graph;
  graph.graph_id = "g2";
  graph.nodes = {
      {"a", "Ladder", {}, true},
      {"b", "The East Wall", {"brick"}, false},
      {"c", "cart", {"parked"}, false},
  };
  graph.edges = {
      {"a", "b", "leaning against"},
      {"c", "a", "is blocking"},
  };
  auto assertions = scenegraph::graph_to_assertions(graph);
  REQUIRE(assertions.size() == 4);
  // Labels lowercase inside sentences; existing articles are not doubled.
  CHECK(assertions[0].text == "The east wall is brick.");
  CHECK(assertions[1].text == "The cart is parked.");
  CHECK(assertions[2].text == "The ladder is leaning against the east wall.");
  CHECK(assertions[3].text == "The cart is blocking the ladder.");
}

TEST_CASE("fallback prompt mentions every node label and respects the word budget") {
  auto graph = example_graph();
  gateway::Gateway gw;
  const std::string prompt =
      scenegraph::graph_to_prompt(graph, gw, /*cfg=*/nullptr, library());
  for (const char* label :
       {"Spilled Water", "Factory Floor", "Warning Sign", "Stacked Boxes", "Industrial Cart"}) {
    CHECK(prompt.find(label) != std::string::npos);
  }
  CHECK(util::split_words(prompt).size() <= 120);

  // Attribute-less nodes are mentioned by label only.
  scenegraph::SceneGraph bare;
  bare.graph_id = "g3";
  bare.nodes = {{"a", "spill", {"wet"}, true}, {"b", "mop", {}, false}};
  bare.edges = {{"b", "a", "near"}};
  const std::string bare_prompt = scenegraph::graph_to_prompt(bare, gw, nullptr, library());
  CHECK(bare_prompt.find("mop") != std::string::npos);
  CHECK(bare_prompt.find("mop (") == std::string::npos);
}

TEST_CASE("llm-backed prompt goes through chat and is truncated to the budget") {
  auto graph = example_graph();
  gateway::Gateway gw;
  std::string long_reply = "scene";
  for (int i = 0; i < 300; ++i) long_reply += " word" + std::to_string(i);
  gw.mock().chat_queue.push_back(long_reply);

  gateway::BackendConfig cfg;
  cfg.kind = gateway::BackendKind::mock;
  const std::string prompt = scenegraph::graph_to_prompt(graph, gw, &cfg, library());
  CHECK(util::split_words(prompt).size() == 120);
  CHECK(prompt.rfind("scene", 0) == 0);
}
