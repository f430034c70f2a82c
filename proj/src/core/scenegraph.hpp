#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/classify.hpp"
#include "core/gateway.hpp"
#include "core/prompts.hpp"

namespace hazgraph::scenegraph {

struct SceneNode {
  std::string node_id;
  std::string label;
  std::vector<std::string> attributes;  // deduplicated, non-empty entries
  bool is_hazard = false;

  bool operator==(const SceneNode&) const = default;
};

struct SceneEdge {
  std::string source;
  std::string target;
  std::string relation;

  bool operator==(const SceneEdge&) const = default;
};

struct SceneGraph {
  std::string graph_id;
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;
  classify::HazardRationale source_rationale;
  std::optional<int> cluster_id;
  std::vector<std::string> repair_warnings;  // transient, not serialized

  bool operator==(const SceneGraph& other) const {
    return graph_id == other.graph_id && nodes == other.nodes && edges == other.edges &&
           source_rationale == other.source_rationale && cluster_id == other.cluster_id;
  }

  const SceneNode* find_node(const std::string& node_id) const;
  const SceneNode& hazard_node() const;  // throws NoHazardNode
  bool edge_touches_hazard(const SceneEdge& edge) const;
};

struct Assertion {
  enum class Kind { attribute, relation };

  std::string assertion_id;
  std::string text;  // yes/no verifiable statement
  Kind kind = Kind::attribute;
  std::string node_id;       // attribute assertions
  int attribute_index = -1;  // attribute assertions
  int edge_index = -1;       // relation assertions
};

// Throws on invariant violations: EmptyGraph, NoHazardNode,
// MultipleHazardNodes, HazardNodeIsolated, UnparseableGraph (duplicate ids).
void validate_scene_graph(const SceneGraph& graph);

// Prompt asking the model to elaborate the rationale into a scene graph;
// embeds the worked example graph and the JSON schema.
gateway::ChatRequest build_graph_request(const classify::HazardRationale& rationale,
                                         const prompts::PromptLibrary& lib);

// Extracts the graph JSON from a model reply, repairs what is trivially
// fixable (duplicate attributes, dangling or self-loop edges, attribute-less
// isolated props), and validates the result.
SceneGraph parse_scene_graph(const std::string& raw, const classify::HazardRationale& source);

std::string graph_to_json(const SceneGraph& graph, int indent = -1);
SceneGraph graph_from_json(const std::string& json_text);

// Scene description for the text-to-image model. With a configured chat
// backend the narrative comes from the model (truncated to the word budget);
// with cfg == nullptr a deterministic template enumerates nodes, attributes
// and relations in fixed order.
std::string graph_to_prompt(const SceneGraph& graph, gateway::Gateway& gw,
                            const gateway::BackendConfig* cfg, const prompts::PromptLibrary& lib,
                            std::size_t max_words = 120);

// One attribute assertion per (node, attribute), one relation assertion per
// edge; deterministic order (nodes then edges, input order).
std::vector<Assertion> graph_to_assertions(const SceneGraph& graph);

}  // namespace hazgraph::scenegraph
