#include "core/scenegraph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_set>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::scenegraph {

using json = nlohmann::json;

const SceneNode* SceneGraph::find_node(const std::string& node_id) const {
  for (const auto& node : nodes) {
    if (node.node_id == node_id) return &node;
  }
  return nullptr;
}

const SceneNode& SceneGraph::hazard_node() const {
  for (const auto& node : nodes) {
    if (node.is_hazard) return node;
  }
  fail(ErrorCode::no_hazard_node, "graph has no hazard node");
}

bool SceneGraph::edge_touches_hazard(const SceneEdge& edge) const {
  const std::string& hazard_id = hazard_node().node_id;
  return edge.source == hazard_id || edge.target == hazard_id;
}

void validate_scene_graph(const SceneGraph& graph) {
  if (graph.nodes.empty()) fail(ErrorCode::empty_graph, "graph has no nodes");

  std::unordered_set<std::string> ids;
  int hazard_count = 0;
  for (const auto& node : graph.nodes) {
    if (node.node_id.empty() || util::trim(node.label).empty()) {
      fail(ErrorCode::unparseable_graph, "node with empty id or label");
    }
    if (!ids.insert(node.node_id).second) {
      fail(ErrorCode::unparseable_graph, "duplicate node id: " + node.node_id);
    }
    std::set<std::string> seen_attrs;
    for (const auto& attr : node.attributes) {
      if (util::trim(attr).empty()) fail(ErrorCode::unparseable_graph, "empty attribute");
      if (!seen_attrs.insert(attr).second) {
        fail(ErrorCode::unparseable_graph, "duplicate attribute on node " + node.node_id);
      }
    }
    if (node.is_hazard) ++hazard_count;
  }
  if (hazard_count == 0) fail(ErrorCode::no_hazard_node, "graph has no hazard node");
  if (hazard_count > 1) {
    fail(ErrorCode::multiple_hazard_nodes,
         "graph marks " + std::to_string(hazard_count) + " hazard nodes");
  }

  const std::string hazard_id = graph.hazard_node().node_id;
  bool hazard_has_edge = false;
  for (const auto& edge : graph.edges) {
    if (edge.source == edge.target) fail(ErrorCode::unparseable_graph, "self-loop edge");
    if (!ids.count(edge.source) || !ids.count(edge.target)) {
      fail(ErrorCode::unparseable_graph, "dangling edge " + edge.source + " -> " + edge.target);
    }
    if (util::trim(edge.relation).empty()) fail(ErrorCode::unparseable_graph, "empty relation");
    if (edge.source == hazard_id || edge.target == hazard_id) hazard_has_edge = true;
  }
  if (!hazard_has_edge) {
    fail(ErrorCode::hazard_node_isolated, "no edge is incident to the hazard node");
  }

  // Isolated contextual props must carry at least one attribute.
  for (const auto& node : graph.nodes) {
    bool touched = false;
    for (const auto& edge : graph.edges) {
      if (edge.source == node.node_id || edge.target == node.node_id) {
        touched = true;
        break;
      }
    }
    if (!touched && node.attributes.empty()) {
      fail(ErrorCode::unparseable_graph, "isolated node without attributes: " + node.node_id);
    }
  }
}

gateway::ChatRequest build_graph_request(const classify::HazardRationale& rationale,
                                         const prompts::PromptLibrary& lib) {
  if (util::trim(rationale.text).empty()) {
    fail(ErrorCode::invalid_argument, "empty hazard rationale");
  }
  gateway::ChatRequest req;
  req.system_prompt = lib.scene_graph_system;
  req.user_prompt = prompts::render_template(
      lib.scene_graph_user,
      {{"example_graph", lib.example_graph}, {"rationale", rationale.text}});
  req.temperature = 0.0;
  req.response_format_hint = gateway::ChatRequest::Format::json_object;
  return req;
}

namespace {

SceneGraph graph_from_parsed_json(const json& parsed, classify::HazardRationale source,
                                  std::string graph_id, std::optional<int> cluster_id) {
  SceneGraph graph;
  graph.graph_id = std::move(graph_id);
  graph.source_rationale = std::move(source);
  graph.cluster_id = cluster_id;

  if (!parsed.is_object() || !parsed.contains("nodes") || !parsed["nodes"].is_array()) {
    fail(ErrorCode::unparseable_graph, "graph JSON lacks a nodes array");
  }
  if (parsed["nodes"].empty()) fail(ErrorCode::empty_graph, "graph has zero nodes");

  int auto_id = 0;
  for (const auto& node_json : parsed["nodes"]) {
    if (!node_json.is_object() || !node_json.contains("label") ||
        !node_json["label"].is_string()) {
      fail(ErrorCode::unparseable_graph, "node without a label");
    }
    SceneNode node;
    node.label = util::trim(node_json["label"].get<std::string>());
    if (node.label.empty()) fail(ErrorCode::unparseable_graph, "node with an empty label");
    node.node_id = node_json.contains("id") && node_json["id"].is_string()
                       ? node_json["id"].get<std::string>()
                       : "n" + std::to_string(auto_id);
    ++auto_id;
    node.is_hazard = node_json.value("is_hazard", false);
    if (node_json.contains("attributes") && node_json["attributes"].is_array()) {
      std::set<std::string> seen;
      for (const auto& attr_json : node_json["attributes"]) {
        if (!attr_json.is_string()) continue;
        const std::string attr = util::trim(attr_json.get<std::string>());
        if (attr.empty()) continue;
        if (seen.insert(attr).second) {
          node.attributes.push_back(attr);
        } else {
          graph.repair_warnings.push_back("dropped duplicate attribute '" + attr + "' on " +
                                          node.node_id);
        }
      }
    }
    graph.nodes.push_back(std::move(node));
  }

  std::unordered_set<std::string> ids;
  for (const auto& node : graph.nodes) ids.insert(node.node_id);

  if (parsed.contains("edges") && parsed["edges"].is_array()) {
    for (const auto& edge_json : parsed["edges"]) {
      if (!edge_json.is_object()) continue;
      SceneEdge edge;
      edge.source = edge_json.value("source", "");
      edge.target = edge_json.value("target", "");
      edge.relation = util::trim(edge_json.value("relation", ""));
      if (edge.source == edge.target) {
        graph.repair_warnings.push_back("dropped self-loop edge on " + edge.source);
        continue;
      }
      if (!ids.count(edge.source) || !ids.count(edge.target)) {
        graph.repair_warnings.push_back("dropped dangling edge " + edge.source + " -> " +
                                        edge.target);
        continue;
      }
      if (edge.relation.empty()) {
        graph.repair_warnings.push_back("dropped edge with empty relation " + edge.source +
                                        " -> " + edge.target);
        continue;
      }
      graph.edges.push_back(std::move(edge));
    }
  }

  // Attribute-less isolated props carry no testable content; keep the graph
  // rather than fabricating attributes.
  std::vector<SceneNode> kept;
  for (auto& node : graph.nodes) {
    bool touched = false;
    for (const auto& edge : graph.edges) {
      if (edge.source == node.node_id || edge.target == node.node_id) {
        touched = true;
        break;
      }
    }
    if (!touched && node.attributes.empty() && !node.is_hazard) {
      graph.repair_warnings.push_back("dropped isolated attribute-less node " + node.node_id);
      continue;
    }
    kept.push_back(std::move(node));
  }
  graph.nodes = std::move(kept);

  validate_scene_graph(graph);
  return graph;
}

}  // namespace

SceneGraph parse_scene_graph(const std::string& raw, const classify::HazardRationale& source) {
  auto block = util::extract_first_json_object(raw);
  if (!block) fail(ErrorCode::unparseable_graph, "no JSON object in model reply");
  json parsed = json::parse(*block, nullptr, false);
  if (parsed.is_discarded()) fail(ErrorCode::unparseable_graph, "graph JSON does not parse");

  const std::string graph_id =
      "g-" + util::sha256_hex(std::to_string(source.record_id) + "\x1f" + source.text).substr(0, 12);
  return graph_from_parsed_json(parsed, source, graph_id, std::nullopt);
}

std::string graph_to_json(const SceneGraph& graph, int indent) {
  json out;
  out["graph_id"] = graph.graph_id;
  out["source_rationale"] = {{"record_id", graph.source_rationale.record_id},
                             {"text", graph.source_rationale.text}};
  out["cluster_id"] = graph.cluster_id ? json(*graph.cluster_id) : json(nullptr);
  out["nodes"] = json::array();
  for (const auto& node : graph.nodes) {
    out["nodes"].push_back({{"id", node.node_id},
                            {"label", node.label},
                            {"attributes", node.attributes},
                            {"is_hazard", node.is_hazard}});
  }
  out["edges"] = json::array();
  for (const auto& edge : graph.edges) {
    out["edges"].push_back(
        {{"source", edge.source}, {"target", edge.target}, {"relation", edge.relation}});
  }
  return indent >= 0 ? out.dump(indent) + "\n" : out.dump();
}

SceneGraph graph_from_json(const std::string& json_text) {
  json parsed = json::parse(json_text, nullptr, false);
  if (parsed.is_discarded()) fail(ErrorCode::unparseable_graph, "graph JSON does not parse");
  classify::HazardRationale source;
  if (parsed.contains("source_rationale") && parsed["source_rationale"].is_object()) {
    source.record_id = parsed["source_rationale"].value("record_id", std::int64_t{0});
    source.text = parsed["source_rationale"].value("text", "");
  }
  std::optional<int> cluster_id;
  if (parsed.contains("cluster_id") && parsed["cluster_id"].is_number_integer()) {
    cluster_id = parsed["cluster_id"].get<int>();
  }
  return graph_from_parsed_json(parsed, std::move(source), parsed.value("graph_id", "g-unknown"),
                                cluster_id);
}

namespace {

std::string lowercase_label(const std::string& label) {
  return util::to_lower(util::trim(label));
}

// Relations that read correctly inside "The X is <relation> the Y."
const std::set<std::string>& relation_lexicon() {
  static const std::set<std::string> lexicon = {
      "on",          "under",        "near",      "above",      "below",
      "beside",      "behind",       "inside",    "across",     "against",
      "next to",     "in front of",  "on top of", "leaning against",
      "blocking",    "covering",     "touching",  "surrounding",
      "parked near", "placed on",    "attached to", "hanging from",
      "resting on",  "stacked on",   "lying on",  "wrapped around",
  };
  return lexicon;
}

std::string smooth_relation(const std::string& relation) {
  std::string rel = util::to_lower(util::trim(relation));
  if (relation_lexicon().count(rel)) return rel;
  // Strip a leading copula so the template's "is" is not doubled; otherwise
  // the raw relation text is used verbatim.
  if (rel.rfind("is ", 0) == 0) rel = rel.substr(3);
  else if (rel.rfind("are ", 0) == 0) rel = rel.substr(4);
  return rel;
}

std::string with_article(const std::string& label) {
  const auto words = util::split_words(label);
  if (!words.empty()) {
    const std::string first = util::to_lower(words.front());
    if (first == "the" || first == "a" || first == "an") return lowercase_label(label);
  }
  return "the " + lowercase_label(label);
}

// "the <label>" with the first letter capitalized, article never doubled.
std::string subject_phrase(const std::string& label) {
  std::string phrase = with_article(label);
  phrase[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(phrase[0])));
  return phrase;
}

}  // namespace

std::string graph_to_prompt(const SceneGraph& graph, gateway::Gateway& gw,
                            const gateway::BackendConfig* cfg, const prompts::PromptLibrary& lib,
                            std::size_t max_words) {
  validate_scene_graph(graph);

  std::string text;
  if (cfg != nullptr) {
    gateway::ChatRequest req;
    req.system_prompt = lib.scene_prompt_system;
    req.user_prompt =
        prompts::render_template(lib.scene_prompt_user, {{"graph_json", graph_to_json(graph)}});
    req.temperature = 0.7;
    text = gw.chat_complete(req, *cfg);
  } else {
    // Deterministic fallback: enumerate nodes, attributes, relations in order.
    const SceneNode& hazard = graph.hazard_node();
    text = "A workplace scene containing " + hazard.label;
    if (!hazard.attributes.empty()) {
      text += " (";
      for (std::size_t i = 0; i < hazard.attributes.size(); ++i) {
        if (i) text += ", ";
        text += hazard.attributes[i];
      }
      text += ")";
    }
    text += ", the primary hazard.";
    for (const auto& node : graph.nodes) {
      if (node.is_hazard) continue;
      text += " Also present: " + node.label;
      if (!node.attributes.empty()) {
        text += " (";
        for (std::size_t i = 0; i < node.attributes.size(); ++i) {
          if (i) text += ", ";
          text += node.attributes[i];
        }
        text += ")";
      }
      text += ".";
    }
    for (const auto& edge : graph.edges) {
      const SceneNode* src = graph.find_node(edge.source);
      const SceneNode* tgt = graph.find_node(edge.target);
      text += " The " + src->label + " is " + smooth_relation(edge.relation) + " " +
              with_article(tgt->label) + ".";
    }
  }
  return util::truncate_words(text, max_words);
}

std::vector<Assertion> graph_to_assertions(const SceneGraph& graph) {
  validate_scene_graph(graph);
  std::vector<Assertion> assertions;
  for (const auto& node : graph.nodes) {
    for (std::size_t a = 0; a < node.attributes.size(); ++a) {
      Assertion assertion;
      assertion.kind = Assertion::Kind::attribute;
      assertion.node_id = node.node_id;
      assertion.attribute_index = static_cast<int>(a);
      assertion.assertion_id = "n:" + node.node_id + ":" + std::to_string(a);
      assertion.text = subject_phrase(node.label) + " is " + node.attributes[a] + ".";
      assertions.push_back(std::move(assertion));
    }
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    const SceneNode* src = graph.find_node(edge.source);
    const SceneNode* tgt = graph.find_node(edge.target);
    Assertion assertion;
    assertion.kind = Assertion::Kind::relation;
    assertion.edge_index = static_cast<int>(e);
    assertion.assertion_id = "e:" + std::to_string(e);
    assertion.text = subject_phrase(src->label) + " is " + smooth_relation(edge.relation) + " " +
                     with_article(tgt->label) + ".";
    assertions.push_back(std::move(assertion));
  }
  return assertions;
}

}  // namespace hazgraph::scenegraph
