#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace hazgraph::prompts {

// Prompt templates live as data files so wording changes are diffable and
// never require a rebuild. {{name}} placeholders are substituted at render
// time; the live input of each template sits between <<< and >>> fences.
struct PromptLibrary {
  std::string classification_system;
  std::string classification_user;      // {{examples}}, {{narrative}}
  std::string classification_examples;  // raw JSON array [{narrative, category, rationale?}]
  std::string scene_graph_system;
  std::string scene_graph_user;         // {{example_graph}}, {{rationale}}
  std::string example_graph;            // worked example graph JSON
  std::string scene_prompt_system;
  std::string scene_prompt_user;        // {{graph_json}}

  static PromptLibrary load(const std::filesystem::path& prompt_dir);
};

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values);

}  // namespace hazgraph::prompts
