#include "core/prompts.hpp"

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::prompts {

PromptLibrary PromptLibrary::load(const std::filesystem::path& prompt_dir) {
  auto read = [&](const char* name) {
    auto path = prompt_dir / name;
    auto content = util::read_file_if_exists(path);
    if (!content) fail(ErrorCode::config_error, "missing prompt file: " + path.string());
    return *content;
  };
  PromptLibrary lib;
  lib.classification_system = read("classification_system.txt");
  lib.classification_user = read("classification_user.txt");
  lib.classification_examples = read("classification_examples.json");
  lib.scene_graph_system = read("scene_graph_system.txt");
  lib.scene_graph_user = read("scene_graph_user.txt");
  lib.example_graph = read("example_graph.json");
  lib.scene_prompt_system = read("scene_prompt_system.txt");
  lib.scene_prompt_user = read("scene_prompt_user.txt");
  return lib;
}

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out(tmpl);
  for (const auto& [key, value] : values) {
    const std::string needle = "{{" + key + "}}";
    std::size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
      out.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  if (auto open = out.find("{{"); open != std::string::npos && out.find("}}", open) != std::string::npos) {
    fail(ErrorCode::config_error,
         "template placeholder left unsubstituted near: " + out.substr(open, 32));
  }
  return out;
}

}  // namespace hazgraph::prompts
