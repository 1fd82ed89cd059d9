#include "zrigf/corpus.hpp"

#include <fstream>

#include "json.hpp"
#include "zrigf/error.hpp"

namespace zrigf {

namespace {

using nlohmann::json;

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestionError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    if (!j.is_object()) throw IngestionError(path.string() + ":" + std::to_string(number) + ": expected an object");
    try {
      f(j, number);
    } catch (const json::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<PairRecord> read_pairs(const std::filesystem::path& path) {
  std::vector<PairRecord> out;
  for_each_line(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("image").get<std::string>(), j.at("caption").get<std::string>()});
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) out << json{{"image", p.image}, {"caption", p.caption}}.dump() << "\n";
}

std::vector<DialogueExample> read_dialogues(const std::filesystem::path& path) {
  std::vector<DialogueExample> out;
  for_each_line(path, [&](const json& j, std::size_t line) {
    DialogueExample d;
    d.line = line;
    d.context = j.at("context").get<std::vector<std::string>>();
    d.response = j.at("response").get<std::string>();
    if (j.contains("image_ids")) d.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    if (j.contains("retrieval_mode")) d.retrieval_mode = j.at("retrieval_mode").get<std::string>();
    for (const auto& [key, value] : j.items()) {
      if (key != "context" && key != "response" && key != "image_ids" && key != "retrieval_mode") {
        d.extra[key] = value.dump();
      }
    }
    out.push_back(std::move(d));
  });
  return out;
}

std::string dialogue_to_json(const DialogueExample& d) {
  json j = {{"context", d.context}, {"response", d.response}};
  if (!d.image_ids.empty()) j["image_ids"] = d.image_ids;
  if (!d.retrieval_mode.empty()) j["retrieval_mode"] = d.retrieval_mode;
  for (const auto& [key, text] : d.extra) j[key] = json::parse(text);
  return j.dump();
}

void write_dialogues(const std::filesystem::path& path, const std::vector<DialogueExample>& dialogues) {
  auto out = open_out(path);
  for (const auto& d : dialogues) out << dialogue_to_json(d) << "\n";
}

std::string extra_string(const DialogueExample& d, const std::string& key) {
  const auto it = d.extra.find(key);
  if (it == d.extra.end()) return "";
  const json j = json::parse(it->second);
  return j.is_string() ? j.get<std::string>() : "";
}

}  // namespace zrigf
