#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace zrigf {

// {"image": "<path-or-id>", "caption": "<text>"}
struct PairRecord {
  std::string image;
  std::string caption;
};

// {"context": [...], "response": "...", "image_ids": [...]?, "retrieval_mode": "..."?}
// Unknown fields survive a read/write round trip verbatim.
struct DialogueExample {
  std::vector<std::string> context;
  std::string response;
  std::vector<std::string> image_ids;
  std::string retrieval_mode;
  std::size_t line = 0;                       // 1-based source line
  std::map<std::string, std::string> extra;   // key -> JSON text
};

std::vector<PairRecord> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& pairs);
std::vector<DialogueExample> read_dialogues(const std::filesystem::path& path);
void write_dialogues(const std::filesystem::path& path, const std::vector<DialogueExample>& dialogues);
std::string dialogue_to_json(const DialogueExample& d);

// String value of an extra field, or "" when absent or not a string.
std::string extra_string(const DialogueExample& d, const std::string& key);

}  // namespace zrigf
