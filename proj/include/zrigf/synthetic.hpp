#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zrigf/corpus.hpp"
#include "zrigf/image.hpp"
#include "zrigf/rng.hpp"

namespace zrigf {

// Colored shapes on a noisy gray background. Concept i pairs color i % 4
// with shape i / 4 and places the shape in quadrant (color + shape) % 4, so
// both the pixels and the location follow from the concept name.
//
// Each concept also has two object words. Captions use either the appearance
// ("a red square") or an object ("my brick"). Training dialogues may mention
// the first object word; held-out contexts mention the second one, which no
// dialogue pairs with the appearance, so they can only be answered through the
// retrieved image. Held-out contexts also carry the color, which is the part
// of the answer recoverable without an image.
struct SyntheticSpec {
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  std::vector<std::string> shapes = {"square", "circle", "triangle", "cross"};
  std::vector<std::string> train_objects = {"brick", "book", "tile", "sponge", "apple", "pea",  "ball", "lemon",
                                            "flag",  "tree", "sail", "pear",   "rose",  "frog", "kite", "star"};
  std::vector<std::string> objects = {"box",  "cup",  "mat",  "towel", "cherry", "olive", "globe", "coin",
                                      "lamp", "fern", "wave", "corn",  "ruby",   "leaf",  "drop",  "sun"};
  std::size_t n_concepts = 16;
  std::size_t image_size = 16;
  std::size_t train_images_per_concept = 32;
  std::size_t test_images_per_concept = 4;
  std::size_t train_dialogues = 512;
  std::size_t test_dialogues = 64;
  double informative_fraction = 0.5;  // training contexts with a cue: the color, or color and training object
  double object_caption_fraction = 0.5;  // captions naming an object instead of the appearance
  double chatter_probability = 0.5;      // per side, of a content-free phrase around a caption
  double noise = 0.06;                // per-channel uniform noise, fraction of full scale

  void validate() const;
};

struct Concept {
  std::size_t index = 0;
  std::string color;
  std::string shape;
  std::string train_object;
  std::string object;  // held-out
  std::size_t quadrant = 0;
  std::string name() const { return color + " " + shape; }
};

struct SyntheticImage {
  std::string id;
  std::size_t concept_index = 0;
  RgbImage image;
};

struct SyntheticCorpus {
  std::vector<Concept> concepts;
  std::vector<SyntheticImage> train_images;
  std::vector<SyntheticImage> test_images;
  std::vector<PairRecord> train_pairs;
  std::vector<PairRecord> test_pairs;
  std::vector<DialogueExample> train_dialogues;  // "concept" and "informative" extra fields
  std::vector<DialogueExample> test_dialogues;

  // Every text the corpus can produce, for building a vocabulary.
  std::vector<std::string> texts() const;
};

std::vector<Concept> make_concepts(const SyntheticSpec& spec);
RgbImage render_concept(const SyntheticSpec& spec, const Concept& c, Rng& rng);
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, Rng rng);

// images/<id>.ppm, pairs_{train,test}.jsonl, dialogues_{train,test}.jsonl, vocab.txt
void write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace zrigf
