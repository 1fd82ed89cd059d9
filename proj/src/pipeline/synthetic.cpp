#include "zrigf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "zrigf/error.hpp"
#include "zrigf/tokenizer.hpp"

namespace zrigf {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb color_value(const std::string& name) {
  if (name == "red") return {220, 40, 40};
  if (name == "green") return {40, 200, 60};
  if (name == "blue") return {50, 70, 230};
  if (name == "yellow") return {230, 210, 40};
  if (name == "purple") return {150, 50, 190};
  if (name == "orange") return {240, 140, 30};
  if (name == "white") return {235, 235, 235};
  if (name == "cyan") return {40, 210, 210};
  throw ConfigError("no rendering for color " + name);
}

// Whether pixel (x, y) of an s x s box belongs to the shape.
bool inside(const std::string& shape, double x, double y, double s) {
  const double c = (s - 1.0) / 2.0;
  if (shape == "square") return true;
  if (shape == "circle") return (x - c) * (x - c) + (y - c) * (y - c) <= (s / 2.0) * (s / 2.0) - 0.25;
  if (shape == "triangle") return std::abs(x - c) <= (y + 0.5) / 2.0;
  if (shape == "cross") return std::abs(x - c) <= 0.5 || std::abs(y - c) <= 0.5;
  if (shape == "ring") {
    const double d2 = (x - c) * (x - c) + (y - c) * (y - c);
    return d2 <= (s / 2.0) * (s / 2.0) && d2 >= (s / 2.0 - 1.5) * (s / 2.0 - 1.5);
  }
  throw ConfigError("no rendering for shape " + shape);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Placeholders: {name} = "red square", {color}, {object}. All templates draw
// on one small pool of filler words so that text features stay dominated by
// the concept words.
const std::vector<std::string> kAppearanceCaptions = {"a {name}", "this is a {name}", "i see a {name}"};
const std::vector<std::string> kObjectCaptions = {"my {object}", "this is my {object}", "i see my {object}"};
// Content-free chatter appended to some captions.
const std::vector<std::string> kChatter = {"what is it", "what do you see", "look at this", "i see something"};
const std::vector<std::string> kGenericOpeners = {"look at this", "i see something", "look at my thing"};
const std::vector<std::string> kColorOpeners = {"look at this {color} thing", "i see something {color}"};
const std::vector<std::string> kObjectOpeners = {"look at my {color} {object}", "this is my {color} {object}"};
const std::vector<std::string> kResponses = {"it is a {name}", "i see a {name}", "this is a {name}"};

std::string fill(const std::string& pattern, const Concept& c, const std::string& object) {
  std::string out = pattern;
  const std::pair<std::string, std::string> slots[] = {{"{name}", c.name()}, {"{color}", c.color}, {"{object}", object}};
  for (const auto& [key, value] : slots) {
    for (auto at = out.find(key); at != std::string::npos; at = out.find(key, at + value.size())) {
      out.replace(at, key.size(), value);
    }
  }
  return out;
}

const std::string& pick(const std::vector<std::string>& options, Rng& rng) {
  return options[rng.uniform_index(options.size())];
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

enum class Cue { kNone, kColor, kTrainObject, kHeldOutObject };

DialogueExample make_dialogue(const Concept& c, Cue cue, Rng& rng) {
  DialogueExample d;
  switch (cue) {
    case Cue::kNone: d.context.push_back(pick(kGenericOpeners, rng)); break;
    case Cue::kColor: d.context.push_back(fill(pick(kColorOpeners, rng), c, c.object)); break;
    case Cue::kTrainObject: d.context.push_back(fill(pick(kObjectOpeners, rng), c, c.train_object)); break;
    case Cue::kHeldOutObject: d.context.push_back(fill(pick(kObjectOpeners, rng), c, c.object)); break;
  }
  d.response = fill(pick(kResponses, rng), c, c.object);
  d.extra["concept"] = quoted(c.name());
  d.extra["informative"] = cue == Cue::kNone ? "false" : "true";
  return d;
}

std::string image_id(char prefix, std::size_t concept_index, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%02zu_%03zu", prefix, concept_index, n);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_concepts < 1 || n_concepts > colors.size() * shapes.size()) {
    throw ConfigError("n_concepts must be between 1 and colors x shapes");
  }
  if (objects.size() < n_concepts || train_objects.size() < n_concepts) {
    throw ConfigError("need one object word of each kind per concept");
  }
  if (image_size < 4 || image_size % 2 != 0) throw ConfigError("image_size must be even and at least 4");
  if (!(informative_fraction >= 0.0 && informative_fraction <= 1.0)) {
    throw ConfigError("informative_fraction must be in [0, 1]");
  }
  for (double p : {object_caption_fraction, chatter_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("caption probabilities must be in [0, 1]");
  }
  if (!(noise >= 0.0 && noise < 0.5)) throw ConfigError("noise must be in [0, 0.5)");
}

std::vector<Concept> make_concepts(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Concept> out;
  for (std::size_t i = 0; i < spec.n_concepts; ++i) {
    Concept c;
    c.index = i;
    const std::size_t ci = i % spec.colors.size();
    const std::size_t si = i / spec.colors.size();
    c.color = spec.colors[ci];
    c.shape = spec.shapes[si];
    c.train_object = spec.train_objects[i];
    c.object = spec.objects[i];
    c.quadrant = (ci + si) % 4;
    out.push_back(c);
  }
  return out;
}

RgbImage render_concept(const SyntheticSpec& spec, const Concept& c, Rng& rng) {
  const std::size_t n = spec.image_size;
  RgbImage img{n, n, std::vector<std::uint8_t>(n * n * 3)};
  const double background = 60.0 + 30.0 * rng.uniform();
  const Rgb fg = color_value(c.color);
  const std::size_t cell = n / 2;
  const std::size_t size = std::max<std::size_t>(2, cell * 3 / 4);
  const std::size_t x0 = (c.quadrant % 2) * cell + rng.uniform_index(cell - size + 1);
  const std::size_t y0 = (c.quadrant / 2) * cell + rng.uniform_index(cell - size + 1);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const bool on = x >= x0 && x < x0 + size && y >= y0 && y < y0 + size &&
                      inside(c.shape, static_cast<double>(x - x0), static_cast<double>(y - y0),
                             static_cast<double>(size));
      const double base[3] = {on ? fg.r : background, on ? fg.g : background, on ? fg.b : background};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double jitter = (2.0 * rng.uniform() - 1.0) * spec.noise * 255.0;
        img.pixels[(y * n + x) * 3 + ch] = to_byte(base[ch] + jitter);
      }
    }
  }
  return img;
}

std::vector<std::string> SyntheticCorpus::texts() const {
  std::vector<std::string> out;
  for (const auto& c : concepts) {
    for (const auto* set : {&kAppearanceCaptions, &kObjectCaptions, &kColorOpeners, &kObjectOpeners, &kResponses}) {
      for (const auto& t : *set) {
        out.push_back(fill(t, c, c.train_object));
        out.push_back(fill(t, c, c.object));
      }
    }
  }
  for (const auto& t : kGenericOpeners) out.push_back(t);
  for (const auto& t : kChatter) out.push_back(t);
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, Rng rng) {
  SyntheticCorpus corpus;
  corpus.concepts = make_concepts(spec);
  Rng image_rng = rng.split(1);
  Rng text_rng = rng.split(2);
  Rng dialogue_rng = rng.split(3);

  auto render_set = [&](char prefix, std::size_t per_concept, std::vector<SyntheticImage>& images,
                        std::vector<PairRecord>& pairs) {
    for (std::size_t n = 0; n < per_concept; ++n) {
      for (const auto& c : corpus.concepts) {
        SyntheticImage img{image_id(prefix, c.index, n), c.index, render_concept(spec, c, image_rng)};
        const auto& templates = text_rng.uniform() < spec.object_caption_fraction ? kObjectCaptions : kAppearanceCaptions;
        const std::string& object = text_rng.uniform() < 0.5 ? c.train_object : c.object;
        std::string caption = fill(pick(templates, text_rng), c, object);
        // Chatter on either side spreads caption lengths over those of dialogue queries.
        if (text_rng.uniform() < spec.chatter_probability) caption = pick(kChatter, text_rng) + " " + caption;
        if (text_rng.uniform() < spec.chatter_probability) caption += " " + pick(kChatter, text_rng);
        pairs.push_back({img.id, caption});
        images.push_back(std::move(img));
      }
    }
  };
  render_set('c', spec.train_images_per_concept, corpus.train_images, corpus.train_pairs);
  render_set('t', spec.test_images_per_concept, corpus.test_images, corpus.test_pairs);

  for (std::size_t i = 0; i < spec.train_dialogues; ++i) {
    const auto& c = corpus.concepts[dialogue_rng.uniform_index(corpus.concepts.size())];
    Cue cue = Cue::kNone;
    if (dialogue_rng.uniform() < spec.informative_fraction) {
      cue = dialogue_rng.uniform() < 0.5 ? Cue::kColor : Cue::kTrainObject;
    }
    corpus.train_dialogues.push_back(make_dialogue(c, cue, dialogue_rng));
  }
  // Held-out contexts cycle through the concepts so each is equally represented.
  for (std::size_t i = 0; i < spec.test_dialogues; ++i) {
    corpus.test_dialogues.push_back(
        make_dialogue(corpus.concepts[i % corpus.concepts.size()], Cue::kHeldOutObject, dialogue_rng));
  }
  return corpus;
}

void write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir / "images");
  for (const auto* set : {&corpus.train_images, &corpus.test_images}) {
    for (const auto& img : *set) write_ppm(dir / "images" / (img.id + ".ppm"), img.image);
  }
  write_pairs(dir / "pairs_train.jsonl", corpus.train_pairs);
  write_pairs(dir / "pairs_test.jsonl", corpus.test_pairs);
  write_dialogues(dir / "dialogues_train.jsonl", corpus.train_dialogues);
  write_dialogues(dir / "dialogues_test.jsonl", corpus.test_dialogues);
  const Vocabulary vocab = Vocabulary::build(corpus.texts());
  std::ofstream out(dir / "vocab.txt", std::ios::binary);
  if (!out) throw IngestionError("cannot write " + (dir / "vocab.txt").string());
  for (const auto& w : vocab.words()) out << w << "\n";
}

}  // namespace zrigf
