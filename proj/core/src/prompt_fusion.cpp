#include "hcustom/prompt_fusion.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "hcustom/errors.hpp"

namespace hcustom::prompt {

namespace {

// Fixed desk-scale vocabulary. Index == row of the embedding table.
constexpr std::array<std::string_view, 72> kVocabulary = {
    "a",        "an",     "the",     "and",    "is",      "are",     "of",       "in",
    "on",       "at",     "with",    "to",     "looks",   "like",    "playing",  "guitar",
    "man",      "woman",  "person",  "cat",    "dog",     "circle",  "square",   "triangle",
    "star",     "moves",  "move",    "drifts", "drift",   "across",  "over",     "through",
    "around",   "scene",  "background", "sprite", "red",  "orange",  "yellow",   "green",
    "cyan",     "blue",   "purple",  "pink",   "sits",    "bounces", "slowly",   "quickly",
    "left",     "right",  "up",      "down",   "while",   "sound",   "pulses",   "beat",
    "textured", "bright", "small",   "large",  "striped", "checkered", "solid",  "shape",
    ".",        ",",      "!",       "?",      "<",       ">",       "'",        "-"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool same_word(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

}  // namespace

std::string to_string(TemplateMode m) {
  return m == TemplateMode::image_embedded ? "embedded" : "appended";
}

TemplateMode template_mode_from_string(std::string_view s) {
  if (s == "embedded" || s == "image_embedded") return TemplateMode::image_embedded;
  if (s == "appended" || s == "image_appended") return TemplateMode::image_appended;
  throw ConfigError("template", "expected embedded|appended, got '" + std::string(s) + "'");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

std::string PromptTemplate::to_string() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    switch (t.kind) {
      case TokenKind::text: out += t.word; break;
      case TokenKind::sep: out += "<SEP>"; break;
      case TokenKind::image: out += "<image>"; break;
    }
  }
  return out;
}

PromptTemplate build_template(const PromptSpec& spec) {
  const auto words = split_words(spec.text);
  for (std::size_t i = 0; i < spec.subjects.size(); ++i) {
    const auto& d = spec.subjects[i].descriptor;
    if (split_words(d).size() != 1) {
      throw ValidationError("descriptor '" + d + "' must be a single word");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (same_word(spec.subjects[j].descriptor, d)) throw ValidationError("duplicate descriptor '" + d + "'");
    }
  }

  PromptTemplate out;
  if (spec.mode == TemplateMode::image_embedded) {
    std::vector<int> owner(words.size(), 0);
    for (std::size_t s = 0; s < spec.subjects.size(); ++s) {
      int hits = 0;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (same_word(words[w], spec.subjects[s].descriptor)) {
          ++hits;
          owner[w] = static_cast<int>(s) + 1;
        }
      }
      if (hits == 0) throw ValidationError("descriptor '" + spec.subjects[s].descriptor + "' does not occur in the prompt");
      if (hits > 1) throw ValidationError("descriptor '" + spec.subjects[s].descriptor + "' occurs more than once");
    }
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (owner[w] > 0) {
        out.tokens.push_back({TokenKind::image, {}, owner[w]});
      } else {
        out.tokens.push_back({TokenKind::text, words[w], 0});
      }
    }
    return out;
  }

  for (const auto& w : words) out.tokens.push_back({TokenKind::text, w, 0});
  for (std::size_t s = 0; s < spec.subjects.size(); ++s) {
    out.tokens.push_back({TokenKind::sep, {}, 0});
    out.tokens.push_back({TokenKind::text, "The", 0});
    out.tokens.push_back({TokenKind::text, spec.subjects[s].descriptor, 0});
    out.tokens.push_back({TokenKind::text, "looks", 0});
    out.tokens.push_back({TokenKind::text, "like", 0});
    out.tokens.push_back({TokenKind::image, {}, static_cast<int>(s) + 1});
  }
  return out;
}

std::size_t FusedPrompt::count(TokenKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(provenance.begin(), provenance.end(), [&](const Provenance& p) { return p.kind == kind; }));
}

FusedVar fuse(ad::Tape& tape, const PromptSpec& spec, const MultimodalEncoder& encoder, const FuseOptions& options) {
  PromptTemplate tmpl;
  if (options.images) {
    tmpl = build_template(spec);
  } else {
    for (const auto& w : split_words(spec.text)) tmpl.tokens.push_back({TokenKind::text, w, 0});
  }

  FusedVar out;
  std::vector<ad::Var> parts;
  std::vector<std::string> pending;
  const auto flush_text = [&] {
    if (pending.empty()) return;
    parts.push_back(encoder.encode_text(tape, pending));
    for (std::size_t i = 0; i < pending.size(); ++i) out.provenance.push_back({TokenKind::text, 0});
    pending.clear();
  };
  for (const auto& tok : tmpl.tokens) {
    switch (tok.kind) {
      case TokenKind::text:
        pending.push_back(tok.word);
        break;
      case TokenKind::sep:
        flush_text();
        parts.push_back(encoder.encode_separator(tape));
        out.provenance.push_back({TokenKind::sep, 0});
        break;
      case TokenKind::image: {
        flush_text();
        const auto& img = spec.subjects.at(static_cast<std::size_t>(tok.subject - 1)).image;
        ad::Var block = encoder.encode_image(tape, img);
        if (block.rows() != kImageTokens || block.cols() != encoder.width()) {
          throw DimensionError("encoder returned a malformed image block");
        }
        parts.push_back(block);
        for (int i = 0; i < kImageTokens; ++i) out.provenance.push_back({TokenKind::image, tok.subject});
        break;
      }
    }
  }
  flush_text();
  out.embeddings = parts.empty() ? tape.constant(Matrix(0, encoder.width())) : ad::concat_rows(parts);
  return out;
}

FusedPrompt fuse(const PromptSpec& spec, const MultimodalEncoder& encoder, const FuseOptions& options) {
  ad::Tape tape(false);
  FusedVar v = fuse(tape, spec, encoder, options);
  return FusedPrompt{v.embeddings.value(), std::move(v.provenance)};
}

Matrix pool_image(const codec::PixelVideo& image) {
  image.validate();
  if (image.frames != 1) throw DimensionError("pool_image: expected a single frame");
  Matrix out(kImageTokens, 3);
  const int H = image.height;
  const int W = image.width;
  for (int a = 0; a < kImageGrid; ++a) {
    const int y0 = (a * H) / kImageGrid;
    const int y1 = ((a + 1) * H + kImageGrid - 1) / kImageGrid;
    for (int b = 0; b < kImageGrid; ++b) {
      const int x0 = (b * W) / kImageGrid;
      const int x1 = ((b + 1) * W + kImageGrid - 1) / kImageGrid;
      double acc[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int c = 0; c < 3; ++c) acc[c] += image.at(0, y, x, c);
        }
      }
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < 3; ++c) out(a * kImageGrid + b, c) = acc[c] / n;
    }
  }
  return out;
}

ToyEncoder::ToyEncoder(int width, std::uint64_t seed)
    : owned_(std::make_unique<ParamStore>()), store_(owned_.get()), width_(width) {
  init(seed);
}

ToyEncoder::ToyEncoder(ParamStore& shared, int width, std::uint64_t seed) : store_(&shared), width_(width) {
  init(seed);
}

void ToyEncoder::init(std::uint64_t seed) {
  if (width_ < 1) throw ConfigError("encoder.width", "must be >= 1");
  Rng rng(derive_seed(seed, 0xE1C0));
  store_->add("encoder.text.table", rng.normal_matrix(vocabulary_size() + 1, width_, 1.0));
  store_->add("encoder.sep", rng.normal_matrix(1, width_, 1.0));
  store_->add("encoder.image.w", rng.normal_matrix(3, width_, 1.0));
  store_->add("encoder.image.b", rng.normal_matrix(1, width_, 0.1));
}

int ToyEncoder::vocabulary_size() { return static_cast<int>(kVocabulary.size()); }

int ToyEncoder::token_id(std::string_view word) const {
  const std::string w = lower(word);
  for (std::size_t i = 0; i < kVocabulary.size(); ++i) {
    if (kVocabulary[i] == w) return static_cast<int>(i);
  }
  return vocabulary_size();
}

ad::Var ToyEncoder::encode_text(ad::Tape& tape, std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(token_id(w));
  return ad::gather_rows(tape.parameter(store_->get("encoder.text.table")), ids);
}

ad::Var ToyEncoder::encode_separator(ad::Tape& tape) const { return tape.parameter(store_->get("encoder.sep")); }

ad::Var ToyEncoder::encode_image(ad::Tape& tape, const codec::PixelVideo& image) const {
  ad::Var pooled = tape.constant(pool_image(image));
  return ad::linear(pooled, tape.parameter(store_->get("encoder.image.w")), tape.parameter(store_->get("encoder.image.b")));
}

}  // namespace hcustom::prompt
