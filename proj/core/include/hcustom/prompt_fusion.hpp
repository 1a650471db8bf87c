#pragma once

// Image-text prompt construction: the two prompt templates, the <SEP>
// separator, and expansion of each <image> marker into a 24x24 grid of image
// feature tokens produced by a pluggable multimodal encoder.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hcustom/autodiff.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"

namespace hcustom::prompt {

inline constexpr int kImageGrid = 24;
inline constexpr int kImageTokens = kImageGrid * kImageGrid;  // 576

enum class TemplateMode { image_embedded, image_appended };

std::string to_string(TemplateMode m);
TemplateMode template_mode_from_string(std::string_view s);

struct Subject {
  std::string descriptor;     // T_I, e.g. "man"
  codec::PixelVideo image;    // single frame
};

struct PromptSpec {
  std::string text;
  std::vector<Subject> subjects;
  TemplateMode mode = TemplateMode::image_appended;
};

enum class TokenKind { text, sep, image };

/// One template position. `subject` is 1-based for image markers.
struct TemplateToken {
  TokenKind kind = TokenKind::text;
  std::string word;
  int subject = 0;
};

struct PromptTemplate {
  std::vector<TemplateToken> tokens;
  /// Words joined by single spaces, markers rendered as <SEP> and <image>.
  std::string to_string() const;
};

/// Whitespace + punctuation word splitting. Case is preserved; punctuation
/// characters become their own tokens, so "<SEP>" in user text can never
/// produce a separator.
std::vector<std::string> split_words(std::string_view text);

/// Embedded: each descriptor replaced in place by <image>. Appended: original
/// text, then per subject "<SEP> The {T_I} looks like <image>".
/// Throws ValidationError on missing or duplicate descriptors.
PromptTemplate build_template(const PromptSpec& spec);

struct Provenance {
  TokenKind kind = TokenKind::text;
  int subject = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

class MultimodalEncoder {
 public:
  virtual ~MultimodalEncoder() = default;
  virtual int width() const = 0;
  /// One row per word.
  virtual ad::Var encode_text(ad::Tape& tape, std::span<const std::string> words) const = 0;
  virtual ad::Var encode_separator(ad::Tape& tape) const = 0;
  /// kImageTokens rows, one per pooled image cell.
  virtual ad::Var encode_image(ad::Tape& tape, const codec::PixelVideo& image) const = 0;
};

struct FusedPrompt {
  Matrix embeddings;  // tokens x width
  std::vector<Provenance> provenance;

  std::size_t count(TokenKind kind) const;
};

/// Differentiable variant used inside training graphs.
struct FusedVar {
  ad::Var embeddings;
  std::vector<Provenance> provenance;
};

struct FuseOptions {
  /// false drops the image-text interaction entirely: only the original text is encoded.
  bool images = true;
};

FusedVar fuse(ad::Tape& tape, const PromptSpec& spec, const MultimodalEncoder& encoder,
              const FuseOptions& options = {});
FusedPrompt fuse(const PromptSpec& spec, const MultimodalEncoder& encoder, const FuseOptions& options = {});

/// Adaptive average pooling of a single frame onto a 24x24 grid: kImageTokens x 3.
Matrix pool_image(const codec::PixelVideo& image);

/// Deterministic stand-in encoder: a token-embedding table over a small fixed
/// vocabulary (plus an OOV bucket and a dedicated <SEP> vector) and a learned
/// linear map from pooled RGB cells to `width`.
class ToyEncoder final : public MultimodalEncoder {
 public:
  /// Owns its parameters.
  ToyEncoder(int width, std::uint64_t seed);
  /// Registers "encoder.*" parameters in a shared store.
  ToyEncoder(ParamStore& shared, int width, std::uint64_t seed);

  int width() const override { return width_; }
  ad::Var encode_text(ad::Tape& tape, std::span<const std::string> words) const override;
  ad::Var encode_separator(ad::Tape& tape) const override;
  ad::Var encode_image(ad::Tape& tape, const codec::PixelVideo& image) const override;

  /// Vocabulary index for a word (lower-cased); OOV maps to vocabulary_size().
  int token_id(std::string_view word) const;
  static int vocabulary_size();

  ParamStore& params() { return *store_; }

 private:
  void init(std::uint64_t seed);

  std::unique_ptr<ParamStore> owned_;
  ParamStore* store_;
  int width_;
};

}  // namespace hcustom::prompt
