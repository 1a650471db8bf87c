#pragma once

// Clip curation procedures over annotation records: main-subject selection,
// detection sanity checks, coverage-constrained cropping, mask augmentation,
// score filtering and resolution standardisation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hcustom/latent_codec.hpp"
#include "hcustom/synth_data.hpp"

namespace hcustom::pipeline {

using synth::AnnotationRecord;
using synth::BBox;

/// Clusters per-frame ids (joined by id_links) into tracks and returns the
/// ids of the track seen in the most frames; ties go to the track with the
/// lowest id. nullopt when every track has fewer than `min_frames` frames.
std::optional<std::vector<int>> select_main_subject(const AnnotationRecord& record, int min_frames = 50);

/// area(face ∩ body) / area(face) >= threshold. Degenerate boxes throw.
bool validate_face_in_body(const BBox& face, const BBox& body, double threshold = 0.5);

/// width >= ratio*W and height >= ratio*H.
bool validate_bbox_size(const BBox& box, int frame_width, int frame_height, double ratio = 0.3);

/// Width:height ratios.
enum class Aspect { square, three_four, nine_sixteen };
std::string to_string(Aspect a);
Aspect aspect_from_string(std::string_view s);
/// (a, b) with width:height = a:b.
std::pair<int, int> aspect_ratio(Aspect a);

BBox union_box(std::span<const BBox> boxes);

/// Largest a*n x b*n crop inside the frame, centred on the union box and
/// shifted minimally into the frame, that keeps >= coverage of the union
/// box's area. Throws ValidationError when no such crop exists.
BBox crop_with_coverage(std::span<const BBox> boxes, int frame_width, int frame_height, Aspect aspect,
                        double coverage = 0.7);

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

enum class MaskAugment { dilate, to_bbox };
/// dilate: square structuring element of half-size `radius`; to_bbox: fill the bounding rectangle.
Mask augment_mask(const Mask& mask, MaskAugment mode, int radius = 1);
/// Applies augment_mask frame by frame to a [frames][H][W] mask.
std::vector<std::uint8_t> augment_video_mask(std::span<const std::uint8_t> mask, int frames, int height, int width,
                                             MaskAugment mode, int radius);

struct FilterThresholds {
  double koala_min = 0.06;
  double sync_min = 3.0;
  double iqa_min = 40.0;
};
/// Missing scores do not reject.
bool passes_filters(const AnnotationRecord& record, const FilterThresholds& t = {});
std::vector<AnnotationRecord> filter_clips(std::span<const AnnotationRecord> records, const FilterThresholds& t = {});

/// Bilinear resize (pixel-centre aligned). Same size returns an exact copy.
codec::PixelVideo resize(const codec::PixelVideo& video, int height, int width);
/// Aspect-preserving resize so min(H, W) == short_side.
codec::PixelVideo resize_short_side(const codec::PixelVideo& video, int short_side);
/// Toy stand-ins for the 512 / 720 production short sides.
inline constexpr int kToyShortSides[2] = {64, 96};
/// Resize to `short_side`, then centre crop (or pad with 0.5 gray) to the aspect,
/// keeping the input's orientation.
codec::PixelVideo standardize_resolution(const codec::PixelVideo& video, int short_side, Aspect aspect);

}  // namespace hcustom::pipeline
