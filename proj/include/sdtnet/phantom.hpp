#pragma once

#include <cstdint>
#include <vector>

#include "sdtnet/data.hpp"

namespace sdtnet {

// Synthetic contracting short-axis phantom: an LV disk shrinking linearly over
// the sequence, an (approximately) area-preserving myocardial ring, and an RV
// crescent abutting the ring. Fully labelled; ed_index = 0, es_index = last.
std::vector<CineSequence> generate_phantom(int64_t n_subjects, int64_t n_frames, int64_t height,
                                           int64_t width, uint64_t seed);

}  // namespace sdtnet
