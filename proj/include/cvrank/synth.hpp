#pragma once

#include <cstdint>
#include <vector>

#include "cvrank/geostore.hpp"

namespace cvrank::geostore {

// Desk-scale stand-in for datasets with visually confusable neighbours.
// Locations come in confusion groups: image embeddings scatter around a
// shared group centroid, text embeddings around a per-location centroid.
// Noise magnitudes are expressed as expected vector norms.
struct SynthConfig {
  std::size_t n_locations = 1000;
  std::size_t group_size = 4;
  std::uint32_t image_dim = 64;
  std::uint32_t text_dim = 64;
  double group_spread = 1.0;     // norm of each group's image centroid
  double location_spread = 0.0;  // per-location image offset from the group centroid
  double sigma_img = 0.3;        // noise on every image view
  double text_margin = 1.0;      // norm of each location's text centroid
  double sigma_txt = 0.3;        // noise on every text view
  // Extra references near each location with their own text. Written to the
  // store and listed per query as semi_positives.
  std::size_t semi_positives_per_location = 0;
};

struct SynthDataset {
  Store store;
  std::vector<Embedding> location_text_centroids;
  std::vector<std::size_t> group_of_location;
};

SynthDataset generate_synthetic(const SynthConfig& config, std::uint64_t seed);

}  // namespace cvrank::geostore
