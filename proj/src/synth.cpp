#include "cvrank/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "cvrank/error.hpp"

namespace cvrank::geostore {

namespace {

constexpr double kKmPerDegree = 6371.0 * std::numbers::pi / 180.0;
// Group grid pitch in degrees. At |lat| <= 58 one step of longitude is > 6.5 km.
constexpr double kGridStep = 0.12;
constexpr std::size_t kGridCols = 2500;
constexpr std::size_t kGridRows = 400;
constexpr double kGroupRadiusKm = 0.2;
constexpr double kSemiPositiveOffsetKm = 0.05;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  // Isotropic Gaussian vector with expected norm ~= `scale`.
  Embedding gaussian(std::size_t dim, double scale) {
    Embedding v(dim);
    const double sd = scale / std::sqrt(static_cast<double>(dim));
    for (auto& x : v) x = static_cast<float>(normal_(rng_) * sd);
    return v;
  }

  Embedding around(const Embedding& centre, double scale) {
    auto v = gaussian(centre.size(), scale);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += centre[i];
    return v;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::string padded(char prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(width - std::min<int>(width, digits.size()), '0') + digits;
}

GeoCoord offset_km(GeoCoord base, double north_km, double east_km) {
  base.lat += north_km / kKmPerDegree;
  base.lon += east_km / (kKmPerDegree * std::cos(base.lat * std::numbers::pi / 180.0));
  return base;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& c, std::uint64_t seed) {
  if (c.image_dim == 0 || c.text_dim == 0) throw ValidationError("synthetic dimensions must be positive");
  if (c.n_locations == 0) throw ValidationError("synthetic n_locations must be positive");
  if (c.group_size < 2) throw ValidationError("confusion group size must be at least 2");
  if (c.group_size > c.n_locations) throw ValidationError("confusion group size exceeds n_locations");
  for (double s : {c.group_spread, c.location_spread, c.sigma_img, c.text_margin, c.sigma_txt}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("synthetic spreads must be finite and non-negative");
  }
  const std::size_t n_groups = (c.n_locations + c.group_size - 1) / c.group_size;
  if (n_groups > kGridCols * kGridRows) throw ValidationError("too many confusion groups for the coordinate grid");

  const int width = std::max<int>(5, static_cast<int>(std::to_string(c.n_locations).size()));
  Sampler rng(seed);

  std::vector<Embedding> group_centroids;
  group_centroids.reserve(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) group_centroids.push_back(rng.gaussian(c.image_dim, c.group_spread));

  SynthDataset out;
  std::vector<ReferenceRecord> refs;
  std::vector<QueryRecord> queries;
  for (std::size_t loc = 0; loc < c.n_locations; ++loc) {
    const std::size_t g = loc / c.group_size;
    const std::size_t slot = loc % c.group_size;
    out.group_of_location.push_back(g);

    const auto image_centre = rng.around(group_centroids[g], c.location_spread);
    const auto text_centre = rng.gaussian(c.text_dim, c.text_margin);

    const GeoCoord group_origin{10.0 + kGridStep * static_cast<double>(g / kGridCols),
                                -150.0 + kGridStep * static_cast<double>(g % kGridCols)};
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(slot) / static_cast<double>(c.group_size);
    const GeoCoord where =
        offset_km(group_origin, kGroupRadiusKm * std::cos(angle), kGroupRadiusKm * std::sin(angle));

    ReferenceRecord ref;
    ref.id = padded('r', loc, width);
    ref.image_emb = rng.around(image_centre, c.sigma_img);
    ref.text_emb = rng.around(text_centre, c.sigma_txt);
    ref.coord = where;

    QueryRecord q;
    q.id = padded('q', loc, width);
    q.image_emb = rng.around(image_centre, c.sigma_img);
    q.text_emb = rng.around(text_centre, c.sigma_txt);
    q.coord = where;
    q.ground_truth = {ref.id};

    for (std::size_t s = 0; s < c.semi_positives_per_location; ++s) {
      ReferenceRecord semi;
      semi.id = ref.id + "_s" + std::to_string(s);
      semi.image_emb = rng.around(image_centre, c.sigma_img);
      semi.text_emb = rng.gaussian(c.text_dim, c.text_margin);
      const double a = angle + 2.0 * std::numbers::pi * static_cast<double>(s + 1) /
                                   static_cast<double>(c.semi_positives_per_location + 1);
      semi.coord = offset_km(where, kSemiPositiveOffsetKm * std::cos(a), kSemiPositiveOffsetKm * std::sin(a));
      q.semi_positives.push_back(semi.id);
      refs.push_back(std::move(semi));
    }

    refs.push_back(std::move(ref));
    queries.push_back(std::move(q));
    out.location_text_centroids.push_back(text_centre);
  }
  out.store = Store(c.image_dim, c.text_dim, std::move(refs), std::move(queries));
  return out;
}

}  // namespace cvrank::geostore
