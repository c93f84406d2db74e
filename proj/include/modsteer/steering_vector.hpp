#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modsteer/vec.hpp"

namespace modsteer {

enum class Modality { Vision, Text };

std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view s);

// Frozen steering artifact. The vector actually injected is sign * weight * direction,
// sign = +1 toward Text and -1 toward Vision; SteeringConfig::lambda scales it further.
struct SteeringVector {
    std::string model_id;
    uint32_t layer = 0;
    std::vector<float> direction;
    float weight = 0.0f;
    Modality target = Modality::Text;
    uint64_t n_pairs = 0;
    std::string created_at;

    size_t dim() const { return direction.size(); }
    double sign() const { return target == Modality::Text ? 1.0 : -1.0; }

    // sign * weight * direction, in double precision.
    Vector injected() const;

    bool operator==(const SteeringVector &) const = default;
};

struct SteeringConfig {
    double lambda = 1.0;
    std::optional<uint32_t> layer_override;
    // Also inject while the prompt is processed, not only on generated positions.
    bool inject_prefill = true;
};

} // namespace modsteer
