#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "anonymixer/error.hpp"

namespace anonymixer {

inline constexpr int kNoiseLabel = -1;

/// Per-row cluster labels. Labels lie in [0, n_clusters) or are kNoiseLabel
/// when noise is allowed, and every cluster id occurs at least once.
struct ClusterAssignment {
    std::vector<int> labels;
    int n_clusters = 0;
    bool noise_allowed = false;

    std::size_t size() const noexcept { return labels.size(); }

    std::size_t noise_count() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoiseLabel));
    }

    std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(n_clusters), 0);
        for (int l : labels)
            if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
        return sizes;
    }

    void validate() const {
        require(n_clusters >= 0, ErrorKind::contract, "negative cluster count");
        std::vector<bool> seen(static_cast<std::size_t>(n_clusters), false);
        for (int l : labels) {
            if (l == kNoiseLabel) {
                require(noise_allowed, ErrorKind::contract, "noise label present but noise not allowed");
                continue;
            }
            require(l >= 0 && l < n_clusters, ErrorKind::contract,
                    "label " + std::to_string(l) + " outside [0, " + std::to_string(n_clusters) + ")");
            seen[static_cast<std::size_t>(l)] = true;
        }
        for (std::size_t c = 0; c < seen.size(); ++c)
            require(seen[c], ErrorKind::contract, "cluster " + std::to_string(c) + " has no members");
    }

    bool operator==(const ClusterAssignment&) const = default;
};

/// Renumbers non-noise labels 0..k-1 in order of first appearance.
inline ClusterAssignment compact_labels(const std::vector<int>& raw, bool noise_allowed) {
    std::map<int, int> remap;
    ClusterAssignment out;
    out.noise_allowed = noise_allowed;
    out.labels.reserve(raw.size());
    for (int l : raw) {
        if (l == kNoiseLabel) {
            out.labels.push_back(kNoiseLabel);
            continue;
        }
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
        out.labels.push_back(it->second);
    }
    out.n_clusters = static_cast<int>(remap.size());
    return out;
}

}  // namespace anonymixer
