#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lutdn {

// Spatial footprint of one LUT-convertible block. depth = channels per tap,
// so |taps| * depth is the index dimensionality of the baked table.
struct KernelPattern {
    std::string name;
    std::vector<std::pair<int, int>> taps;  // (dy, dx), anchor (0,0) included
    int depth = 1;

    void validate() const;
    int index_dims() const { return static_cast<int>(taps.size()) * depth; }
    bool bakeable() const { return index_dims() <= 4; }
};

KernelPattern lshape_pattern();
KernelPattern square2_pattern();
KernelPattern single_pattern();
KernelPattern pcm_pattern();  // 1x2 spatial, depth 2

// Clockwise quarter-turn rotation about the anchor: (dy,dx) -> (dx,-dy).
std::pair<int, int> rotate_offset(std::pair<int, int> o, int quarter_turns);
KernelPattern rotate_pattern(const KernelPattern& p, int quarter_turns);

// How often each position is looked up across the 4-rotation ensemble.
struct OrbitReport {
    std::map<std::pair<int, int>, int> coverage;
    int rf_height = 0;  // bounding box of the ensembled receptive field
    int rf_width = 0;
    bool non_overlapping = false;  // every non-anchor position hit at most once
    int total_lookups = 0;         // always 4 * |taps|
};

OrbitReport orbit_analysis(const KernelPattern& p);

// Exhaustive search over anchor-rooted tap sets inside the 3x3 window whose
// rotation orbits are non-overlapping. n counts taps including the anchor.
std::vector<KernelPattern> find_nonoverlapping(int n);

// Text rendering of an orbit report (frequency grid plus summary lines).
std::string render_orbit(const KernelPattern& p, const OrbitReport& r, bool csv);

}  // namespace lutdn
