#include "lutdn/kernel_geometry.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "lutdn/errors.hpp"

namespace lutdn {

void KernelPattern::validate() const {
    if (taps.empty()) throw ConfigError("kernel " + name + ": no taps");
    if (depth < 1) throw ConfigError("kernel " + name + ": depth must be >= 1");
    if (std::find(taps.begin(), taps.end(), std::make_pair(0, 0)) == taps.end())
        throw ConfigError("kernel " + name + ": anchor (0,0) missing from taps");
    std::set<std::pair<int, int>> uniq(taps.begin(), taps.end());
    if (uniq.size() != taps.size())
        throw ConfigError("kernel " + name + ": duplicate taps");
    for (auto [dy, dx] : taps)
        if (dy < -2 || dy > 2 || dx < -2 || dx > 2)
            throw ConfigError("kernel " + name + ": taps outside the 5x5 analysis window");
}

KernelPattern lshape_pattern() { return {"lshape", {{0, 0}, {0, 1}, {1, 1}}, 1}; }
KernelPattern square2_pattern() { return {"square2", {{0, 0}, {0, 1}, {1, 0}, {1, 1}}, 1}; }
KernelPattern single_pattern() { return {"single", {{0, 0}}, 1}; }
KernelPattern pcm_pattern() { return {"pcm", {{0, 0}, {0, 1}}, 2}; }

std::pair<int, int> rotate_offset(std::pair<int, int> o, int quarter_turns) {
    quarter_turns = ((quarter_turns % 4) + 4) % 4;
    for (int i = 0; i < quarter_turns; ++i) o = {o.second, -o.first};
    return o;
}

KernelPattern rotate_pattern(const KernelPattern& p, int quarter_turns) {
    KernelPattern r = p;
    for (auto& t : r.taps) t = rotate_offset(t, quarter_turns);
    return r;
}

OrbitReport orbit_analysis(const KernelPattern& p) {
    p.validate();
    OrbitReport rep;
    int min_y = 0, max_y = 0, min_x = 0, max_x = 0;
    for (int r = 0; r < 4; ++r)
        for (auto t : p.taps) {
            const auto o = rotate_offset(t, r);
            ++rep.coverage[o];
            ++rep.total_lookups;
            min_y = std::min(min_y, o.first);
            max_y = std::max(max_y, o.first);
            min_x = std::min(min_x, o.second);
            max_x = std::max(max_x, o.second);
        }
    rep.rf_height = max_y - min_y + 1;
    rep.rf_width = max_x - min_x + 1;
    rep.non_overlapping = true;
    for (const auto& [pos, count] : rep.coverage)
        if (pos != std::make_pair(0, 0) && count > 1) rep.non_overlapping = false;
    return rep;
}

std::vector<KernelPattern> find_nonoverlapping(int n) {
    if (n < 1) throw ConfigError("find_nonoverlapping: n must be >= 1");
    std::vector<std::pair<int, int>> window;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            if (dy != 0 || dx != 0) window.emplace_back(dy, dx);

    std::vector<KernelPattern> found;
    // choose n-1 of the 8 neighbors; 3x3 window keeps this tiny
    std::vector<int> pick(n - 1);
    auto emit = [&](const std::vector<int>& idx) {
        KernelPattern p;
        p.taps = {{0, 0}};
        for (int i : idx) p.taps.push_back(window[static_cast<size_t>(i)]);
        p.depth = 1;
        std::ostringstream name;
        name << "auto" << found.size();
        p.name = name.str();
        if (orbit_analysis(p).non_overlapping) found.push_back(std::move(p));
    };
    if (n == 1) {
        emit({});
        return found;
    }
    // lexicographic index combinations
    for (int i = 0; i < n - 1; ++i) pick[static_cast<size_t>(i)] = i;
    const int m = static_cast<int>(window.size());
    if (n - 1 > m) return found;
    while (true) {
        emit(pick);
        int i = n - 2;
        while (i >= 0 && pick[static_cast<size_t>(i)] == m - (n - 1) + i) --i;
        if (i < 0) break;
        ++pick[static_cast<size_t>(i)];
        for (int j = i + 1; j < n - 1; ++j)
            pick[static_cast<size_t>(j)] = pick[static_cast<size_t>(j - 1)] + 1;
    }
    return found;
}

std::string render_orbit(const KernelPattern& p, const OrbitReport& r, bool csv) {
    std::ostringstream out;
    int min_y = 0, max_y = 0, min_x = 0, max_x = 0;
    for (const auto& [pos, _] : r.coverage) {
        min_y = std::min(min_y, pos.first);
        max_y = std::max(max_y, pos.first);
        min_x = std::min(min_x, pos.second);
        max_x = std::max(max_x, pos.second);
    }
    if (csv) {
        out << "dy,dx,count\n";
        for (const auto& [pos, count] : r.coverage)
            out << pos.first << "," << pos.second << "," << count << "\n";
        return out.str();
    }
    out << "kernel " << p.name << " (" << p.taps.size() << " taps, depth " << p.depth
        << ", index dims " << p.index_dims() << ")\n";
    out << "lookup frequency over the 4-rotation ensemble:\n";
    for (int y = min_y; y <= max_y; ++y) {
        for (int x = min_x; x <= max_x; ++x) {
            const auto it = r.coverage.find({y, x});
            out << " " << (it == r.coverage.end() ? 0 : it->second);
        }
        out << "\n";
    }
    out << "rf " << r.rf_height << "x" << r.rf_width << ", total lookups "
        << r.total_lookups << ", non-overlapping " << (r.non_overlapping ? "yes" : "no")
        << "\n";
    return out.str();
}

}  // namespace lutdn
