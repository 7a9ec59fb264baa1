#pragma once

#include <cstdint>
#include <vector>

namespace neifi {

/// Binary communication matrix over non-experts. Row i lists who agent v_i
/// listens to this step. Rows produced by neighbor filtering must stay inside
/// the bounded-confidence neighborhood; `long_range_allowed` is set only by
/// the invasive comparator baseline, which adds channels on purpose.
struct CommTopology {
    int size = 0;
    std::vector<std::uint8_t> cells; // row-major size x size
    bool long_range_allowed = false;

    explicit CommTopology(int m = 0) : size(m), cells(static_cast<std::size_t>(m) * m, 0) {}

    bool get(int i, int j) const { return cells[static_cast<std::size_t>(i) * size + j] != 0; }
    void set(int i, int j, bool v) {
        cells[static_cast<std::size_t>(i) * size + j] = v ? 1 : 0;
    }

    std::vector<int> row(int i) const {
        std::vector<int> out;
        for (int j = 0; j < size; ++j)
            if (get(i, j)) out.push_back(j);
        return out;
    }
};

} // namespace neifi
