#pragma once
// Induced system at the n = 5 parameter with itinerary 000..., built once per
// test binary.

#include "qp/parameter_search.hpp"
#include "qp/pressure_engine.hpp"

namespace fixture {

inline const qp::QuadMap& zero_map() {
    static const qp::QuadMap f = [] {
        auto r = qp::find_parameter(qp::KneadingTarget::make(5, "0"));
        return qp::QuadMap::make(r.midpoint(), 256);
    }();
    return f;
}

inline const qp::InducedSystem& zero_system() {
    static const qp::InducedSystem s = qp::build_induced_system(zero_map(), 5);
    return s;
}

}  // namespace fixture
