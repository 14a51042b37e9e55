#include "doctest.h"

#include "qp/errors.hpp"
#include "qp/logval.hpp"
#include "qp/parallel.hpp"
#include "qp/real.hpp"

#include <thread>

using namespace qp;

TEST_CASE("precision scope is restored") {
    auto before = Real::working_bits();
    {
        PrecisionScope ps(300);
        CHECK(Real::working_bits() == 300);
        CHECK(Real(1L).bits() == 300);
    }
    CHECK(Real::working_bits() == before);
}

TEST_CASE("precision is per thread") {
    PrecisionScope ps(400);
    mpfr_prec_t other = 0;
    std::thread th([&] { other = Real::working_bits(); });
    th.join();
    CHECK(other != 400);
}

TEST_CASE("decimal parsing is exact") {
    CHECK(parse_decimal_exact("-1.75") == mpq_class(-7, 4));
    CHECK(parse_decimal_exact("2.5e-3") == mpq_class(1, 400));
    PrecisionScope ps(200);
    CHECK(to_mpq(Real(0.5)) == mpq_class(1, 2));
    CHECK(Real::from_string("0.1") != Real(0.1));
}

TEST_CASE("log values") {
    PrecisionScope ps(256);
    auto a = ExtendedLogValue::from_real(Real(3L)), b = ExtendedLogValue::from_real(Real(5L));
    CHECK(abs((a + b).to_real() - Real(8L)) < Real(1e-60));
    CHECK(abs((a * b).to_real() - Real(15L)) < Real(1e-60));
    CHECK(abs(diff(b, a).to_real() - Real(2L)) < Real(1e-60));
    CHECK_THROWS(diff(a, b));
    CHECK(ExtendedLogValue::zero() < a);
    CHECK((a + ExtendedLogValue::zero()).log2() == a.log2());
    CHECK((a * ExtendedLogValue::zero()).is_zero());
    // values far below double range
    auto tiny = ExtendedLogValue::from_log2(Real(-1e6));
    CHECK((tiny + tiny).log2() == Real(-1e6 + 1));
    CHECK(ExtendedLogValue::infinity().is_inf());
    CHECK(abs(log2_add(Real(10L), Real(10L)) - Real(11L)) < Real(1e-60));
}

TEST_CASE("parallel_for writes every slot once") {
    std::vector<int> v(1000, 0);
    parallel_for(v.size(), 4, [&](std::size_t i) { v[i] += int(i); });
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == int(i));
}
