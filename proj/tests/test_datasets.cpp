#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sysid/datasets.hpp"
#include "sysid/error.hpp"
#include "sysid/io.hpp"

using namespace sysid;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "sysid_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("order-reduction system has the printed entries")
{
    const LinearSystem s = order_reduction_system();
    CHECK(s.A(0, 0) == 0.96);
    CHECK(s.A(1, 0) == -0.26);
    CHECK(s.A(2, 4) == 0.07);
    CHECK(s.A(5, 5) == 0.52);
    CHECK(s.A(4, 5) == 0.38);
    CHECK(s.B(3, 0) == 0.32);
    CHECK(s.B(5, 1) == 0.38);
    CHECK(s.B(0, 0) == 0.0);
    CHECK(s.C(0, 0) == 1.0);
    CHECK(s.C(1, 2) == 1.0);
    CHECK(s.C.sum() == 2.0);
    CHECK(spectral_radius(s.A) < 1.0);
}

TEST_CASE("zero excitation and zero noise give zero outputs")
{
    LinearSystem s = order_reduction_system();
    s.B.setZero();
    const Dataset d = simulate_linear(s, 1, 100, 0.0);
    CHECK(d.experiments[0].Y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generator shapes")
{
    const GeneratedData o = gen_order_reduction(1);
    CHECK(o.data.experiments[0].U.rows() == 2000);
    CHECK(o.data.n_u() == 2);
    CHECK(o.data.n_y() == 2);

    const GeneratedData s = gen_input_selection(1);
    CHECK(s.data.experiments[0].U.rows() == 10000);
    CHECK(s.data.n_u() == 10);
    CHECK(s.data.n_y() == 1);
    CHECK(s.system.B.rightCols(5).norm() / s.system.B.leftCols(5).norm() < 1e-2);

    const GeneratedData c = gen_causal(1);
    const Experiment& e = c.data.experiments[0];
    CHECK(e.U.rows() == 1000);
    CHECK(e.U.cols() == 10);
    CHECK(e.Y.cols() == 10);
    CHECK(e.U == e.Y);
    // first five channels are the outputs: y_0 = C x0 + noise with x0 = 0, so tiny
    CHECK(e.Y.row(0).head(5).cwiseAbs().maxCoeff() < 0.5);
    CHECK(c.system.D.isZero());
}

TEST_CASE("causal outputs follow the system driven by the stacked inputs")
{
    const GeneratedData c = gen_causal(5, 200, 0.0);
    const Experiment& e = c.data.experiments[0];
    Vec x = Vec::Zero(10);
    for (int k = 0; k < 200; ++k) {
        const Vec u = e.U.row(k).tail(5).transpose();
        CHECK((c.system.C * x - e.Y.row(k).head(5).transpose()).norm() < 1e-9);
        x = c.system.A * x + c.system.B * u;
    }
}

TEST_CASE("random systems are stable for many seeds")
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        CHECK(spectral_radius(gen_input_selection(seed, 10).system.A) < 1.0);
        CHECK(spectral_radius(random_stable_system(seed, 10, 5, 5).A) < 1.0);
    }
}

TEST_CASE("generators are deterministic")
{
    std::ostringstream a, b;
    write_csv(a, gen_order_reduction(3).data);
    write_csv(b, gen_order_reduction(3).data);
    CHECK(a.str() == b.str());
    std::ostringstream c;
    write_csv(c, gen_order_reduction(4).data);
    CHECK(a.str() != c.str());
}

TEST_CASE("minimal CSV")
{
    std::istringstream in("u1,y1\n1,2\n");
    const Dataset d = read_csv(in, 1, 1);
    REQUIRE(d.experiments.size() == 1);
    CHECK(d.experiments[0].U(0, 0) == 1.0);
    CHECK(d.experiments[0].Y(0, 0) == 2.0);
}

TEST_CASE("CSV round trip is exact")
{
    const Dataset d = gen_order_reduction(1).data;
    const auto path = scratch("roundtrip.csv");
    export_csv(d, path);
    const Dataset back = load_csv(path, 2, 2);
    CHECK(back.experiments[0].U == d.experiments[0].U);
    CHECK(back.experiments[0].Y == d.experiments[0].Y);
    const Dataset inferred = load_csv(path);
    CHECK(inferred.n_u() == 2);
    CHECK(inferred.experiments[0].Y == d.experiments[0].Y);
}

TEST_CASE("experiment boundaries split the rows")
{
    std::ostringstream text;
    text << "u1,y1\n";
    for (int k = 0; k < 250; ++k) text << k << ',' << -k << '\n';
    std::istringstream in(text.str());
    const Dataset d = read_csv(in, 1, 1, {0, 100, 250});
    REQUIRE(d.experiments.size() == 2);
    CHECK(d.experiments[0].length() == 100);
    CHECK(d.experiments[1].length() == 150);
    CHECK(d.experiments[1].U(0, 0) == 100.0);

    std::istringstream again(text.str());
    CHECK_THROWS_AS(read_csv(again, 1, 1, {0, 100, 200}), ConfigError);
}

TEST_CASE("malformed CSV reports the line")
{
    std::istringstream bad("u1,y1\n1,2\n3,abc\n");
    try {
        (void)read_csv(bad, 1, 1);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream short_row("u1,y1\n1,2\n3\n");
    try {
        (void)read_csv(short_row, 1, 1);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream no_header("1,2\n3,4\n");
    CHECK_THROWS_AS(read_csv(no_header, 1, 1), IoError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_csv(empty, 1, 1), IoError);
}

TEST_CASE("sidecar keeps boundaries and the descriptor")
{
    Dataset d = gen_order_reduction(2, 60).data;
    Experiment second = d.experiments[0];
    second.U = second.U.topRows(25).eval();
    second.Y = second.Y.topRows(25).eval();
    d.experiments.push_back(second);
    const auto path = scratch("multi.csv");
    export_dataset(d, path);
    CHECK(std::filesystem::exists(sidecar_path(path)));
    const Dataset back = import_dataset(path);
    REQUIRE(back.experiments.size() == 2);
    CHECK(back.experiments[1].length() == 25);
    CHECK(back.experiments[1].Y == d.experiments[1].Y);
    CHECK(back.descriptor.find("order_reduction") != std::string::npos);
}

TEST_CASE("number formatting round-trips")
{
    for (double v : {0.1, -1e-300, 1.0 / 3.0, 123456789.123456789, 5e-324}) {
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK_THROWS_AS(parse_double("1.5x"), IoError);
    CHECK(parse_double(" +2.5 ") == 2.5);
}
