#include "sysid/datasets.hpp"

#include <fstream>
#include <istream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sysid/error.hpp"
#include "sysid/io.hpp"

namespace sysid {

namespace {

using json = nlohmann::ordered_json;

Mat gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double std = 1.0)
{
    std::normal_distribution<double> nd(0.0, std);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
    return m;
}

json matrix_json(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

std::string describe(const char* kind, std::uint64_t seed, int N, double noise_std, const LinearSystem& sys)
{
    json d;
    d["generator"] = kind;
    d["seed"] = seed;
    d["N"] = N;
    d["noise_std"] = noise_std;
    d["excitation"] = "iid standard Gaussian";
    d["x0"] = "zero";
    d["A"] = matrix_json(sys.A);
    d["B"] = matrix_json(sys.B);
    d["C"] = matrix_json(sys.C);
    d["D"] = matrix_json(sys.D);
    return d.dump();
}

void require_stable(const Mat& A)
{
    const double rho = spectral_radius(A);
    if (!(rho < 1.0)) throw NumericalError(0, "generated system is not stable (spectral radius " +
                                                  std::to_string(rho) + ")");
}

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<Eigen::Index> check_boundaries(std::vector<Eigen::Index> b, Eigen::Index rows)
{
    if (b.empty()) return {0, rows};
    if (b.size() < 2) throw ConfigError("boundary list needs a start and an end row");
    if (b.front() != 0) throw ConfigError("boundary list must start at row 0");
    for (std::size_t i = 1; i < b.size(); ++i) {
        if (b[i] <= b[i - 1]) throw ConfigError("boundary list must be strictly increasing");
    }
    if (b.back() != rows) {
        throw ConfigError("boundary list ends at row " + std::to_string(b.back()) + " but the file has " +
                          std::to_string(rows) + " rows");
    }
    return b;
}

} // namespace

double spectral_radius(const Mat& A)
{
    if (A.size() == 0) return 0.0;
    return A.eigenvalues().cwiseAbs().maxCoeff();
}

LinearSystem order_reduction_system()
{
    LinearSystem s;
    s.A.resize(6, 6);
    s.A << 0.96, 0.26, 0.04, 0, 0, 0,
           -0.26, 0.70, 0.26, 0, 0, 0,
           0, 0, 0.93, 0.32, 0.07, 0,
           0, 0, -0.32, 0.61, 0.32, 0,
           0, 0, 0, 0, 0.90, 0.38,
           0, 0, 0, 0, -0.38, 0.52;
    s.B.resize(6, 2);
    s.B << 0, 0,
           0, 0,
           0.07, 0,
           0.32, 0,
           0, 0.10,
           0, 0.38;
    s.C = Mat::Zero(2, 6);
    s.C(0, 0) = 1.0;
    s.C(1, 2) = 1.0;
    s.D = Mat::Zero(2, 2);
    return s;
}

Dataset simulate_linear(const LinearSystem& sys, std::uint64_t seed, int N, double noise_std, const Vec& x0_in)
{
    if (N < 1) throw ConfigError("N must be positive");
    if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
    const Eigen::Index nx = sys.A.rows(), nu = sys.B.cols(), ny = sys.C.rows();
    std::mt19937_64 rng(seed);
    Experiment e;
    e.U = gaussian(rng, N, nu);
    e.Y.resize(N, ny);
    std::normal_distribution<double> noise(0.0, 1.0);
    Vec x = x0_in.size() ? x0_in : Vec::Zero(nx);
    for (int k = 0; k < N; ++k) {
        const Vec u = e.U.row(k).transpose();
        Vec xi(nx), eta(ny);
        for (Eigen::Index i = 0; i < nx; ++i) xi[i] = noise_std * noise(rng);
        for (Eigen::Index i = 0; i < ny; ++i) eta[i] = noise_std * noise(rng);
        e.Y.row(k) = (sys.C * x + sys.D * u + eta).transpose();
        x = sys.A * x + sys.B * u + xi;
    }
    Dataset d;
    d.experiments.push_back(std::move(e));
    return d;
}

LinearSystem random_stable_system(std::uint64_t seed, int n_x, int n_u, int n_y, double radius)
{
    std::mt19937_64 rng(seed);
    LinearSystem s;
    s.A = gaussian(rng, n_x, n_x);
    s.A *= radius / spectral_radius(s.A);
    s.B = gaussian(rng, n_x, n_u);
    s.C = gaussian(rng, n_y, n_x);
    s.D = Mat::Zero(n_y, n_u);
    require_stable(s.A);
    return s;
}

GeneratedData gen_order_reduction(std::uint64_t seed, int N, double noise_std)
{
    GeneratedData g;
    g.system = order_reduction_system();
    require_stable(g.system.A);
    g.x0 = Vec::Zero(6);
    g.data = simulate_linear(g.system, seed, N, noise_std);
    g.data.descriptor = describe("order_reduction", seed, N, noise_std, g.system);
    return g;
}

GeneratedData gen_input_selection(std::uint64_t seed, int N, double noise_std)
{
    GeneratedData g;
    // the system gets its own stream so that N and noise do not change it
    g.system = random_stable_system(seed ^ 0x9e3779b97f4a7c15ULL, 3, 10, 1);
    g.system.B.rightCols(5) /= 1000.0;
    g.x0 = Vec::Zero(3);
    g.data = simulate_linear(g.system, seed, N, noise_std);
    g.data.descriptor = describe("input_selection", seed, N, noise_std, g.system);
    return g;
}

GeneratedData gen_causal(std::uint64_t seed, int N, double noise_std)
{
    GeneratedData g;
    g.system = random_stable_system(seed ^ 0x9e3779b97f4a7c15ULL, 10, 5, 5);
    g.x0 = Vec::Zero(10);
    const Dataset raw = simulate_linear(g.system, seed, N, noise_std);
    const Experiment& r = raw.experiments.front();
    Experiment e;
    e.U.resize(N, 10);
    e.U << r.Y, r.U;
    e.Y = e.U;
    g.data.experiments.push_back(std::move(e));
    g.data.descriptor = describe("causal", seed, N, noise_std, g.system);
    return g;
}

Dataset read_csv(std::istream& in, int n_u, int n_y, const std::vector<Eigen::Index>& boundaries)
{
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw IoError("empty file: header row required");
    ++lineno;
    const auto header = split_fields(line);
    const std::size_t cols = static_cast<std::size_t>(n_u + n_y);
    if (header.size() != cols) {
        throw IoError("header has " + std::to_string(header.size()) + " columns, expected " +
                          std::to_string(cols),
                      lineno);
    }
    for (const auto& h : header) {
        const std::string t = trim(h);
        if (t.empty()) throw IoError("empty column name in header", lineno);
        bool numeric = true;
        try {
            (void)parse_double(t);
        } catch (const IoError&) {
            numeric = false;
        }
        if (numeric) throw IoError("header row required, found numbers", lineno);
    }

    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || trim(line) == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != cols) {
            throw IoError("expected " + std::to_string(cols) + " fields, found " + std::to_string(fields.size()),
                          lineno);
        }
        for (const auto& f : fields) {
            const double v = parse_double(f, lineno);
            if (!std::isfinite(v)) throw IoError("non-finite value", lineno);
            values.push_back(v);
        }
        ++rows;
    }
    const auto b = check_boundaries(boundaries, rows);
    Dataset d;
    for (std::size_t s = 0; s + 1 < b.size(); ++s) {
        const Eigen::Index n = b[s + 1] - b[s];
        Experiment e;
        e.U.resize(n, n_u);
        e.Y.resize(n, n_y);
        for (Eigen::Index k = 0; k < n; ++k) {
            const std::size_t base = static_cast<std::size_t>(b[s] + k) * cols;
            for (int i = 0; i < n_u; ++i) e.U(k, i) = values[base + static_cast<std::size_t>(i)];
            for (int i = 0; i < n_y; ++i) e.Y(k, i) = values[base + static_cast<std::size_t>(n_u + i)];
        }
        d.experiments.push_back(std::move(e));
    }
    return d;
}

Dataset load_csv(const std::filesystem::path& path, int n_u, int n_y, const std::vector<Eigen::Index>& boundaries)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_csv(in, n_u, n_y, boundaries);
}

Dataset load_csv(const std::filesystem::path& path, const std::vector<Eigen::Index>& boundaries)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty file: header row required");
    int n_u = 0, n_y = 0;
    for (const auto& h : split_fields(line)) {
        const std::string t = trim(h);
        if (!t.empty() && (t[0] == 'u' || t[0] == 'U')) {
            if (n_y > 0) throw IoError("input columns must precede output columns", 1);
            ++n_u;
        } else if (!t.empty() && (t[0] == 'y' || t[0] == 'Y')) {
            ++n_y;
        } else {
            throw IoError("column '" + t + "' is neither an input (u*) nor an output (y*)", 1);
        }
    }
    in.clear();
    in.seekg(0);
    return read_csv(in, n_u, n_y, boundaries);
}

void write_csv(std::ostream& out, const Dataset& data)
{
    data.validate();
    const int n_u = data.n_u(), n_y = data.n_y();
    std::string text;
    for (int i = 0; i < n_u; ++i) text += (i ? ",u" : "u") + std::to_string(i + 1);
    for (int i = 0; i < n_y; ++i) text += ((i || n_u) ? ",y" : "y") + std::to_string(i + 1);
    text += '\n';
    for (const auto& e : data.experiments) {
        for (Eigen::Index k = 0; k < e.length(); ++k) {
            bool first = true;
            for (int i = 0; i < n_u; ++i) {
                if (!first) text += ',';
                text += format_double(e.U(k, i));
                first = false;
            }
            for (int i = 0; i < n_y; ++i) {
                if (!first) text += ',';
                text += format_double(e.Y(k, i));
                first = false;
            }
            text += '\n';
        }
    }
    out << text;
}

void export_csv(const Dataset& data, const std::filesystem::path& path)
{
    std::ostringstream ss;
    write_csv(ss, data);
    write_file_atomic(path, ss.str());
}

std::vector<Eigen::Index> experiment_boundaries(const Dataset& data)
{
    std::vector<Eigen::Index> b{0};
    for (const auto& e : data.experiments) b.push_back(b.back() + e.length());
    return b;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv)
{
    std::filesystem::path p = csv;
    p.replace_extension(".json");
    return p;
}

void export_dataset(const Dataset& data, const std::filesystem::path& csv)
{
    if (sidecar_path(csv) == csv) throw IoError("data file must not have a .json extension");
    export_csv(data, csv);
    json side;
    side["n_u"] = data.n_u();
    side["n_y"] = data.n_y();
    side["boundaries"] = experiment_boundaries(data);
    if (!data.descriptor.empty()) side["descriptor"] = json::parse(data.descriptor);
    write_file_atomic(sidecar_path(csv), side.dump(2) + "\n");
}

Dataset import_dataset(const std::filesystem::path& csv)
{
    const auto side = sidecar_path(csv);
    if (side != csv && std::filesystem::exists(side)) {
        json meta;
        try {
            meta = json::parse(read_file(side));
        } catch (const json::exception& e) {
            throw IoError("malformed sidecar " + side.string() + ": " + e.what());
        }
        const int n_u = meta.value("n_u", -1), n_y = meta.value("n_y", -1);
        std::vector<Eigen::Index> b;
        if (meta.contains("boundaries")) b = meta["boundaries"].get<std::vector<Eigen::Index>>();
        Dataset d = n_u >= 0 && n_y >= 0 ? load_csv(csv, n_u, n_y, b) : load_csv(csv, b);
        if (meta.contains("descriptor")) d.descriptor = meta["descriptor"].dump();
        return d;
    }
    return load_csv(csv);
}

} // namespace sysid
