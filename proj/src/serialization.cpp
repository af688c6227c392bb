#include "sysid/serialization.hpp"

#include <set>

#include "sysid/error.hpp"
#include "sysid/io.hpp"

namespace sysid {

namespace {

// Strict view of a JSON object: every key read is recorded, and finish() rejects the rest.
class Obj
{
public:
    Obj(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const Json* find(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    void number(const std::string& key, double& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(key_path(key) + " must be a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(key_path(key) + " must be an integer");
            const auto x = v->get<long long>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw ConfigError(key_path(key) + " is out of range");
            }
            out = static_cast<int>(x);
        }
    }

    void unsigned64(const std::string& key, std::uint64_t& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_number_unsigned()) throw ConfigError(key_path(key) + " must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void boolean(const std::string& key, bool& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(key_path(key) + " must be true or false");
            out = v->get<bool>();
        }
    }

    bool text(const std::string& key, std::string& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(key_path(key) + " must be a string");
            out = v->get<std::string>();
            return true;
        }
        return false;
    }

    void int_list(const std::string& key, std::vector<int>& out)
    {
        if (const Json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(key_path(key) + " must be a list of integers");
            out.clear();
            for (const auto& x : *v) {
                if (!x.is_number_integer()) throw ConfigError(key_path(key) + " must be a list of integers");
                out.push_back(x.get<int>());
            }
        }
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key_path(it.key()) + "'");
        }
    }

private:
    std::string where() const { return path_.empty() ? "configuration" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Scalar s means s * I(n); otherwise a nested list.
Mat square_or_scaled(const Json& j, int n, const std::string& where)
{
    if (j.is_number()) return j.get<double>() * Mat::Identity(n, n);
    Mat m = matrix_from_json(j, where);
    if (m.rows() != n || m.cols() != n) {
        throw DimensionError(where, "expected " + std::to_string(n) + "x" + std::to_string(n));
    }
    return m;
}

Json optional_matrix(const Mat& m)
{
    return m.size() ? matrix_to_json(m) : Json(nullptr);
}

BlockMask mask_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "free") return BlockMask::all_free(rows, cols);
        if (s == "zero") return BlockMask::fixed(Mat::Zero(rows, cols));
        if (s == "diagonal") {
            if (rows != cols) throw ConfigError(where + ": diagonal mask needs a square block");
            return BlockMask::diagonal(rows);
        }
        if (s == "identity") {
            if (rows > cols) throw ConfigError(where + ": identity mask needs rows <= cols");
            return BlockMask::fixed(Mat::Identity(rows, cols));
        }
        throw ConfigError(where + ": unknown mask '" + s + "'");
    }
    Obj o(j, where);
    BlockMask m = BlockMask::all_free(rows, cols);
    if (const Json* f = o.find("free")) {
        const Mat free = matrix_from_json(*f, where + ".free");
        if (free.rows() != rows || free.cols() != cols) throw DimensionError(where, "free pattern has the wrong shape");
        m.free = free.array() != 0.0;
    }
    if (const Json* v = o.find("value")) {
        m.value = matrix_from_json(*v, where + ".value");
        if (m.value.rows() != rows || m.value.cols() != cols) {
            throw DimensionError(where, "value matrix has the wrong shape");
        }
    }
    o.finish();
    return m;
}

Json mask_to_json(const BlockMask& m)
{
    Json j;
    j["free"] = matrix_to_json(m.free.cast<double>().matrix());
    j["value"] = matrix_to_json(m.value);
    return j;
}

Json layers_to_json(const std::vector<DenseLayer>& net)
{
    Json a = Json::array();
    for (const auto& l : net) {
        Json o;
        o["W"] = matrix_to_json(l.W);
        o["b"] = vector_to_json(l.b);
        a.push_back(o);
    }
    return a;
}

std::vector<DenseLayer> layers_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + " must be a list of layers");
    std::vector<DenseLayer> net;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        Obj o(j[i], w);
        DenseLayer l;
        const Json* W = o.find("W");
        const Json* b = o.find("b");
        if (!W || !b) throw ConfigError(w + " needs W and b");
        l.W = matrix_from_json(*W, w + ".W");
        l.b = vector_from_json(*b, w + ".b");
        o.finish();
        net.push_back(std::move(l));
    }
    return net;
}

Json scaling_to_json(const ChannelScaling& s)
{
    Json j;
    j["mean"] = vector_to_json(s.mean);
    j["std"] = vector_to_json(s.std);
    return j;
}

ChannelScaling scaling_from_json(const Json& j, const std::string& where)
{
    Obj o(j, where);
    ChannelScaling s;
    if (const Json* m = o.find("mean")) s.mean = vector_from_json(*m, where + ".mean");
    if (const Json* d = o.find("std")) s.std = vector_from_json(*d, where + ".std");
    o.finish();
    return s;
}

Json saturation_to_json(const SaturationConfig& s)
{
    Json j;
    j["enabled"] = s.enabled;
    j["bound"] = s.bound;
    j["per_component"] = s.per_component.size() ? vector_to_json(s.per_component) : Json(nullptr);
    j["mode"] = s.mode == SaturationMode::soft ? "soft" : "hard";
    j["gamma"] = s.gamma;
    return j;
}

SaturationConfig saturation_from_json(const Json& j, const std::string& where)
{
    Obj o(j, where);
    SaturationConfig s;
    o.boolean("enabled", s.enabled);
    o.number("bound", s.bound);
    if (const Json* p = o.find("per_component")) s.per_component = vector_from_json(*p, where + ".per_component");
    std::string mode;
    if (o.text("mode", mode)) {
        if (mode == "hard") s.mode = SaturationMode::hard;
        else if (mode == "soft") s.mode = SaturationMode::soft;
        else throw ConfigError(where + ".mode must be 'hard' or 'soft'");
    }
    o.number("gamma", s.gamma);
    o.finish();
    return s;
}

Json params_to_json(const ModelParams& p, const ModelSpec& spec)
{
    Json j;
    Json x0 = Json::array();
    for (const Vec& v : p.x0) x0.push_back(vector_to_json(v));
    j["x0"] = x0;
    j["A"] = matrix_to_json(p.A);
    j["B"] = matrix_to_json(p.B);
    j["C"] = matrix_to_json(p.C);
    const bool d_fixed = !spec.feedthrough || (spec.mask.D && !spec.mask.D->free.any());
    if (!(d_fixed && p.D.isZero(0.0))) j["D"] = matrix_to_json(p.D);
    j["theta_x"] = layers_to_json(p.theta_x);
    j["theta_y"] = layers_to_json(p.theta_y);
    return j;
}

ModelParams params_from_json(const Json& j, const ModelSpec& spec)
{
    Obj o(j, "params");
    ModelParams p;
    if (const Json* x0 = o.find("x0")) {
        if (!x0->is_array()) throw ConfigError("params.x0 must be a list of vectors");
        for (std::size_t i = 0; i < x0->size(); ++i) {
            p.x0.push_back(vector_from_json((*x0)[i], "params.x0[" + std::to_string(i) + "]"));
        }
    }
    if (p.x0.empty()) p.x0.push_back(Vec::Zero(spec.n_x));
    auto block = [&](const char* name, Mat& m, Eigen::Index r, Eigen::Index c) {
        if (const Json* v = o.find(name)) m = matrix_from_json(*v, std::string("params.") + name);
        else m = Mat::Zero(r, c);
    };
    block("A", p.A, spec.n_x, spec.n_x);
    block("B", p.B, spec.n_x, spec.n_u);
    block("C", p.C, spec.n_y, spec.n_x);
    block("D", p.D, spec.n_y, spec.n_u);
    if (const Json* t = o.find("theta_x")) p.theta_x = layers_from_json(*t, "params.theta_x");
    if (const Json* t = o.find("theta_y")) p.theta_y = layers_from_json(*t, "params.theta_y");
    o.finish();
    p.check_dims(spec);
    return p;
}

Json reg_to_json(const RegularizationConfig& r)
{
    Json j;
    j["rho_theta"] = r.rho_theta;
    j["rho_x"] = r.rho_x;
    j["tau"] = r.tau;
    j["tau_g"] = r.tau_g;
    j["epsilon"] = r.epsilon;
    j["groups"] = to_string(r.group_kind);
    return j;
}

} // namespace

Json matrix_to_json(const Mat& m)
{
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(std::move(r));
    }
    return rows;
}

Mat matrix_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + " must be a list of rows");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Mat m;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Json& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array()) throw ConfigError(where + " must be a list of rows");
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(r.size());
            m.resize(rows, cols);
        }
        if (static_cast<Eigen::Index>(r.size()) != cols) throw DimensionError(where, "rows differ in length");
        for (Eigen::Index k = 0; k < cols; ++k) {
            const Json& x = r[static_cast<std::size_t>(k)];
            if (x.is_boolean()) m(i, k) = x.get<bool>() ? 1.0 : 0.0;
            else if (x.is_number()) m(i, k) = x.get<double>();
            else throw ConfigError(where + " entries must be numbers");
        }
    }
    return m;
}

Json vector_to_json(const Vec& v)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vector_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + " must be a list of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(where + " entries must be numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

std::string dump(const Json& j)
{
    return j.dump(2) + "\n";
}

Json to_json(const ModelSpec& s)
{
    Json j;
    j["n_x"] = s.n_x;
    j["n_u"] = s.n_u;
    j["n_y"] = s.n_y;
    j["fx_layers"] = s.fx_layers;
    j["fy_layers"] = s.fy_layers;
    j["activation"] = to_string(s.activation);
    j["feedthrough"] = s.feedthrough;
    Json m;
    if (s.mask.A) m["A"] = mask_to_json(*s.mask.A);
    if (s.mask.B) m["B"] = mask_to_json(*s.mask.B);
    if (s.mask.C) m["C"] = mask_to_json(*s.mask.C);
    if (s.mask.D) m["D"] = mask_to_json(*s.mask.D);
    m["fix_x0"] = s.mask.fix_x0;
    m["fix_theta_x"] = s.mask.fix_theta_x;
    m["fix_theta_y"] = s.mask.fix_theta_y;
    j["mask"] = m;
    return j;
}

ModelSpec model_spec_from_json(const Json& j)
{
    Obj o(j, "model");
    ModelSpec s;
    o.integer("n_x", s.n_x);
    o.integer("n_u", s.n_u);
    o.integer("n_y", s.n_y);
    o.int_list("fx_layers", s.fx_layers);
    o.int_list("fy_layers", s.fy_layers);
    std::string act;
    if (o.text("activation", act)) s.activation = activation_from_string(act);
    o.boolean("feedthrough", s.feedthrough);
    if (s.n_x < 1 || s.n_u < 0 || s.n_y < 1) throw ConfigError("model dimensions must be positive");
    if (const Json* m = o.find("mask")) {
        Obj mo(*m, "model.mask");
        if (const Json* a = mo.find("A")) s.mask.A = mask_from_json(*a, s.n_x, s.n_x, "model.mask.A");
        if (const Json* b = mo.find("B")) s.mask.B = mask_from_json(*b, s.n_x, s.n_u, "model.mask.B");
        if (const Json* c = mo.find("C")) s.mask.C = mask_from_json(*c, s.n_y, s.n_x, "model.mask.C");
        if (const Json* d = mo.find("D")) s.mask.D = mask_from_json(*d, s.n_y, s.n_u, "model.mask.D");
        mo.boolean("fix_x0", s.mask.fix_x0);
        mo.boolean("fix_theta_x", s.mask.fix_theta_x);
        mo.boolean("fix_theta_y", s.mask.fix_theta_y);
        mo.finish();
    }
    o.finish();
    s.validate();
    return s;
}

RunConfig run_config_from_json(const Json& j)
{
    Obj root(j, "");
    RunConfig cfg;
    if (const Json* m = root.find("model")) cfg.model = model_spec_from_json(*m);
    const int nx = cfg.model.n_x;

    if (const Json* t = root.find("train")) {
        Obj o(*t, "train");
        TrainConfig& tc = cfg.train;
        o.integer("n_starts", tc.n_starts);
        o.unsigned64("seed", tc.seed);
        o.number("init_A_scale", tc.init_A_scale);
        o.number("init_std", tc.init_std);
        std::string s;
        if (o.text("x0_mode", s)) tc.x0_mode = x0_mode_from_string(s);
        o.number("zero_threshold", tc.zero_threshold);
        if (o.text("selection", s)) tc.selection = selection_from_string(s);
        o.integer("presample", tc.presample);
        o.boolean("auto_scale", tc.auto_scale);
        o.integer("max_reinit", tc.max_reinit);
        if (const Json* a = o.find("adam")) {
            Obj ao(*a, "train.adam");
            ao.integer("iters", tc.adam.iters);
            ao.number("learning_rate", tc.adam.learning_rate);
            ao.number("beta1", tc.adam.beta1);
            ao.number("beta2", tc.adam.beta2);
            ao.number("eps", tc.adam.eps);
            ao.boolean("track_best", tc.adam.track_best);
            ao.integer("max_consecutive_nonfinite", tc.adam.max_consecutive_nonfinite);
            ao.finish();
        }
        if (const Json* l = o.find("lbfgsb")) {
            Obj lo(*l, "train.lbfgsb");
            lo.integer("memory", tc.lbfgsb.memory);
            lo.integer("max_fun_evals", tc.lbfgsb.max_fun_evals);
            lo.number("grad_tol", tc.lbfgsb.grad_tol);
            lo.number("ftol", tc.lbfgsb.ftol);
            if (const Json* ls = lo.find("line_search")) {
                Obj so(*ls, "train.lbfgsb.line_search");
                so.number("c1", tc.lbfgsb.line_search.c1);
                so.number("c2", tc.lbfgsb.line_search.c2);
                so.integer("max_evals", tc.lbfgsb.line_search.max_evals);
                so.finish();
            }
            lo.finish();
        }
        o.finish();
    }
    if (const Json* r = root.find("regularization")) {
        Obj o(*r, "regularization");
        RegularizationConfig& rc = cfg.train.reg;
        o.number("rho_theta", rc.rho_theta);
        o.number("rho_x", rc.rho_x);
        o.number("tau", rc.tau);
        o.number("tau_g", rc.tau_g);
        o.number("epsilon", rc.epsilon);
        std::string g;
        if (o.text("groups", g)) rc.group_kind = group_kind_from_string(g);
        o.finish();
    }
    if (const Json* s = root.find("saturation")) cfg.train.sat = saturation_from_json(*s, "saturation");
    if (const Json* e = root.find("ekf")) {
        Obj o(*e, "ekf");
        o.integer("epochs", cfg.ekf.epochs);
        o.number("rho_x", cfg.ekf.rho_x);
        if (const Json* q = o.find("Q")) cfg.ekf.Q = square_or_scaled(*q, nx, "ekf.Q");
        if (const Json* r = o.find("R")) cfg.ekf.R = square_or_scaled(*r, cfg.model.n_y, "ekf.R");
        if (const Json* p = o.find("P0")) cfg.ekf.P0 = square_or_scaled(*p, nx, "ekf.P0");
        if (const Json* x = o.find("x0_init")) cfg.ekf.x0_init = vector_from_json(*x, "ekf.x0_init");
        o.finish();
    }
    if (const Json* p = root.find("predictor")) {
        Obj o(*p, "predictor");
        PredictorConfig& pc = cfg.predictor;
        o.boolean("output_disturbance", pc.output_disturbance);
        if (const Json* q = o.find("Qx")) pc.Qx = square_or_scaled(*q, nx, "predictor.Qx");
        if (const Json* q = o.find("Qq")) pc.Qq = square_or_scaled(*q, cfg.model.n_y, "predictor.Qq");
        if (const Json* r = o.find("R")) pc.R = square_or_scaled(*r, cfg.model.n_y, "predictor.R");
        if (const Json* p0 = o.find("P0")) {
            const int na = nx + (pc.output_disturbance ? cfg.model.n_y : 0);
            pc.P0 = square_or_scaled(*p0, na, "predictor.P0");
        }
        if (const Json* x = o.find("x0")) pc.x0 = vector_from_json(*x, "predictor.x0");
        o.finish();
    }
    if (const Json* d = root.find("data")) {
        Obj o(*d, "data");
        o.text("train", cfg.data.train);
        o.text("test", cfg.data.test);
        if (const Json* b = o.find("boundaries")) {
            if (!b->is_array()) throw ConfigError("data.boundaries must be a list of row offsets");
            for (const auto& x : *b) {
                if (!x.is_number_integer() || x.get<long long>() < 0) throw ConfigError("data.boundaries must be a list of row offsets");
                cfg.data.boundaries.push_back(x.get<Eigen::Index>());
            }
        }
        o.finish();
    }
    root.finish();

    cfg.train.validate();
    cfg.train.sat.validate(nx);
    cfg.ekf.validate(nx, cfg.model.n_y);
    if (cfg.train.reg.tau_g > 0.0 && cfg.train.reg.group_kind == GroupKind::none) {
        throw ConfigError("regularization.tau_g > 0 needs regularization.groups");
    }
    return cfg;
}

Json to_json(const RunConfig& cfg)
{
    const TrainConfig& t = cfg.train;
    Json j;
    j["model"] = to_json(cfg.model);
    Json tr;
    tr["n_starts"] = t.n_starts;
    tr["seed"] = t.seed;
    tr["init_A_scale"] = t.init_A_scale;
    tr["init_std"] = t.init_std;
    tr["x0_mode"] = to_string(t.x0_mode);
    tr["zero_threshold"] = t.zero_threshold;
    tr["selection"] = to_string(t.selection);
    tr["presample"] = t.presample;
    tr["auto_scale"] = t.auto_scale;
    tr["max_reinit"] = t.max_reinit;
    Json a;
    a["iters"] = t.adam.iters;
    a["learning_rate"] = t.adam.learning_rate;
    a["beta1"] = t.adam.beta1;
    a["beta2"] = t.adam.beta2;
    a["eps"] = t.adam.eps;
    a["track_best"] = t.adam.track_best;
    a["max_consecutive_nonfinite"] = t.adam.max_consecutive_nonfinite;
    tr["adam"] = a;
    Json l;
    l["memory"] = t.lbfgsb.memory;
    l["max_fun_evals"] = t.lbfgsb.max_fun_evals;
    l["grad_tol"] = t.lbfgsb.grad_tol;
    l["ftol"] = t.lbfgsb.ftol;
    l["line_search"] = {{"c1", t.lbfgsb.line_search.c1},
                        {"c2", t.lbfgsb.line_search.c2},
                        {"max_evals", t.lbfgsb.line_search.max_evals}};
    tr["lbfgsb"] = l;
    j["train"] = tr;
    j["regularization"] = reg_to_json(t.reg);
    j["saturation"] = saturation_to_json(t.sat);
    Json e;
    e["epochs"] = cfg.ekf.epochs;
    e["rho_x"] = cfg.ekf.rho_x;
    e["Q"] = optional_matrix(cfg.ekf.Q);
    e["R"] = optional_matrix(cfg.ekf.R);
    e["P0"] = optional_matrix(cfg.ekf.P0);
    e["x0_init"] = cfg.ekf.x0_init.size() ? vector_to_json(cfg.ekf.x0_init) : Json(nullptr);
    j["ekf"] = e;
    Json p;
    p["output_disturbance"] = cfg.predictor.output_disturbance;
    p["Qx"] = optional_matrix(cfg.predictor.Qx);
    p["Qq"] = optional_matrix(cfg.predictor.Qq);
    p["R"] = optional_matrix(cfg.predictor.R);
    p["P0"] = optional_matrix(cfg.predictor.P0);
    p["x0"] = cfg.predictor.x0.size() ? vector_to_json(cfg.predictor.x0) : Json(nullptr);
    j["predictor"] = p;
    Json d;
    d["train"] = cfg.data.train;
    d["test"] = cfg.data.test;
    d["boundaries"] = cfg.data.boundaries;
    j["data"] = d;
    return j;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    const std::string text = read_file(path);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

Json to_json(const FittedModel& m)
{
    Json j;
    j["format"] = "sysid-model";
    j["version"] = kVersion;
    j["spec"] = to_json(m.spec);
    j["saturation"] = saturation_to_json(m.sat);
    if (m.scaled) {
        j["scaling"] = {{"u", scaling_to_json(m.u_scaling)}, {"y", scaling_to_json(m.y_scaling)}};
    } else {
        j["scaling"] = nullptr;
    }
    j["params"] = params_to_json(m.params, m.spec);
    return j;
}

FittedModel fitted_model_from_json(const Json& j)
{
    Obj o(j, "");
    std::string format, version;
    o.text("format", format);
    o.text("version", version);
    if (format != "sysid-model") throw ConfigError("not a model file");
    FittedModel m;
    const Json* spec = o.find("spec");
    if (!spec) throw ConfigError("model file has no spec");
    m.spec = model_spec_from_json(*spec);
    if (const Json* s = o.find("saturation")) m.sat = saturation_from_json(*s, "saturation");
    if (const Json* sc = o.find("scaling")) {
        Obj so(*sc, "scaling");
        const Json* u = so.find("u");
        const Json* y = so.find("y");
        if (!u || !y) throw ConfigError("scaling needs u and y");
        m.u_scaling = scaling_from_json(*u, "scaling.u");
        m.y_scaling = scaling_from_json(*y, "scaling.y");
        so.finish();
        m.scaled = true;
    }
    const Json* p = o.find("params");
    if (!p) throw ConfigError("model file has no params");
    m.params = params_from_json(*p, m.spec);
    o.finish();
    return m;
}

void save_model(const FittedModel& m, const std::filesystem::path& path)
{
    write_file_atomic(path, dump(to_json(m)));
}

FittedModel load_model(const std::filesystem::path& path)
{
    const std::string text = read_file(path);
    try {
        return fitted_model_from_json(Json::parse(text));
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

FittedModel fitted_model(const FitReport& r, const SaturationConfig& sat)
{
    FittedModel m;
    m.spec = r.spec;
    m.params = r.best_params;
    m.sat = sat;
    m.scaled = r.scaled;
    m.u_scaling = r.u_scaling;
    m.y_scaling = r.y_scaling;
    return m;
}

Json to_json(const R2Report& r)
{
    return {{"per_output", vector_to_json(r.per_output)}, {"average", r.average}};
}

Json to_json(const StartSummary& s, bool timings)
{
    Json j;
    j["start"] = s.start;
    j["ok"] = s.ok;
    if (!s.message.empty()) j["message"] = s.message;
    j["reinit"] = s.reinit;
    j["adam_status"] = to_string(s.adam_status);
    j["adam_evals"] = s.adam_evals;
    j["lbfgsb_status"] = to_string(s.lbfgsb_status);
    j["lbfgsb_evals"] = s.lbfgsb_evals;
    if (s.ok) {
        j["loss"] = s.loss;
        j["objective"] = s.objective;
        j["r2_average"] = s.r2_average;
        j["selection_score"] = s.selection_score;
    }
    if (timings) j["seconds"] = s.seconds;
    return j;
}

Json fit_report_json(const FitReport& r, const RunConfig& cfg, bool timings)
{
    Json j;
    j["format"] = "sysid-fit-report";
    j["version"] = kVersion;
    j["status"] = "ok";
    j["config"] = to_json(cfg);
    j["best_start"] = r.best_start;
    j["r2_train"] = to_json(r.r2_train);
    j["final_loss"] = r.final_loss;
    j["final_objective"] = r.final_objective;
    j["sparsity"] = {{"network_zeros", r.sparsity.network_zeros},
                     {"network_entries", r.sparsity.network_entries},
                     {"theta_zeros", r.sparsity.theta_zeros},
                     {"theta_entries", r.sparsity.theta_entries}};
    j["effective_order"] = r.effective_order;
    j["active_inputs"] = r.active_inputs;
    Json starts = Json::array();
    for (const auto& s : r.starts) starts.push_back(to_json(s, timings));
    j["starts"] = starts;
    if (timings) j["timings"] = {{"total_seconds", r.total_seconds}};
    return j;
}

Json failure_report_json(const std::string& message, const std::vector<StartSummary>& starts,
                         const RunConfig& cfg, bool timings)
{
    Json j;
    j["format"] = "sysid-fit-report";
    j["version"] = kVersion;
    j["status"] = "failed";
    j["message"] = message;
    j["config"] = to_json(cfg);
    Json a = Json::array();
    for (const auto& s : starts) a.push_back(to_json(s, timings));
    j["starts"] = a;
    return j;
}

} // namespace sysid
