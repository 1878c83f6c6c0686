#include "lesion/model_io.hpp"

#include "lesion/error.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace lesion::io {

namespace {

// nlohmann reports shape errors through its own exception hierarchy; the
// callers only see DataError.
template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed ") + what + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid ") + what + ": " + e.what());
    }
}

Json to_json(const Kernel& k) {
    return {{"kind", k.kind == Kernel::Kind::rbf ? "rbf" : "linear"}, {"gamma", k.gamma}};
}

Kernel kernel_from_json(const Json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "rbf") return Kernel::rbf(j.at("gamma").get<double>());
    if (kind == "linear") return Kernel::linear();
    throw DataError("unknown kernel kind '" + kind + "'");
}

Json to_json(const Scaler& s) { return {{"means", s.means}, {"stds", s.stds}}; }

Scaler scaler_from_json(const Json& j) {
    Scaler s;
    s.means = j.at("means").get<std::vector<double>>();
    s.stds = j.at("stds").get<std::vector<double>>();
    if (s.means.size() != s.stds.size()) throw DataError("scaler dimensions differ");
    return s;
}

Json to_json(const KernelExpansion& e) {
    return {{"support_vectors", e.support_vectors},
            {"dual_coefs", e.dual_coefs},
            {"bias", e.bias},
            {"kernel", to_json(e.kernel)}};
}

KernelExpansion expansion_from_json(const Json& j) {
    KernelExpansion e;
    e.support_vectors = j.at("support_vectors").get<Samples>();
    e.dual_coefs = j.at("dual_coefs").get<std::vector<double>>();
    e.bias = j.at("bias").get<double>();
    e.kernel = kernel_from_json(j.at("kernel"));
    if (e.support_vectors.size() != e.dual_coefs.size()) {
        throw DataError("support vector and coefficient counts differ");
    }
    for (const Sample& sv : e.support_vectors) {
        if (sv.size() != e.support_vectors.front().size()) {
            throw DataError("ragged support vector matrix");
        }
    }
    return e;
}

Json to_json(const SvcBinary& m) {
    return {{"expansion", to_json(m.expansion)},
            {"c_pos", m.c_pos},
            {"c_neg", m.c_neg},
            {"input_dim", m.input_dim}};
}

SvcBinary svc_from_json(const Json& j) {
    SvcBinary m;
    m.expansion = expansion_from_json(j.at("expansion"));
    m.c_pos = j.at("c_pos").get<double>();
    m.c_neg = j.at("c_neg").get<double>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    return m;
}

Json to_json(const SvrModel& m) {
    return {{"expansion", to_json(m.expansion)},
            {"c", m.c},
            {"epsilon", m.epsilon},
            {"input_dim", m.input_dim}};
}

SvrModel svr_from_json(const Json& j) {
    SvrModel m;
    m.expansion = expansion_from_json(j.at("expansion"));
    m.c = j.at("c").get<double>();
    m.epsilon = j.at("epsilon").get<double>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    return m;
}

}  // namespace

std::string timestamp_now() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0') t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string dump(const ModelContainer& c) {
    const Json j = {{"format_version", c.format_version},
                    {"kind", c.kind},
                    {"created", c.created},
                    {"config_echo", c.config_echo},
                    {"payload", c.payload}};
    return j.dump(2) + "\n";
}

ModelContainer parse(const std::string& text, const std::string& expected_kind) {
    return guarded("model container", [&] {
        const Json j = Json::parse(text);
        ModelContainer c;
        c.format_version = j.at("format_version").get<int>();
        if (c.format_version != kFormatVersion) {
            throw DataError("unsupported model format_version " + std::to_string(c.format_version));
        }
        c.kind = j.at("kind").get<std::string>();
        if (!expected_kind.empty() && c.kind != expected_kind) {
            throw DataError("model kind is '" + c.kind + "', expected '" + expected_kind + "'");
        }
        c.created = j.at("created").get<std::string>();
        c.config_echo = j.at("config_echo");
        c.payload = j.at("payload");
        return c;
    });
}

void save(const std::filesystem::path& path, const ModelContainer& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os << dump(c);
    if (!os) throw DataError("cannot write " + path.string());
}

ModelContainer load(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open model " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), expected_kind);
}

Json to_json(const Gmm& g) {
    Json comps = Json::array();
    for (const GaussianComponent& c : g.components()) {
        std::vector<double> cov(9);
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) cov[3 * r + k] = c.covariance(r, k);
        }
        comps.push_back({{"weight", c.weight},
                         {"mean", {c.mean[0], c.mean[1], c.mean[2]}},
                         {"covariance", cov}});
    }
    return {{"components", comps}};
}

Gmm gmm_from_json(const Json& j) {
    return guarded("mixture", [&] {
        std::vector<GaussianComponent> comps;
        for (const Json& cj : j.at("components")) {
            const auto mean = cj.at("mean").get<std::vector<double>>();
            const auto cov = cj.at("covariance").get<std::vector<double>>();
            if (mean.size() != 3 || cov.size() != 9) throw DataError("mixture component has wrong shape");
            GaussianComponent c;
            c.weight = cj.at("weight").get<double>();
            c.mean = Vec3(mean[0], mean[1], mean[2]);
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) c.covariance(r, k) = cov[3 * r + k];
            }
            comps.push_back(c);
        }
        return Gmm(std::move(comps));
    });
}

Json to_json(const TissueColorModel& m) {
    return {{"lesion_gmm", to_json(m.lesion_gmm)},
            {"skin_gmm", to_json(m.skin_gmm)},
            {"prior_lesion", m.prior_lesion},
            {"prior_skin", m.prior_skin}};
}

TissueColorModel tissue_from_json(const Json& j) {
    return guarded("tissue model", [&] {
        TissueColorModel m;
        m.lesion_gmm = gmm_from_json(j.at("lesion_gmm"));
        m.skin_gmm = gmm_from_json(j.at("skin_gmm"));
        m.prior_lesion = j.at("prior_lesion").get<double>();
        m.prior_skin = j.at("prior_skin").get<double>();
        return m;
    });
}

Json to_json(const ThresholdModel& m) {
    return {{"scaler", to_json(m.scaler)}, {"svr", to_json(m.svr)}, {"grid", m.grid.values()}};
}

ThresholdModel threshold_from_json(const Json& j) {
    return guarded("threshold model", [&] {
        ThresholdModel m;
        m.scaler = scaler_from_json(j.at("scaler"));
        m.svr = svr_from_json(j.at("svr"));
        m.grid = ThresholdGrid(j.at("grid").get<std::vector<double>>());
        if (m.scaler.dim() != static_cast<std::size_t>(kCandidateFeatureCount)) {
            throw DataError("threshold model scaler has wrong dimension");
        }
        return m;
    });
}

Json to_json(const SvcMulticlass& m) {
    Json machines = Json::array();
    for (const OvrMachine& om : m.machines) {
        machines.push_back({{"trained", om.trained},
                            {"svc", to_json(om.svc)},
                            {"platt", {{"a", om.platt.a}, {"b", om.platt.b}}}});
    }
    return {{"classes", m.classes},
            {"scaler", to_json(m.scaler)},
            {"kernel", to_json(m.kernel)},
            {"machines", machines}};
}

SvcMulticlass multiclass_from_json(const Json& j) {
    return guarded("diagnosis model", [&] {
        SvcMulticlass m;
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.scaler = scaler_from_json(j.at("scaler"));
        m.kernel = kernel_from_json(j.at("kernel"));
        for (const Json& mj : j.at("machines")) {
            OvrMachine om;
            om.trained = mj.at("trained").get<bool>();
            om.svc = svc_from_json(mj.at("svc"));
            om.platt.a = mj.at("platt").at("a").get<double>();
            om.platt.b = mj.at("platt").at("b").get<double>();
            m.machines.push_back(std::move(om));
        }
        if (m.machines.size() != m.classes.size()) throw DataError("machine and class counts differ");
        return m;
    });
}

}  // namespace lesion::io
