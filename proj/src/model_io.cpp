#include "sepdgp/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sepdgp/arch.hpp"

namespace sepdgp::model_io {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j.at(i).size()) != cols) {
            throw ParseError("model file: ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    if (!m.allFinite()) throw ParseError("model file: non-finite matrix entry");
    return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
    if (!v.allFinite()) throw ParseError("model file: non-finite vector entry");
    return v;
}

json site_to_json(const layer::GaussianSite& s) {
    return json{{"eta1", vector_to_json(s.eta1)}, {"eta2", matrix_to_json(s.eta2)}};
}

layer::GaussianSite site_from_json(const json& j) {
    layer::GaussianSite s;
    s.eta1 = vector_from_json(j.at("eta1"));
    s.eta2 = matrix_from_json(j.at("eta2"));
    return s;
}

}  // namespace

void save_model(const ModelFile& file, const std::string& path) {
    json doc;
    doc["format_version"] = ModelFile::kFormatVersion;
    doc["architecture"] = file.architecture;
    doc["input_dim"] = file.model.input_dim;
    doc["n_train"] = file.state.n_train;

    const auto& st = file.model.standardization;
    doc["standardizer"] = json{{"input_mean", vector_to_json(st.input_mean)},
                               {"input_std", vector_to_json(st.input_std)},
                               {"target_mean", st.target_mean},
                               {"target_std", st.target_std},
                               {"constant_columns", st.constant_columns},
                               {"target_constant", st.target_constant}};

    json layers = json::array();
    for (std::size_t l = 0; l < file.model.layers.size(); ++l) {
        const auto& lay = file.model.layers[l];
        json jl;
        jl["input_dim"] = lay.input_dim;
        jl["output_dim"] = lay.output_dim;
        jl["log_sf2"] = lay.kernel.log_sf2;
        jl["log_lengthscales"] = vector_to_json(lay.kernel.log_lengthscales);
        jl["log_noise"] = lay.log_noise;
        jl["inducing_inputs"] = matrix_to_json(lay.z);
        json sites = json::array();
        for (std::size_t j = 0; j < file.state.g[l].size(); ++j) {
            sites.push_back(json{{"g", site_to_json(file.state.g[l][j])},
                                 {"q", site_to_json(file.state.q[l][j])}});
        }
        jl["sites"] = std::move(sites);
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);

    doc["training"] = json{{"seed", file.meta.seed},
                           {"iterations", file.meta.iterations},
                           {"config_hash", file.meta.config_hash}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write model file: " + path);
    out << doc.dump(2) << '\n';
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid model JSON: ") + e.what());
    }
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != ModelFile::kFormatVersion) {
            throw ParseError("unsupported model format_version " + std::to_string(version));
        }
        ModelFile file;
        file.architecture = doc.at("architecture").get<std::string>();
        file.model.input_dim = doc.at("input_dim").get<int>();
        file.state.n_train = doc.at("n_train").get<long>();

        const auto& jst = doc.at("standardizer");
        file.model.standardization.input_mean = vector_from_json(jst.at("input_mean"));
        file.model.standardization.input_std = vector_from_json(jst.at("input_std"));
        file.model.standardization.target_mean = jst.at("target_mean").get<double>();
        file.model.standardization.target_std = jst.at("target_std").get<double>();
        file.model.standardization.constant_columns =
            jst.at("constant_columns").get<std::vector<int>>();
        file.model.standardization.target_constant = jst.at("target_constant").get<bool>();

        for (const auto& jl : doc.at("layers")) {
            layer::SparseGpLayer lay;
            lay.input_dim = jl.at("input_dim").get<int>();
            lay.output_dim = jl.at("output_dim").get<int>();
            lay.kernel.log_sf2 = jl.at("log_sf2").get<double>();
            lay.kernel.log_lengthscales = vector_from_json(jl.at("log_lengthscales"));
            lay.log_noise = jl.at("log_noise").get<double>();
            lay.z = matrix_from_json(jl.at("inducing_inputs"));
            if (!std::isfinite(lay.kernel.log_sf2) || !std::isfinite(lay.log_noise)) {
                throw ParseError("model file: non-finite scalar parameter");
            }
            std::vector<layer::GaussianSite> g_sites, q_sites;
            for (const auto& js : jl.at("sites")) {
                g_sites.push_back(site_from_json(js.at("g")));
                q_sites.push_back(site_from_json(js.at("q")));
            }
            if (static_cast<int>(g_sites.size()) != lay.output_dim) {
                throw ParseError("model file: site count disagrees with output_dim");
            }
            file.model.layers.push_back(std::move(lay));
            file.state.g.push_back(std::move(g_sites));
            file.state.q.push_back(std::move(q_sites));
        }
        network::validate_model(file.model);

        const auto& jt = doc.at("training");
        file.meta.seed = jt.at("seed").get<std::uint64_t>();
        file.meta.iterations = jt.at("iterations").get<long>();
        file.meta.config_hash = jt.at("config_hash").get<std::string>();

        // Priors are derived quantities; rebuild them for subsequent use but
        // keep the stored q untouched so round-trips are byte identical.
        file.state.prior.resize(file.model.layers.size());
        file.state.prior_jitter.resize(file.model.layers.size());
        for (std::size_t l = 0; l < file.model.layers.size(); ++l) {
            const auto& lay = file.model.layers[l];
            const auto factor =
                numerics::chol_psd(kernel::gram(lay.kernel, lay.z, lay.z));
            Eigen::MatrixXd lambda = numerics::inverse_psd(factor);
            file.state.prior[l].eta2 = 0.5 * (lambda + lambda.transpose());
            file.state.prior[l].eta1 = Eigen::VectorXd::Zero(lay.n_inducing());
            file.state.prior_jitter[l] = factor.jitter;
        }
        return file;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
}

std::string config_hash(const trainer::TrainConfig& cfg) {
    std::ostringstream canon;
    canon << "mb=" << cfg.minibatch_size << ";it=" << cfg.iterations
          << ";lr=" << format_double(cfg.learning_rate) << ";b1=" << format_double(cfg.adam_beta1)
          << ";b2=" << format_double(cfg.adam_beta2) << ";eps=" << format_double(cfg.adam_eps)
          << ";seed=" << cfg.seed << ";arch=" << arch::to_string(cfg.architecture)
          << ";damping=" << format_double(cfg.sep.damping)
          << ";per_mb=" << cfg.sep.update_per_minibatch
          << ";parallel=" << cfg.sep.parallel_within_minibatch;
    const std::string s = canon.str();
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_history_csv(const std::string& path,
                       const std::vector<trainer::IterationRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write history file: " + path);
    out << "iter,mean_logZ,skips,jitter_events\n";
    for (const auto& rec : history) {
        out << rec.iter << ',' << format_double(rec.mean_logz) << ',' << rec.skips << ','
            << rec.jitter_events << '\n';
    }
}

}  // namespace sepdgp::model_io
