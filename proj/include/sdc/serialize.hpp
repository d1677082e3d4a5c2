#pragma once

// JSON interchange for datasets, models, linearizations, LMI problems and
// controller designs, so each pipeline stage can run standalone.

#include <json.hpp>

#include <fstream>
#include <string>

#include "sdc/gp.hpp"
#include "sdc/linearize.hpp"
#include "sdc/lmi.hpp"
#include "sdc/sdp.hpp"

namespace sdc::io {

using json = nlohmann::ordered_json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline json matrix_to_json(const MatrixXd& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    j["data"] = std::move(data);
    return j;
}

inline MatrixXd matrix_from_json(const json& j) {
    MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != m.size())
        throw SchemaMismatch("matrix JSON: data length does not match rows*cols");
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = data[k++].get<double>();
    return m;
}

inline json vector_to_json(const VectorXd& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline VectorXd vector_from_json(const json& j) {
    VectorXd v(j.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

// ---------------------------------------------------------------------------
// GP model checkpoints
// ---------------------------------------------------------------------------

inline json gp_model_to_json(const gp::GpModel& m) {
    json j;
    j["output_variance"] = m.kernel().output_variance;
    j["lengthscales"] = vector_to_json(m.kernel().lengthscales);
    j["noise_variance"] = m.noise_variance();
    j["inputs"] = matrix_to_json(m.inputs());
    j["targets"] = vector_to_json(m.targets());
    j["alpha"] = vector_to_json(m.alpha());
    return j;
}

inline gp::GpModel gp_model_from_json(const json& j) {
    gp::SeKernel kernel;
    kernel.output_variance = j.at("output_variance").get<double>();
    kernel.lengthscales = vector_from_json(j.at("lengthscales"));
    auto inputs = std::make_shared<MatrixXd>(matrix_from_json(j.at("inputs")));
    VectorXd targets = vector_from_json(j.at("targets"));
    gp::GpModel m = gp::GpModel::condition(kernel, j.at("noise_variance").get<double>(),
                                           inputs, targets);
    // alpha is recomputed from the inputs; the stored copy is a consistency check
    VectorXd alpha = vector_from_json(j.at("alpha"));
    if (alpha.size() == m.alpha().size() && (alpha - m.alpha()).norm() > 1e-6 * (1.0 + alpha.norm()))
        throw SchemaMismatch("gp model JSON: stored alpha inconsistent with inputs");
    return m;
}

// ---------------------------------------------------------------------------
// Linearization stages
// ---------------------------------------------------------------------------

inline json linearization_to_json(const lin::UncertainLinearization& l) {
    json j;
    j["a_nominal"] = matrix_to_json(l.a_nominal);
    j["b_nominal"] = matrix_to_json(l.b_nominal);
    j["a_bound"] = matrix_to_json(l.a_bound);
    j["b_bound"] = matrix_to_json(l.b_bound);
    j["prob_per_row"] = l.prob_per_row;
    j["joint_confidence"] = l.joint_confidence;
    j["gamma"] = l.gamma;
    j["operating_point"] = vector_to_json(l.operating_point);
    return j;
}

inline lin::UncertainLinearization linearization_from_json(const json& j) {
    lin::UncertainLinearization l;
    l.a_nominal = matrix_from_json(j.at("a_nominal"));
    l.b_nominal = matrix_from_json(j.at("b_nominal"));
    l.a_bound = matrix_from_json(j.at("a_bound"));
    l.b_bound = matrix_from_json(j.at("b_bound"));
    l.prob_per_row = j.at("prob_per_row").get<double>();
    l.joint_confidence = j.at("joint_confidence").get<double>();
    l.gamma = j.at("gamma").get<double>();
    l.operating_point = vector_from_json(j.at("operating_point"));
    return l;
}

inline json norm_bounded_to_json(const lin::NormBoundedSystem& s) {
    json j;
    j["a_nominal"] = matrix_to_json(s.a_nominal);
    j["b_nominal"] = matrix_to_json(s.b_nominal);
    j["h"] = matrix_to_json(s.h);
    j["e"] = matrix_to_json(s.e);
    j["f"] = matrix_to_json(s.f);
    return j;
}

inline lin::NormBoundedSystem norm_bounded_from_json(const json& j) {
    lin::NormBoundedSystem s;
    s.a_nominal = matrix_from_json(j.at("a_nominal"));
    s.b_nominal = matrix_from_json(j.at("b_nominal"));
    s.h = matrix_from_json(j.at("h"));
    s.e = matrix_from_json(j.at("e"));
    s.f = matrix_from_json(j.at("f"));
    return s;
}

// ---------------------------------------------------------------------------
// LMI problems (sparse triplets) and solver results
// ---------------------------------------------------------------------------

inline json affine_lmi_to_json(const lmi::AffineLmi& c) {
    json j;
    j["size"] = c.size();
    j["sense"] = c.sense() == lmi::LmiSense::StrictNegative ? "strict_negative"
                                                            : "positive_semidefinite";
    j["strict"] = c.strict();
    j["scale"] = c.scale();
    json constant = json::array();
    for (Eigen::Index r = 0; r < c.size(); ++r)
        for (Eigen::Index col = 0; col <= r; ++col)
            if (c.constant()(r, col) != 0.0)
                constant.push_back({r, col, c.constant()(r, col)});
    j["constant"] = std::move(constant);
    json coeffs = json::object();
    for (const auto& [var, list] : c.coefficients()) {
        json triplets = json::array();
        for (const auto& t : list) triplets.push_back({t.row, t.col, t.value});
        coeffs[std::to_string(var)] = std::move(triplets);
    }
    j["coefficients"] = std::move(coeffs);
    return j;
}

inline lmi::AffineLmi affine_lmi_from_json(const json& j) {
    lmi::LmiSense sense = j.at("sense").get<std::string>() == "strict_negative"
                              ? lmi::LmiSense::StrictNegative
                              : lmi::LmiSense::PositiveSemidefinite;
    lmi::AffineLmi c(j.at("size").get<Eigen::Index>(), sense, j.at("strict").get<bool>());
    for (const auto& t : j.at("constant"))
        c.add_const(t[0].get<Eigen::Index>(), t[1].get<Eigen::Index>(), t[2].get<double>());
    for (const auto& [key, triplets] : j.at("coefficients").items()) {
        Eigen::Index var = std::stol(key);
        for (const auto& t : triplets)
            c.add_coeff(var, t[0].get<Eigen::Index>(), t[1].get<Eigen::Index>(),
                        t[2].get<double>());
    }
    return c;
}

inline json problem_to_json(const sdp::SdpProblem& p) {
    json j;
    j["n"] = p.layout.n();
    j["m"] = p.layout.m();
    j["has_eta"] = p.layout.has_eta();
    json cons = json::array();
    for (const auto& c : p.constraints) cons.push_back(affine_lmi_to_json(c));
    j["constraints"] = std::move(cons);
    json obj = json::array();
    for (const auto& [k, w] : p.objective) obj.push_back({k, w});
    j["objective"] = std::move(obj);
    return j;
}

inline sdp::SdpProblem problem_from_json(const json& j) {
    sdp::SdpProblem p;
    p.layout = lmi::DecisionLayout(j.at("n").get<Eigen::Index>(), j.at("m").get<Eigen::Index>(),
                                   j.at("has_eta").get<bool>());
    for (const auto& c : j.at("constraints")) p.constraints.push_back(affine_lmi_from_json(c));
    for (const auto& o : j.at("objective"))
        p.objective.emplace_back(o[0].get<Eigen::Index>(), o[1].get<double>());
    return p;
}

inline json solve_result_to_json(const sdp::SolveResult& r) {
    json j;
    j["status"] = sdp::to_string(r.status);
    j["values"] = vector_to_json(r.values);
    j["margins"] = r.margins;
    if (r.objective_value) j["objective_value"] = *r.objective_value;
    j["newton_iterations"] = r.newton_iterations;
    j["slack"] = r.slack;
    return j;
}

inline sdp::SolveResult solve_result_from_json(const json& j) {
    sdp::SolveResult r;
    std::string s = j.at("status").get<std::string>();
    r.status = s == "optimal"    ? sdp::SolveStatus::Optimal
               : s == "feasible" ? sdp::SolveStatus::Feasible
               : s == "infeasible" ? sdp::SolveStatus::Infeasible
                                   : sdp::SolveStatus::IterationLimit;
    r.values = vector_from_json(j.at("values"));
    r.margins = j.at("margins").get<std::vector<double>>();
    if (j.contains("objective_value")) r.objective_value = j.at("objective_value").get<double>();
    r.newton_iterations = j.at("newton_iterations").get<int>();
    r.slack = j.at("slack").get<double>();
    return r;
}

inline json design_to_json(const sdp::ControllerDesign& d) {
    json j;
    j["gain"] = matrix_to_json(d.gain);
    j["t_s_max"] = d.t_s_max;
    j["min_frequency_hz"] = d.min_frequency;
    j["eps1"] = d.eps_used.first;
    j["eps2"] = d.eps_used.second;
    j["certificate"] = solve_result_to_json(d.certificate);
    return j;
}

inline sdp::ControllerDesign design_from_json(const json& j) {
    sdp::ControllerDesign d;
    d.gain = matrix_from_json(j.at("gain"));
    d.t_s_max = j.at("t_s_max").get<double>();
    d.min_frequency = j.at("min_frequency_hz").get<double>();
    d.eps_used = {j.at("eps1").get<double>(), j.at("eps2").get<double>()};
    d.certificate = solve_result_from_json(j.at("certificate"));
    return d;
}

// ---------------------------------------------------------------------------
// file helpers
// ---------------------------------------------------------------------------

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return json::parse(is);
}

} // namespace sdc::io
