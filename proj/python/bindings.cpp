// Python bindings: in-process scoring and replay for a trainer loop.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "spdiv/harness.hpp"
#include "spdiv/memory.hpp"
#include "spdiv/metrics.hpp"
#include "spdiv/repetition.hpp"
#include "spdiv/reward.hpp"

namespace py = pybind11;
using namespace spdiv;

namespace {

std::string config_value(const py::handle& v) {
    if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
    if (py::isinstance<py::int_>(v)) return std::to_string(v.cast<long long>());
    if (py::isinstance<py::float_>(v)) return format_number(v.cast<double>());
    if (py::isinstance<py::str>(v)) return v.cast<std::string>();
    throw ConfigError("config", "config values must be bool, int, float or str");
}

Config to_config(const std::optional<py::dict>& d) {
    RawConfig raw;
    if (d)
        for (auto [k, v] : *d) raw[k.cast<std::string>()] = config_value(v);
    return validate_config(raw);
}

py::dict config_dict(const Config& cfg) {
    py::dict out;
    for (const auto& [k, v] : to_raw(cfg)) {
        if (v == "true" || v == "false")
            out[py::str(k)] = v == "true";
        else if (k == "similarity_mode")
            out[py::str(k)] = v;
        else if (k == "solver_samples" || k == "batch_size")
            out[py::str(k)] = std::stoi(v);
        else
            out[py::str(k)] = std::stod(v);
    }
    return out;
}

py::dict reward_dict(const std::string& id, const RewardBreakdown& r) {
    py::dict d;
    d["id"] = id;
    d["uncertainty"] = r.uncertainty;
    d["p_rep"] = r.p_rep;
    d["p_max"] = r.p_max;
    d["p_mean"] = r.p_mean;
    d["p_map"] = r.p_map;
    d["total"] = r.total;
    return d;
}

template <typename T>
std::optional<T> opt_field(const py::dict& d, const char* key) {
    if (!d.contains(key) || d[key].is_none()) return std::nullopt;
    return d[key].cast<T>();
}

ScoreItem to_item(const py::handle& h, std::size_t index) {
    const auto d = h.cast<py::dict>();
    ScoreItem it;
    it.id = opt_field<std::string>(d, "id").value_or("item" + std::to_string(index));
    it.text = opt_field<std::string>(d, "text");
    it.code = opt_field<std::string>(d, "code");
    if (auto e = opt_field<std::vector<double>>(d, "embedding")) it.embedding = Embedding(*e);
    if (auto u = opt_field<double>(d, "uncertainty"))
        it.uncertainty = *u;
    else if (auto s = opt_field<double>(d, "consistency"))
        it.uncertainty = uncertainty_reward(*s);
    return it;
}

/// A config plus an optional bank. Single-threaded per session.
class Session {
public:
    Session(Config cfg, std::optional<MemoryBank> bank) : cfg_(std::move(cfg)), bank_(std::move(bank)) {}

    py::list score_batch(const py::list& items) {
        check_open();
        std::vector<ScoreItem> batch;
        for (std::size_t i = 0; i < items.size(); ++i) batch.push_back(to_item(items[i], i));
        if (batch.empty()) return py::list();
        if (cfg_.use_map && !bank_) throw Error("bank required");
        const MemoryBank empty;
        const auto rewards = spdiv::score_batch(batch, bank_ ? *bank_ : empty, cfg_);
        py::list out;
        for (std::size_t i = 0; i < batch.size(); ++i) out.append(reward_dict(batch[i].id, rewards[i]));
        return out;
    }

    std::vector<std::pair<std::string, std::string>> replay_sample(std::size_t n_current, std::uint64_t seed) {
        check_open();
        if (!bank_) throw Error("bank required");
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& r : spdiv::sample_replay(*bank_, n_current, cfg_, seed))
            out.emplace_back(r.question.text, *r.pseudo_label);
        return out;
    }

    py::dict config() const { return config_dict(cfg_); }
    std::size_t bank_size() const { return bank_ ? bank_->size() : 0; }
    bool has_bank() const { return bank_.has_value(); }
    void close() { closed_ = true; bank_.reset(); }
    bool closed() const { return closed_; }

private:
    void check_open() const {
        if (closed_) throw Error("session is closed");
    }

    Config cfg_;
    std::optional<MemoryBank> bank_;
    bool closed_ = false;
};

AnswerGroupSet groups_of(const std::vector<std::string>& responses) {
    return group_answers(make_rollout("q", responses));
}

}  // namespace

PYBIND11_MODULE(spdiv, m) {
    m.doc() = "Diversity-aware challenger rewards, memory bank queries and replay sampling.";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    auto bank_base = py::register_exception<BankFileError>(m, "BankFileError", base.ptr());
    py::register_exception<BankFormatError>(m, "BankFormatError", bank_base.ptr());
    py::register_exception<BankVersionError>(m, "BankVersionError", bank_base.ptr());
    py::register_exception<BankTruncatedError>(m, "BankTruncatedError", bank_base.ptr());
    py::register_exception<BankChecksumError>(m, "BankChecksumError", bank_base.ptr());

    py::class_<Session>(m, "Session")
        .def("score_batch", &Session::score_batch, py::arg("items"),
             "Reward breakdown per item. Items are dicts with text, embedding, code and "
             "uncertainty (or consistency).")
        .def("replay_sample", &Session::replay_sample, py::arg("n_current"), py::arg("seed"),
             "(text, label) pairs sampled from the bank for a current set of n_current.")
        .def_property_readonly("config", &Session::config)
        .def_property_readonly("bank_size", &Session::bank_size)
        .def_property_readonly("has_bank", &Session::has_bank)
        .def_property_readonly("closed", &Session::closed)
        .def("close", &Session::close)
        .def("__enter__", [](Session& s) -> Session& { return s; }, py::return_value_policy::reference)
        .def("__exit__", [](Session& s, py::args) { s.close(); });

    m.def(
        "open_session",
        [](std::optional<py::dict> config, std::optional<std::string> bank_path) {
            std::optional<MemoryBank> bank;
            if (bank_path) bank = load_bank(*bank_path);
            return Session(to_config(config), std::move(bank));
        },
        py::arg("config") = py::none(), py::arg("bank_path") = py::none());
    m.def("close", [](Session& s) { s.close(); }, py::arg("session"));

    m.def("default_config", [] { return config_dict(Config{}); });
    m.def("validate_config", [](py::dict d) { return config_dict(to_config(d)); }, py::arg("config"));

    m.def("extract_answer", [](const std::string& s) { return extract_answer(s); }, py::arg("solution"));
    m.def("consistency_score", [](const std::vector<std::string>& r) { return consistency_score(groups_of(r)); },
          py::arg("responses"));
    m.def("pseudo_label", [](const std::vector<std::string>& r) { return pseudo_label(groups_of(r)); },
          py::arg("responses"));
    m.def("uncertainty_reward", &uncertainty_reward, py::arg("consistency"));
    m.def("is_valid", [](double s, std::optional<py::dict> c) { return is_valid(s, to_config(c)); },
          py::arg("consistency"), py::arg("config") = py::none());
    m.def("bleu_distance", [](const std::string& a, const std::string& b) { return bleu_distance(a, b); },
          py::arg("a"), py::arg("b"));
    m.def(
        "cluster",
        [](const std::vector<std::vector<double>>& d, double threshold) {
            SquareMatrix mat(d.size());
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (d[i].size() != d.size()) throw DimensionError("distance matrix must be square");
                for (std::size_t j = 0; j < d.size(); ++j) mat(i, j) = d[i][j];
            }
            const auto a = spdiv::cluster(mat, threshold);
            return py::make_tuple(a.labels, repetition_penalty(a));
        },
        py::arg("distances"), py::arg("threshold") = 0.5,
        "(labels, penalties) from average-linkage clustering.");
    m.def("map_penalty",
          [](double p_max, double p_mean, std::optional<py::dict> c) { return map_penalty(p_max, p_mean, to_config(c)); },
          py::arg("p_max"), py::arg("p_mean"), py::arg("config") = py::none());
    m.def("replay_count", &replay_count, py::arg("n_current"), py::arg("rho"));
    m.def(
        "bank_info",
        [](const std::string& path) {
            const auto b = load_bank(path);
            py::dict d;
            d["size"] = b.size();
            d["dim"] = b.dim();
            d["watermark"] = b.watermark();
            return d;
        },
        py::arg("path"));
}
