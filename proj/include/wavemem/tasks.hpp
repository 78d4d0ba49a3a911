#pragma once

// Task registry: the canonical repeat-copy task, the Fibonacci reference
// system, sign-composed "compose copy" tasks defined by any +-1/0 matrix, and
// a seeded random-task generator. Tasks serialize to a small JSON document.

#include "wavemem/hds.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace wavemem {

struct TaskDef {
    std::string name;
    HdsSpec spec;
};

/// Repeat copy (T1): the next state is the state s steps back, so the input
/// block repeats forever. Sign-composed, which for a pure copy coincides with
/// the linear map.
inline TaskDef repeat_copy_task(Index s, Index d) {
    Mat f = Mat::Zero(d, s * d);
    f.leftCols(d) = Mat::Identity(d, d);
    TaskDef task;
    task.name = "repeat-copy";
    task.spec = HdsSpec{d, s, BoundaryFn::signed_linear(std::move(f)), Domain::Binary};
    task.spec.validate();
    return task;
}

/// Generalized Fibonacci: real-valued, next state = sum of the last s states.
inline TaskDef fibonacci_task(Index s, Index d) {
    TaskDef task;
    task.name = "fibonacci";
    task.spec = HdsSpec{d, s, BoundaryFn::sum(), Domain::Real};
    task.spec.validate();
    return task;
}

/// Compose-copy task from an explicit d x (s*d) matrix with entries in
/// {-1, 0, +1}; every row must touch at least one coordinate.
inline TaskDef compose_task(const Mat& f, std::string name = "compose") {
    for (Index r = 0; r < f.rows(); ++r) {
        bool nonzero = false;
        for (Index c = 0; c < f.cols(); ++c) {
            const double v = f(r, c);
            if (v != 0.0 && v != 1.0 && v != -1.0) {
                throw std::invalid_argument("compose_task: entries must be in {-1, 0, +1}");
            }
            nonzero = nonzero || v != 0.0;
        }
        if (!nonzero) throw std::invalid_argument("compose_task: zero row in composition matrix");
    }
    const Index d = f.rows();
    if (d < 1 || f.cols() % d != 0) throw std::invalid_argument("compose_task: F must be d x (s*d)");
    TaskDef task;
    task.name = std::move(name);
    task.spec = HdsSpec{d, f.cols() / d, BoundaryFn::signed_linear(f), Domain::Binary};
    task.spec.validate();
    return task;
}

/// Seeded random compose-copy task: entries drawn uniformly from {-1, 0, +1}.
/// Rows are redrawn until they hold an odd number of nonzero entries - an odd
/// count of +-1 terms can never sum to zero, so sign() stays defined on every
/// binary state and trajectory generation cannot stall on resamples.
inline TaskDef random_compose_task(Index s, Index d, std::uint64_t seed) {
    Rng rng(seed);
    Mat f(d, s * d);
    for (Index r = 0; r < d; ++r) {
        for (;;) {
            Index nonzero = 0;
            for (Index c = 0; c < s * d; ++c) {
                const double v = static_cast<double>(static_cast<int>(rng.next_u64() % 3)) - 1.0;
                f(r, c) = v;
                nonzero += v != 0.0 ? 1 : 0;
            }
            if (nonzero % 2 == 1) break;
        }
    }
    return compose_task(f, "random-compose-" + std::to_string(seed));
}

inline nlohmann::json task_to_json(const TaskDef& task) {
    nlohmann::json j;
    j["name"] = task.name;
    j["d"] = task.spec.d;
    j["s"] = task.spec.s;
    j["domain"] = task.spec.domain == Domain::Binary ? "binary" : "real";

    nlohmann::json b;
    auto matrix_rows = [](const Mat& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    switch (task.spec.boundary.kind) {
    case BoundaryFn::Kind::Sum:
        b["variant"] = "sum";
        break;
    case BoundaryFn::Kind::Linear:
        b["variant"] = "linear";
        b["matrix"] = matrix_rows(task.spec.boundary.f);
        break;
    case BoundaryFn::Kind::SignedLinear:
        b["variant"] = "signed_linear";
        b["matrix"] = matrix_rows(task.spec.boundary.f);
        break;
    case BoundaryFn::Kind::SelfAttention:
        b["variant"] = "self_attention";
        b["w_k"] = matrix_rows(task.spec.boundary.attn.w_k);
        b["w_q"] = matrix_rows(task.spec.boundary.attn.w_q);
        b["w_v"] = matrix_rows(task.spec.boundary.attn.w_v);
        b["temperature"] = task.spec.boundary.attn.temperature;
        break;
    }
    j["boundary"] = std::move(b);
    return j;
}

inline TaskDef task_from_json(const nlohmann::json& j) {
    auto parse_matrix = [](const nlohmann::json& rows) {
        if (!rows.is_array() || rows.empty()) throw std::invalid_argument("task JSON: bad matrix");
        const Index r = static_cast<Index>(rows.size());
        const Index c = static_cast<Index>(rows.at(0).size());
        Mat m(r, c);
        for (Index i = 0; i < r; ++i) {
            const auto& row = rows.at(static_cast<std::size_t>(i));
            if (static_cast<Index>(row.size()) != c) throw std::invalid_argument("task JSON: ragged matrix");
            for (Index k = 0; k < c; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
        }
        return m;
    };

    TaskDef task;
    task.name = j.at("name").get<std::string>();
    task.spec.d = j.at("d").get<Index>();
    task.spec.s = j.at("s").get<Index>();
    const std::string domain = j.at("domain").get<std::string>();
    if (domain == "binary") {
        task.spec.domain = Domain::Binary;
    } else if (domain == "real") {
        task.spec.domain = Domain::Real;
    } else {
        throw std::invalid_argument("task JSON: domain must be 'binary' or 'real'");
    }

    const auto& b = j.at("boundary");
    const std::string variant = b.at("variant").get<std::string>();
    if (variant == "sum") {
        task.spec.boundary = BoundaryFn::sum();
    } else if (variant == "linear") {
        task.spec.boundary = BoundaryFn::linear(parse_matrix(b.at("matrix")));
    } else if (variant == "signed_linear") {
        task.spec.boundary = BoundaryFn::signed_linear(parse_matrix(b.at("matrix")));
    } else if (variant == "self_attention") {
        SbcParams p;
        p.w_k = parse_matrix(b.at("w_k"));
        p.w_q = parse_matrix(b.at("w_q"));
        p.w_v = parse_matrix(b.at("w_v"));
        p.temperature = b.value("temperature", 1.0);
        task.spec.boundary = BoundaryFn::self_attention(std::move(p));
    } else {
        throw std::invalid_argument("task JSON: unknown boundary variant '" + variant + "'");
    }
    task.spec.validate();
    return task;
}

/// Built-in registry lookup. `seed` only matters for "random-compose".
inline std::optional<TaskDef> builtin_task(const std::string& name, Index s, Index d,
                                           std::uint64_t seed = 0) {
    if (name == "repeat-copy") return repeat_copy_task(s, d);
    if (name == "fibonacci") return fibonacci_task(s, d);
    if (name == "random-compose") return random_compose_task(s, d, seed);
    return std::nullopt;
}

} // namespace wavemem
