#include "fdia/graph_attention.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace fdia {

ad::BoolArray neighborhood_mask(const Neighborhood& nbrs) {
    const auto n = static_cast<Eigen::Index>(nbrs.size());
    ad::BoolArray mask = ad::BoolArray::Constant(n, n, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = nbrs[static_cast<std::size_t>(i)];
        if (row.empty()) throw ValidationError("attention: node " + std::to_string(i) + " has an empty neighborhood");
        for (int j : row) {
            if (j < 0 || j >= n)
                throw ValidationError("attention: node " + std::to_string(i) + " lists unknown neighbor " +
                                      std::to_string(j));
            mask(i, j) = true;
        }
    }
    return mask;
}

Neighborhood fully_connected(Eigen::Index n, bool include_self) {
    Neighborhood out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (include_self || i != j) out[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
    return out;
}

Eigen::MatrixXd attention_coefficients(ad::GraphAttention& layer, const Eigen::MatrixXd& features,
                                       const Neighborhood& nbrs) {
    if (static_cast<Eigen::Index>(nbrs.size()) != features.rows())
        throw ValidationError("attention: neighborhood map covers " + std::to_string(nbrs.size()) +
                              " nodes, features have " + std::to_string(features.rows()));
    const auto mask = neighborhood_mask(nbrs);
    ad::Tape tape;
    return layer.coefficients(tape, tape.constant(features), mask).value();
}

Eigen::MatrixXd attention_aggregate(ad::GraphAttention& layer, const Eigen::MatrixXd& features,
                                    const Eigen::MatrixXd& alpha) {
    if (alpha.rows() != features.rows() || alpha.cols() != features.rows())
        throw ValidationError("attention: alpha must be square over the feature rows");
    ad::Tape tape;
    return layer.aggregate(tape, layer.transform(tape, tape.constant(features)), tape.constant(alpha)).value();
}

LearnedGraph learn_graph_topk(const Eigen::MatrixXd& emb, int k) {
    const Eigen::Index n = emb.rows();
    if (k < 1 || k >= n)
        throw ValidationError("graph: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n - 1) + "]");
    LearnedGraph g;
    const Eigen::VectorXd norms = emb.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i)
        if (norms(i) == 0.0) g.zero_norm.push_back(static_cast<int>(i));
    g.similarity.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            g.similarity(i, j) = (norms(i) == 0.0 || norms(j) == 0.0)
                                     ? -1.0
                                     : emb.row(i).dot(emb.row(j)) / (norms(i) * norms(j));
    g.neighbors.resize(static_cast<std::size_t>(n));
    std::vector<int> order;
    for (Eigen::Index i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < static_cast<int>(n); ++j)
            if (j != i) order.push_back(j);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return g.similarity(i, a) > g.similarity(i, b); });
        g.neighbors[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
    }
    return g;
}

Neighborhood line_topology(const BusNetwork& net, const std::vector<int>& sensor_ids) {
    Neighborhood out(sensor_ids.size());
    auto pos = [&](int bus) {
        auto it = std::find(sensor_ids.begin(), sensor_ids.end(), bus);
        return it == sensor_ids.end() ? -1 : static_cast<int>(it - sensor_ids.begin());
    };
    for (const auto& l : net.lines) {
        const int a = pos(l.from), b = pos(l.to);
        if (a < 0 || b < 0 || a == b) continue;
        out[static_cast<std::size_t>(a)].push_back(b);
        out[static_cast<std::size_t>(b)].push_back(a);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& v = out[i];
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        if (v.empty()) v.push_back(static_cast<int>(i));  // isolated sensor attends to itself
    }
    return out;
}

void write_adjacency_csv(const std::filesystem::path& path, const std::vector<int>& sensor_ids,
                         const LearnedGraph& graph) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sensor,neighbor,similarity\n";
    char buf[64];
    for (std::size_t i = 0; i < graph.neighbors.size(); ++i)
        for (int j : graph.neighbors[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", graph.similarity(static_cast<Eigen::Index>(i), j));
            out << sensor_ids[i] << ',' << sensor_ids[static_cast<std::size_t>(j)] << ',' << buf << '\n';
        }
}

}  // namespace fdia
