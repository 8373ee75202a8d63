#pragma once

#include "fdia/layers.hpp"
#include "fdia/network.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace fdia {

/// neighbors[i] = node indices attended to by node i.
using Neighborhood = std::vector<std::vector<int>>;

ad::BoolArray neighborhood_mask(const Neighborhood& nbrs);
Neighborhood fully_connected(Eigen::Index n, bool include_self = true);

/// Row i: softmax over j in N_i of leakyReLU(a^T [W h_i || W h_j]).
Eigen::MatrixXd attention_coefficients(ad::GraphAttention& layer, const Eigen::MatrixXd& features,
                                       const Neighborhood& nbrs);
/// h'_i = ReLU(sum_j alpha_ij W h_j).
Eigen::MatrixXd attention_aggregate(ad::GraphAttention& layer, const Eigen::MatrixXd& features,
                                    const Eigen::MatrixXd& alpha);

struct LearnedGraph {
    Neighborhood neighbors;
    Eigen::MatrixXd similarity;   ///< cosine; -1 for pairs involving a zero-norm embedding
    std::vector<int> zero_norm;   ///< nodes whose embedding vanished
};

/// Top-k by cosine similarity, self excluded, ties to the lower index.
LearnedGraph learn_graph_topk(const Eigen::MatrixXd& embeddings, int k);

/// Physical line graph over the given sensors (buses), for ablation runs.
Neighborhood line_topology(const BusNetwork& net, const std::vector<int>& sensor_ids);

/// CSV: sensor,neighbor,similarity
void write_adjacency_csv(const std::filesystem::path& path, const std::vector<int>& sensor_ids,
                         const LearnedGraph& graph);

}  // namespace fdia
