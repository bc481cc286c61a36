#pragma once

#include <memory>
#include <span>
#include <vector>

#include "cmbclean/healpix.hpp"

namespace cmbclean::graph {

using healpix::Resolution;

// Weighted adjacency of the HEALPix pixel graph in fixed-order neighbor-list
// form (CSR with ascending column indices per row). Immutable once built.
struct SphereGraph {
    Resolution res;
    std::vector<std::int32_t> row_ptr;
    std::vector<std::int32_t> col;
    std::vector<double> weight;
    std::vector<double> degree;  // degree[i] = sum_j w_ij
    double mean_neighbor_distance = 0.0;

    // Gaussian kernel weights w_ij = exp(-d_ij^2 / (2 dbar^2)) on great-circle
    // distance, dbar = mean neighbor distance at this resolution. With
    // gaussian_weights = false all edges get weight 1 (ablation mode).
    static SphereGraph build(Resolution res, bool gaussian_weights = true);

    std::int64_t n_nodes() const { return std::int64_t(degree.size()); }
    std::int64_t n_edges() const { return std::int64_t(col.size()) / 2; }
};

class LaplacianOperator {
  public:
    enum class Form { combinatorial, normalized_scaled };

    // Combinatorial form L = D - A.
    static LaplacianOperator combinatorial(std::shared_ptr<const SphereGraph> graph);

    Form form() const { return form_; }
    double lambda_max() const;
    const SphereGraph& graph() const { return *graph_; }
    std::int64_t size() const { return graph_->n_nodes(); }

    // y = L x (combinatorial) or y = (2/lambda_max) L x - x (normalized).
    // Fixed per-row summation order; bitwise reproducible.
    void apply(std::span<const double> x, std::span<double> y) const;

    friend LaplacianOperator normalize(const LaplacianOperator& L, double lambda_max);

  private:
    LaplacianOperator(std::shared_ptr<const SphereGraph> graph, Form form, double lambda_max);

    std::shared_ptr<const SphereGraph> graph_;
    Form form_;
    double lambda_max_ = 0.0;
};

LaplacianOperator laplacian(std::shared_ptr<const SphereGraph> graph);

// Largest-eigenvalue estimate by power iteration on the Rayleigh quotient;
// the returned value never exceeds the true lambda_max. Throws if the
// relative change fails to drop below tol within max_iters.
double estimate_lambda_max(const LaplacianOperator& L, double tol = 1e-9, int max_iters = 10000);

// L_hat = (2 / lambda_max) L - I, applied lazily.
LaplacianOperator normalize(const LaplacianOperator& L, double lambda_max);

// Combinatorial Laplacian, lambda_max estimation inflated by 1% for spectral
// containment, normalized to [-1, 1].
LaplacianOperator normalized_laplacian(std::shared_ptr<const SphereGraph> graph);

struct ChebCoeffs {
    std::vector<double> theta;  // theta[k], k = 0..K

    int order() const { return int(theta.size()) - 1; }
};

// y = sum_k theta_k T_k(L_hat) x per channel, via the three-term recurrence.
// x and y are channel-major (channels x n_pixels). O(K * n_edges) per channel.
void cheb_apply(const LaplacianOperator& lhat, const ChebCoeffs& coeffs,
                std::span<const double> x, std::span<double> y, int channels = 1);

}  // namespace cmbclean::graph
