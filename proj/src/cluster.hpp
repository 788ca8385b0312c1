#pragma once

// Patient clustering: CLS-embedding extraction, PCA reduction behind a
// neighborhood-parameter interface, density clustering with noise, and the
// per-cluster analytics tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "journey.hpp"
#include "model.hpp"

namespace exbehrt {

struct EmbeddingMatrix {
    std::vector<std::string> patient_ids;
    Mat values; // patients x d_model, row order matches patient_ids
};

// One row per journey: the final hidden state at column 0 of the grid.
EmbeddingMatrix extract_embeddings(const Checkpoint& checkpoint,
                                   const std::vector<PatientJourney>& journeys);

// Neighborhood parameters are accepted so a manifold reducer can be swapped
// in; the PCA reference implementation ignores them.
struct ReduceParams {
    int target_dim = 10;
    int neighborhood_size = 100;
    double min_distance = 0.0;
};

struct ReduceResult {
    Mat projected;                          // n x target_dim
    std::vector<double> explained_variance; // descending, length target_dim
    Mat components;                         // d x target_dim, unit columns
    std::vector<double> mean;               // column means of the input
};

// Centered PCA, top components by eigenvalue, deterministic sign (largest
// magnitude loading positive). Components beyond the data rank project to
// zero. The seed is unused here but part of the reducer interface.
ReduceResult reduce(const Mat& matrix, const ReduceParams& params, uint64_t seed);

// DBSCAN with epsilon picked from the knee of the sorted k-distance curve
// (k = min_samples). Returns one label per row, -1 for noise. Clusters
// smaller than min_cluster_size dissolve into noise; surviving ids are
// renumbered 0..K-1 in order of first appearance.
std::vector<int> density_cluster(const Mat& matrix, int min_cluster_size, int min_samples);

struct CodeShare {
    std::string code;
    double in_cluster = 0.0; // fraction of cluster patients carrying it
    double cohort = 0.0;     // fraction of all patients carrying it
};

struct ClusterStats {
    int id = 0;
    int size = 0;
    std::string modal_diagnosis;
    double in_cluster_fraction = 0.0; // cluster patients with modal diagnosis / size
    double purity = 0.0;              // cluster patients with modal diagnosis / cohort carriers
    std::string modal_concept;        // across diagnosis/procedure/lab channels
    std::string modal_concept_channel;
    std::vector<CodeShare> top_diagnoses;  // up to 3 passing the +5% filter
    std::vector<CodeShare> top_procedures;
    std::vector<CodeShare> top_labs;
    double median_age = 0.0;        // age at first visit, lower-median
    double median_birth_year = 0.0; // synthetic calendar, day 0 = year 2010
    std::optional<double> median_bmi;
    double male_fraction = 0.0;
    double death_rate = 0.0;
    double cancer_span_fraction = 0.0; // mean (last C date - first C date) / journey span
    double cancer_free_fraction = 0.0; // cancer patients with >= 2 visits after last C visit
};

struct ClusterReport {
    std::vector<std::string> patient_ids;
    std::vector<int> assignments;
    Mat coords2d; // n x 2 for plotting; empty until the pipeline fills it
    int noise_count = 0;
    std::vector<ClusterStats> clusters;
};

// Pure function of (assignments, journeys); assignments[i] labels
// journeys[i]. Noise patients are counted but excluded from cluster stats.
ClusterReport cluster_analytics(const std::vector<int>& assignments,
                                const std::vector<PatientJourney>& journeys);

struct SubclusterResult {
    std::vector<std::string> patient_ids; // members of the parent cluster
    std::vector<int> assignments;         // nested labels over those members
    ClusterReport report;
};

// Second clustering pass over one cluster's members only.
SubclusterResult subcluster(const EmbeddingMatrix& embeddings, const std::vector<int>& assignments,
                            int cluster_id, const std::vector<PatientJourney>& journeys,
                            const ReduceParams& params, int min_cluster_size, int min_samples,
                            uint64_t seed);

std::string cluster_report_to_json(const ClusterReport& report);

// Columns: cluster, patients, most occurring code, in-cluster, purity.
std::string cluster_table_to_csv(const ClusterReport& report);

} // namespace exbehrt
