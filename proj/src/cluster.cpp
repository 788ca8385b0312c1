#include "cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "autograd.hpp"
#include "error.hpp"

namespace exbehrt {

EmbeddingMatrix extract_embeddings(const Checkpoint& checkpoint,
                                   const std::vector<PatientJourney>& journeys) {
    EmbeddingMatrix out;
    out.values = Mat(static_cast<int>(journeys.size()), checkpoint.params.config.d_model);
    ModelParams params = clone_params(checkpoint.params);
    for (size_t i = 0; i < journeys.size(); ++i) {
        const SlotGrid grid = encode(journeys[i], checkpoint.vocab, checkpoint.encoder);
        Graph g;
        const EncodeResult er = encode_grid(g, params, grid);
        const Mat& hidden = g.value(er.hidden);
        for (int j = 0; j < out.values.cols; ++j)
            out.values.at(static_cast<int>(i), j) = hidden.at(0, j);
        out.patient_ids.push_back(journeys[i].patient_id);
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// eigenvalues in `eig` and eigenvectors as columns of `vec`.
void jacobi_eigen(Mat a, std::vector<double>& eig, Mat& vec) {
    const int n = a.rows;
    vec = Mat(n, n);
    for (int i = 0; i < n; ++i) vec.at(i, i) = 1.0;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vec.at(i, p), viq = vec.at(i, q);
                    vec.at(i, p) = c * vip - s * viq;
                    vec.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    eig.assign(n, 0.0);
    for (int i = 0; i < n; ++i) eig[i] = a.at(i, i);
}

} // namespace

ReduceResult reduce(const Mat& matrix, const ReduceParams& params, uint64_t seed) {
    (void)seed;
    if (params.target_dim < 1) throw usage_error("reduce target dimension must be at least 1");
    if (params.target_dim >= matrix.cols)
        throw usage_error("reduce target dimension must be below the source dimension");
    for (double v : matrix.a)
        if (!std::isfinite(v)) throw usage_error("reduce input must be finite");

    const int n = matrix.rows, d = matrix.cols, k = params.target_dim;
    ReduceResult out;
    out.mean.assign(d, 0.0);
    out.projected = Mat(n, k);
    out.components = Mat(d, k);
    out.explained_variance.assign(k, 0.0);
    if (n == 0) return out;

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.mean[j] += matrix.at(i, j);
    for (double& m : out.mean) m /= n;

    Mat centered(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) centered.at(i, j) = matrix.at(i, j) - out.mean[j];

    Mat cov(d, d);
    const double norm = n > 1 ? 1.0 / (n - 1) : 1.0;
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < d; ++p) {
            const double cip = centered.at(i, p);
            if (cip == 0.0) continue;
            for (int q = p; q < d; ++q) cov.at(p, q) += cip * centered.at(i, q);
        }
    for (int p = 0; p < d; ++p)
        for (int q = p; q < d; ++q) {
            cov.at(p, q) *= norm;
            cov.at(q, p) = cov.at(p, q);
        }

    std::vector<double> eig;
    Mat vec;
    jacobi_eigen(cov, eig, vec);

    std::vector<int> order(d);
    for (int i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eig[a] > eig[b]; });

    double trace = 0.0;
    for (double e : eig) trace += std::max(e, 0.0);
    const double rank_tol = trace * 1e-12;

    for (int c = 0; c < k; ++c) {
        const int src = order[c];
        const double lambda = eig[src];
        // Rank-deficient trailing components project to zero rather than
        // onto numerically arbitrary directions.
        if (lambda <= rank_tol) {
            out.explained_variance[c] = 0.0;
            continue;
        }
        out.explained_variance[c] = lambda;
        int arg = 0;
        for (int j = 1; j < d; ++j)
            if (std::fabs(vec.at(j, src)) > std::fabs(vec.at(arg, src))) arg = j;
        const double sign = vec.at(arg, src) < 0.0 ? -1.0 : 1.0;
        for (int j = 0; j < d; ++j) out.components.at(j, c) = sign * vec.at(j, src);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += centered.at(i, j) * out.components.at(j, c);
            out.projected.at(i, c) = dot;
        }
    }
    return out;
}

namespace {

double sq_dist(const Mat& m, int i, int j) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) {
        const double d = m.at(i, c) - m.at(j, c);
        s += d * d;
    }
    return s;
}

// Epsilon from the sorted k-distance curve: the point furthest below the
// chord between the curve's endpoints.
double knee_epsilon(const Mat& m, int min_samples) {
    const int n = m.rows;
    if (n <= 1) return 0.0;
    std::vector<double> kdist(n);
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) row[j] = sq_dist(m, i, j);
        std::sort(row.begin(), row.end());
        // row[0] is the self distance; the min_samples-th closest point
        // counting self sits at index min_samples-1.
        const int idx = std::min(std::max(min_samples - 1, 1), n - 1);
        kdist[i] = std::sqrt(row[idx]);
    }
    std::sort(kdist.begin(), kdist.end());
    const double y0 = kdist.front(), y1 = kdist.back();
    if (y1 <= y0) return y0;
    int best = 0;
    double best_gap = -1.0;
    for (int i = 0; i < n; ++i) {
        const double chord = y0 + (y1 - y0) * (static_cast<double>(i) / (n - 1));
        const double gap = chord - kdist[i];
        if (gap > best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return kdist[best];
}

} // namespace

std::vector<int> density_cluster(const Mat& matrix, int min_cluster_size, int min_samples) {
    if (min_cluster_size < 1) throw usage_error("min_cluster_size must be at least 1");
    if (min_samples < 1) throw usage_error("min_samples must be at least 1");
    for (double v : matrix.a)
        if (!std::isfinite(v)) throw usage_error("density_cluster input must be finite");

    const int n = matrix.rows;
    std::vector<int> labels(n, -1);
    if (n == 0) return labels;

    const double eps = knee_epsilon(matrix, min_samples);
    const double eps_sq = eps * eps;

    std::vector<std::vector<int>> neighbors(n);
    std::vector<bool> core(n, false);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (sq_dist(matrix, i, j) <= eps_sq) neighbors[i].push_back(j);
        core[i] = static_cast<int>(neighbors[i].size()) >= min_samples;
    }

    int next = 0;
    std::vector<bool> queued(n, false);
    for (int i = 0; i < n; ++i) {
        if (labels[i] != -1 || !core[i]) continue;
        const int cid = next++;
        std::deque<int> frontier{i};
        queued[i] = true;
        while (!frontier.empty()) {
            const int p = frontier.front();
            frontier.pop_front();
            if (labels[p] != -1) continue;
            labels[p] = cid;
            if (!core[p]) continue; // border point: joined but not expanded
            for (int q : neighbors[p]) {
                if (labels[q] == -1 && !queued[q]) {
                    frontier.push_back(q);
                    queued[q] = true;
                }
            }
        }
        for (int p = 0; p < n; ++p) queued[p] = false;
    }

    // Dissolve undersized clusters, then renumber by first appearance.
    std::map<int, int> sizes;
    for (int l : labels)
        if (l >= 0) ++sizes[l];
    std::map<int, int> remap;
    for (int& l : labels) {
        if (l < 0) continue;
        if (sizes[l] < min_cluster_size) {
            l = -1;
            continue;
        }
        const auto it = remap.find(l);
        if (it == remap.end()) {
            const int dense = static_cast<int>(remap.size());
            remap.emplace(l, dense);
            l = dense;
        } else {
            l = it->second;
        }
    }
    return labels;
}

namespace {

constexpr double kSharedLift = 0.05; // in-cluster frequency must beat cohort by this

double lower_median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

std::set<std::string> patient_codes(const PatientJourney& j, Channel ch) {
    std::set<std::string> out;
    for (const auto& v : j.visits) {
        const auto& src = ch == Channel::Diagnosis ? v.diagnoses
                        : ch == Channel::Procedure ? v.procedures
                                                   : v.labs;
        out.insert(src.begin(), src.end());
    }
    return out;
}

struct CodeCounts {
    std::map<std::string, int> cohort;                 // patients carrying each code
    std::vector<std::set<std::string>> per_patient;    // code set per journey
};

CodeCounts count_codes(const std::vector<PatientJourney>& journeys, Channel ch) {
    CodeCounts cc;
    cc.per_patient.reserve(journeys.size());
    for (const auto& j : journeys) {
        auto codes = patient_codes(j, ch);
        for (const auto& c : codes) ++cc.cohort[c];
        cc.per_patient.push_back(std::move(codes));
    }
    return cc;
}

std::vector<CodeShare> top_shared(const CodeCounts& cc, const std::vector<size_t>& members,
                                  size_t cohort_n) {
    std::map<std::string, int> counts;
    for (size_t i : members)
        for (const auto& c : cc.per_patient[i]) ++counts[c];
    std::vector<CodeShare> shares;
    for (const auto& [code, cnt] : counts) {
        CodeShare s;
        s.code = code;
        s.in_cluster = static_cast<double>(cnt) / members.size();
        s.cohort = static_cast<double>(cc.cohort.at(code)) / cohort_n;
        if (s.in_cluster >= s.cohort + kSharedLift) shares.push_back(s);
    }
    std::sort(shares.begin(), shares.end(), [](const CodeShare& a, const CodeShare& b) {
        if (a.in_cluster != b.in_cluster) return a.in_cluster > b.in_cluster;
        return a.code < b.code;
    });
    if (shares.size() > 3) shares.resize(3);
    return shares;
}

// Modal code by patient count; ties resolve to the smaller code string.
std::pair<std::string, int> modal_code(const CodeCounts& cc, const std::vector<size_t>& members) {
    std::map<std::string, int> counts;
    for (size_t i : members)
        for (const auto& c : cc.per_patient[i]) ++counts[c];
    std::string best;
    int best_n = 0;
    for (const auto& [code, cnt] : counts) {
        if (cnt > best_n) {
            best = code;
            best_n = cnt;
        }
    }
    return {best, best_n};
}

bool is_cancer_code(const std::string& code) { return !code.empty() && code[0] == 'C'; }

} // namespace

ClusterReport cluster_analytics(const std::vector<int>& assignments,
                                const std::vector<PatientJourney>& journeys) {
    if (assignments.size() != journeys.size())
        throw usage_error("assignments must cover every journey");

    ClusterReport report;
    report.assignments = assignments;
    for (const auto& j : journeys) report.patient_ids.push_back(j.patient_id);

    std::map<int, std::vector<size_t>> members;
    for (size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] < 0)
            ++report.noise_count;
        else
            members[assignments[i]].push_back(i);
    }

    const CodeCounts diag = count_codes(journeys, Channel::Diagnosis);
    const CodeCounts proc = count_codes(journeys, Channel::Procedure);
    const CodeCounts lab = count_codes(journeys, Channel::Lab);
    const size_t cohort_n = journeys.size();

    for (const auto& [cid, idx] : members) {
        ClusterStats st;
        st.id = cid;
        st.size = static_cast<int>(idx.size());

        const auto [mdiag, mdiag_n] = modal_code(diag, idx);
        st.modal_diagnosis = mdiag;
        st.in_cluster_fraction = mdiag.empty() ? 0.0 : static_cast<double>(mdiag_n) / idx.size();
        st.purity = mdiag.empty() ? 0.0 : static_cast<double>(mdiag_n) / diag.cohort.at(mdiag);

        // Modal concept over all code channels.
        {
            const auto [mp, np] = modal_code(proc, idx);
            const auto [ml, nl] = modal_code(lab, idx);
            st.modal_concept = mdiag;
            st.modal_concept_channel = "diagnosis";
            int best = mdiag_n;
            if (np > best) {
                st.modal_concept = mp;
                st.modal_concept_channel = "procedure";
                best = np;
            }
            if (nl > best) {
                st.modal_concept = ml;
                st.modal_concept_channel = "lab";
            }
        }

        st.top_diagnoses = top_shared(diag, idx, cohort_n);
        st.top_procedures = top_shared(proc, idx, cohort_n);
        st.top_labs = top_shared(lab, idx, cohort_n);

        std::vector<double> ages, birth_years, bmis, spans;
        int males = 0, deaths = 0, cancer_patients = 0, cancer_free = 0;
        for (size_t i : idx) {
            const PatientJourney& j = journeys[i];
            const Visit& first = j.visits.front();
            ages.push_back(first.age);
            // Day 0 of the synthetic calendar is pinned to the year 2010.
            birth_years.push_back(2010.0 + std::floor(first.date / 365.0) - first.age);
            for (const auto& v : j.visits)
                if (v.bmi) {
                    bmis.push_back(*v.bmi);
                    break;
                }
            if (j.gender == Gender::M) ++males;
            if (j.deceased_day) ++deaths;

            int first_c = -1, last_c = -1;
            size_t last_c_visit = 0;
            for (size_t vi = 0; vi < j.visits.size(); ++vi) {
                for (const auto& d : j.visits[vi].diagnoses) {
                    if (!is_cancer_code(d)) continue;
                    if (first_c < 0) first_c = j.visits[vi].date;
                    last_c = j.visits[vi].date;
                    last_c_visit = vi;
                }
            }
            if (first_c >= 0) {
                ++cancer_patients;
                const int span = j.visits.back().date - j.visits.front().date;
                spans.push_back(span > 0 ? static_cast<double>(last_c - first_c) / span : 0.0);
                if (j.visits.size() - 1 - last_c_visit >= 2) ++cancer_free;
            }
        }
        st.median_age = lower_median(ages);
        st.median_birth_year = lower_median(birth_years);
        if (!bmis.empty()) st.median_bmi = lower_median(bmis);
        st.male_fraction = static_cast<double>(males) / idx.size();
        st.death_rate = static_cast<double>(deaths) / idx.size();
        if (!spans.empty()) {
            double s = 0.0;
            for (double v : spans) s += v;
            st.cancer_span_fraction = s / spans.size();
        }
        if (cancer_patients > 0)
            st.cancer_free_fraction = static_cast<double>(cancer_free) / cancer_patients;

        report.clusters.push_back(std::move(st));
    }
    return report;
}

SubclusterResult subcluster(const EmbeddingMatrix& embeddings, const std::vector<int>& assignments,
                            int cluster_id, const std::vector<PatientJourney>& journeys,
                            const ReduceParams& params, int min_cluster_size, int min_samples,
                            uint64_t seed) {
    if (assignments.size() != embeddings.patient_ids.size() || assignments.size() != journeys.size())
        throw usage_error("assignments must cover every embedded journey");

    std::vector<size_t> idx;
    for (size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == cluster_id) idx.push_back(i);
    if (idx.empty())
        throw usage_error("unknown cluster: no patient carries cluster id " + std::to_string(cluster_id));

    SubclusterResult out;
    Mat sub(static_cast<int>(idx.size()), embeddings.values.cols);
    std::vector<PatientJourney> sub_journeys;
    for (size_t r = 0; r < idx.size(); ++r) {
        for (int c = 0; c < sub.cols; ++c)
            sub.at(static_cast<int>(r), c) = embeddings.values.at(static_cast<int>(idx[r]), c);
        out.patient_ids.push_back(embeddings.patient_ids[idx[r]]);
        sub_journeys.push_back(journeys[idx[r]]);
    }

    ReduceParams rp = params;
    rp.target_dim = std::min(rp.target_dim, sub.cols - 1);
    const ReduceResult red = reduce(sub, rp, seed);
    out.assignments = density_cluster(red.projected, min_cluster_size, min_samples);
    out.report = cluster_analytics(out.assignments, sub_journeys);
    return out;
}

namespace {

void shares_json(std::ostringstream& os, const std::vector<CodeShare>& shares) {
    os << '[';
    for (size_t i = 0; i < shares.size(); ++i) {
        if (i) os << ", ";
        os << "{\"code\": \"" << shares[i].code << "\", \"in_cluster\": " << fmt(shares[i].in_cluster)
           << ", \"cohort\": " << fmt(shares[i].cohort) << '}';
    }
    os << ']';
}

} // namespace

std::string cluster_report_to_json(const ClusterReport& report) {
    std::ostringstream os;
    os << "{\n  \"noise_count\": " << report.noise_count << ",\n";
    os << "  \"patients\": [";
    for (size_t i = 0; i < report.patient_ids.size(); ++i) {
        if (i) os << ", ";
        os << "{\"id\": \"" << report.patient_ids[i] << "\", \"cluster\": " << report.assignments[i];
        if (report.coords2d.rows == static_cast<int>(report.patient_ids.size()))
            os << ", \"x\": " << fmt(report.coords2d.at(static_cast<int>(i), 0))
               << ", \"y\": " << fmt(report.coords2d.at(static_cast<int>(i), 1));
        os << '}';
    }
    os << "],\n  \"clusters\": [";
    for (size_t c = 0; c < report.clusters.size(); ++c) {
        const ClusterStats& st = report.clusters[c];
        if (c) os << ", ";
        os << "{\n    \"id\": " << st.id << ",\n    \"size\": " << st.size;
        os << ",\n    \"modal_diagnosis\": \"" << st.modal_diagnosis << '"';
        os << ",\n    \"in_cluster_fraction\": " << fmt(st.in_cluster_fraction);
        os << ",\n    \"purity\": " << fmt(st.purity);
        os << ",\n    \"modal_concept\": \"" << st.modal_concept << '"';
        os << ",\n    \"modal_concept_channel\": \"" << st.modal_concept_channel << '"';
        os << ",\n    \"top_diagnoses\": ";
        shares_json(os, st.top_diagnoses);
        os << ",\n    \"top_procedures\": ";
        shares_json(os, st.top_procedures);
        os << ",\n    \"top_labs\": ";
        shares_json(os, st.top_labs);
        os << ",\n    \"median_age\": " << fmt(st.median_age);
        os << ",\n    \"median_birth_year\": " << fmt(st.median_birth_year);
        os << ",\n    \"median_bmi\": " << (st.median_bmi ? fmt(*st.median_bmi) : "null");
        os << ",\n    \"male_fraction\": " << fmt(st.male_fraction);
        os << ",\n    \"death_rate\": " << fmt(st.death_rate);
        os << ",\n    \"cancer_span_fraction\": " << fmt(st.cancer_span_fraction);
        os << ",\n    \"cancer_free_fraction\": " << fmt(st.cancer_free_fraction) << "\n  }";
    }
    os << "]\n}\n";
    return os.str();
}

std::string cluster_table_to_csv(const ClusterReport& report) {
    std::ostringstream os;
    os << "cluster,patients,most_occurring_code,in_cluster,purity\n";
    for (const auto& st : report.clusters)
        os << st.id << ',' << st.size << ',' << st.modal_diagnosis << ','
           << fmt(st.in_cluster_fraction) << ',' << fmt(st.purity) << '\n';
    return os.str();
}

} // namespace exbehrt
