#include "tensor.hpp"

#include <cmath>

#include "error.hpp"

namespace exbehrt {

void matmul_acc(const Mat& A, const Mat& B, Mat& C) {
    if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols)
        throw internal_error("matmul shape mismatch");
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row(i);
        double* crow = C.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = B.row(k);
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

void matmul_nt_acc(const Mat& A, const Mat& B, Mat& C) {
    if (A.cols != B.cols || C.rows != A.rows || C.cols != B.rows)
        throw internal_error("matmul_nt shape mismatch");
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row(i);
        double* crow = C.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* brow = B.row(j);
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            crow[j] += s;
        }
    }
}

void matmul_tn_acc(const Mat& A, const Mat& B, Mat& C) {
    if (A.rows != B.rows || C.rows != A.cols || C.cols != B.cols)
        throw internal_error("matmul_tn shape mismatch");
    for (int k = 0; k < A.rows; ++k) {
        const double* arow = A.row(k);
        const double* brow = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = C.row(i);
            for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

bool all_finite(const Mat& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace exbehrt
