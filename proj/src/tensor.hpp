#pragma once

// Row-major 2-D matrices of 64-bit floats, plus the trainable-parameter
// wrapper shared by the autograd graph, the optimizer and the checkpointing
// code.

#include <cstddef>
#include <string>
#include <vector>

namespace exbehrt {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// C += A * B
void matmul_acc(const Mat& A, const Mat& B, Mat& C);
// C += A * B^T
void matmul_nt_acc(const Mat& A, const Mat& B, Mat& C);
// C += A^T * B
void matmul_tn_acc(const Mat& A, const Mat& B, Mat& C);

bool all_finite(const Mat& m);

// A trainable tensor. frozen_row marks a row excluded from every update
// (the PAD embedding row), keeping it exactly zero for the model's lifetime.
struct Param {
    Mat value;
    Mat grad;
    int frozen_row = -1;

    Param() = default;
    Param(int r, int c) : value(r, c), grad(r, c) {}
};

} // namespace exbehrt
