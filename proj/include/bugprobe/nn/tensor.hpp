#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "bugprobe/errors.hpp"

namespace bugprobe::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Dense rank-1/rank-2 value. Data is row-major; vectors are stored as
// single-column matrices with rank 1.
template <typename S>
struct Tensor {
    Mat<S> m;
    int rank = 2;

    Tensor() = default;

    static Tensor vector(Eigen::Index n) {
        Tensor t;
        t.m = Mat<S>::Zero(n, 1);
        t.rank = 1;
        return t;
    }

    static Tensor matrix(Eigen::Index rows, Eigen::Index cols) {
        Tensor t;
        t.m = Mat<S>::Zero(rows, cols);
        t.rank = 2;
        return t;
    }

    static Tensor from_vector(std::initializer_list<S> vals) {
        Tensor t = vector(static_cast<Eigen::Index>(vals.size()));
        Eigen::Index i = 0;
        for (S v : vals) t.m(i++, 0) = v;
        return t;
    }

    Eigen::Index size() const { return m.size(); }

    std::vector<std::int64_t> shape() const {
        if (rank == 1) return {m.rows()};
        return {m.rows(), m.cols()};
    }

    bool same_shape(const Tensor& other) const {
        return rank == other.rank && m.rows() == other.m.rows() && m.cols() == other.m.cols();
    }

    bool all_finite() const { return m.allFinite(); }

    void set_zero() { m.setZero(); }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        auto s = shape();
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }
};

template <typename S>
inline void check_finite(const Mat<S>& m, const char* what) {
    if (!m.allFinite()) {
        std::ostringstream os;
        os << "non-finite values in " << what << " (" << m.rows() << "x" << m.cols() << ")";
        throw NumericError(os.str());
    }
}

}  // namespace bugprobe::nn
