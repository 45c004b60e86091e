#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace regmkt {

/// Time-indexed regression data: one row per step, one column per raw input
/// feature. Timestamps and gap flags are populated by the CSV pipeline and
/// left empty for synthetic data.
struct Dataset {
    Eigen::MatrixXd inputs;           // N x d
    Eigen::VectorXd targets;          // N
    std::vector<int> feature_index;   // ordered set I, normally 0..d-1
    std::vector<std::int64_t> timestamps;  // epoch seconds, optional
    std::vector<std::uint8_t> gap_flag;    // row follows a gap, optional

    Dataset() = default;
    Dataset(Eigen::MatrixXd x, Eigen::VectorXd y)
        : inputs(std::move(x)), targets(std::move(y)) {
        feature_index.resize(static_cast<std::size_t>(inputs.cols()));
        std::iota(feature_index.begin(), feature_index.end(), 0);
        validate();
    }

    Eigen::Index rows() const { return inputs.rows(); }
    Eigen::Index cols() const { return inputs.cols(); }

    void validate() const {
        if (inputs.rows() != targets.size())
            throw std::invalid_argument("dataset: inputs and targets share the time index");
        if (!inputs.allFinite() || !targets.allFinite())
            throw std::invalid_argument("dataset: non-finite entries");
        if (!timestamps.empty() && static_cast<Eigen::Index>(timestamps.size()) != inputs.rows())
            throw std::invalid_argument("dataset: timestamp length mismatch");
    }
};

}  // namespace regmkt
