#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace mcm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

/// T frames of J joints, stored as a T x (3J) matrix (x, y, z per joint).
struct JointPositions {
    int frames = 0;
    int joints = 0;
    Mat data;

    JointPositions() = default;
    JointPositions(int t, int j) : frames(t), joints(j), data(Mat::Zero(t, 3 * j)) {}

    double& at(int t, int j, int axis) { return data(t, 3 * j + axis); }
    double at(int t, int j, int axis) const { return data(t, 3 * j + axis); }
    Eigen::Vector3d joint(int t, int j) const { return data.row(t).segment<3>(3 * j).transpose(); }
};

}  // namespace mcm
