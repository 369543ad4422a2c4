#pragma once

#include <Eigen/Core>
#include <vector>

#include "eq/equalizers.hpp"

namespace eq::detail {

/// Strided 1-D cross-correlation with zero padding, cropped to the
/// template's nominal width. x is (C_in x W_in), weight[o] is (C_in x K).
Eigen::MatrixXd conv1d(const Eigen::MatrixXd& x,
                       const std::vector<Eigen::MatrixXd>& weight,
                       const Eigen::ArrayXd& bias, int stride, int pad,
                       const LayerGeometry& geom);

/// Adjoint of conv1d. Accumulates into grad_w/grad_b and returns dL/dx.
Eigen::MatrixXd conv1d_backward(const Eigen::MatrixXd& x,
                                const std::vector<Eigen::MatrixXd>& weight,
                                const Eigen::MatrixXd& grad_out, int stride,
                                int pad, const LayerGeometry& geom,
                                std::vector<Eigen::MatrixXd>& grad_w,
                                Eigen::ArrayXd& grad_b, bool need_grad_x);

/// Interleave the (V_p x J) output map into V_p*J consecutive symbols.
Eigen::ArrayXd flatten_interleaved(const Eigen::MatrixXd& feature_map);
Eigen::MatrixXd unflatten_interleaved(const Eigen::ArrayXd& symbols, int v_p);

}  // namespace eq::detail
