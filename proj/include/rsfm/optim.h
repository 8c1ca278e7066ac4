#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rsfm/geometry.h"

namespace rsfm {

enum class LossKind { kTrivial, kHuber, kCauchy };

// rho(s) applied to the squared norm s of a residual block.
struct RobustLoss {
  LossKind kind = LossKind::kTrivial;
  double scale = 1.0;

  static RobustLoss Trivial() { return {}; }
  static RobustLoss Huber(double scale) { return {LossKind::kHuber, scale}; }
  static RobustLoss Cauchy(double scale) { return {LossKind::kCauchy, scale}; }

  // Returns (rho(s), rho'(s)).
  Eigen::Vector2d Evaluate(double s) const;
};

// Parameter block geometry. Tangent-space conventions, which analytic
// Jacobians must follow:
//  kEuclidean:  x + delta.
//  kUnitSphere: 3-vector; normalize(x + B(x) delta), B from SphereTangentBasis.
//  kRotation:   quaternion stored (w, x, y, z); q <- Exp(delta) * q, i.e. the
//               rotation matrix becomes ExpSO3(delta) * R.
enum class Manifold { kEuclidean, kUnitSphere, kRotation };

int AmbientSize(Manifold manifold, int euclidean_size);
int TangentSize(Manifold manifold, int euclidean_size);

// Orthonormal basis (as columns) of the plane orthogonal to the unit vector x.
Eigen::Matrix<double, 3, 2> SphereTangentBasis(const Vector3& x);

// Applies a tangent step to ambient values; x_out may alias x.
void ManifoldPlus(Manifold manifold, int size, const double* x,
                  const double* delta, double* x_out);

// Quaternion helpers for kRotation blocks (w, x, y, z order).
void RotationToQuaternionArray(const Matrix3& rotation, double* q);
Matrix3 QuaternionArrayToRotation(const double* q);

class CostFunction {
 public:
  virtual ~CostFunction() = default;

  virtual int NumResiduals() const = 0;

  // params[i] holds the ambient values of the i-th block of the residual.
  // When jacobians is non-null, jacobians[i] (if non-null) receives the
  // row-major NumResiduals x TangentSize Jacobian of block i; it is only
  // requested for blocks where ProvidesJacobian(i) is true.
  virtual bool Evaluate(const double* const* params, double* residuals,
                        double* const* jacobians) const = 0;

  // Blocks without an analytic Jacobian are differentiated by the solver
  // with central differences in the tangent space.
  virtual bool ProvidesJacobian(int /*block_index*/) const { return false; }
};

struct LMOptions {
  int max_iterations = 100;
  double function_tolerance = 1e-10;
  double gradient_tolerance = 1e-12;
  double initial_damping = 1e-4;
  // Costs at or below this are treated as an exact fit.
  double absolute_cost_tolerance = 1e-24;
  // Step below this relative size ends the solve.
  double parameter_tolerance = 1e-14;
  // Eliminate blocks flagged with SetEliminate via the Schur complement.
  bool use_schur = true;
};

enum class TerminationReason {
  kFunctionTolerance,
  kGradientTolerance,
  kParameterTolerance,
  kExactFit,
  kNoProgress,
  kMaxIterations,
  kNumericalFailure,
  kNothingToOptimize,
};

const char* TerminationReasonName(TerminationReason reason);

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  TerminationReason reason = TerminationReason::kMaxIterations;
  // Accepted costs, starting with the initial cost.
  std::vector<double> cost_history;

  bool Usable() const {
    return reason != TerminationReason::kNumericalFailure;
  }
};

class Problem {
 public:
  Problem() = default;
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  // The problem refers to, but does not own, the values. For kEuclidean,
  // size is the vector length; other manifolds have fixed sizes.
  int AddParameterBlock(double* values, int size,
                        Manifold manifold = Manifold::kEuclidean);
  void SetConstant(int block, bool constant = true);
  bool IsConstant(int block) const;
  // Freezes individual coordinates of a Euclidean block.
  void SetSubsetConstant(int block, const std::vector<int>& indices);
  // Marks a block for Schur elimination; every residual may touch at most one
  // eliminated block.
  void SetEliminate(int block);

  void AddResidualBlock(std::shared_ptr<const CostFunction> cost,
                        RobustLoss loss, std::vector<int> blocks);

  int NumParameterBlocks() const { return static_cast<int>(blocks_.size()); }
  int NumResidualBlocks() const { return static_cast<int>(residuals_.size()); }
  int NumResiduals() const;

  // 0.5 * sum of rho(|r|^2); NaN if any residual fails or is non-finite.
  double EvaluateCost() const;
  // Raw (unweighted) residual vector, concatenated in insertion order.
  bool EvaluateResiduals(Eigen::VectorXd* residuals) const;

  // Jacobian of the raw residuals over the free tangent coordinates, using
  // analytic blocks where available. Column order follows block order.
  bool EvaluateJacobian(Eigen::MatrixXd* jacobian) const;
  // Same, but differentiating every block numerically.
  bool EvaluateNumericJacobian(Eigen::MatrixXd* jacobian) const;

 private:
  friend SolveReport Solve(const LMOptions& options, Problem* problem);

  struct Block {
    double* values = nullptr;
    int size = 0;
    Manifold manifold = Manifold::kEuclidean;
    bool constant = false;
    bool eliminate = false;
    std::vector<char> frozen;  // Euclidean subset constancy.
    int tangent = 0;
    int free_tangent = 0;
    // Tangent index -> free index or -1.
    std::vector<int> free_index;
  };

  struct Residual {
    std::shared_ptr<const CostFunction> cost;
    RobustLoss loss;
    std::vector<int> blocks;
  };

  bool EvaluateResidual(const Residual& res, double* out) const;
  // Fills the tangent Jacobian of one residual for one block (row-major
  // num_res x tangent).
  bool BlockJacobian(const Residual& res, int local, bool allow_analytic,
                     Eigen::MatrixXd* jac) const;
  bool ResidualJacobians(const Residual& res, bool allow_analytic,
                         Eigen::VectorXd* r,
                         std::vector<Eigen::MatrixXd>* jacs) const;

  void RefreshTangents();
  bool EvaluateJacobianImpl(bool allow_analytic, Eigen::MatrixXd* jacobian) const;

  std::vector<Block> blocks_;
  std::vector<Residual> residuals_;
};

SolveReport Solve(const LMOptions& options, Problem* problem);

}  // namespace rsfm
