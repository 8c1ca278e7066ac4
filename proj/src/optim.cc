#include "rsfm/optim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "rsfm/numerics.h"

namespace rsfm {

Eigen::Vector2d RobustLoss::Evaluate(double s) const {
  const double b = scale * scale;
  switch (kind) {
    case LossKind::kTrivial:
      return {s, 1.0};
    case LossKind::kHuber:
      if (s <= b) return {s, 1.0};
      return {2.0 * std::sqrt(b * s) - b, std::sqrt(b / s)};
    case LossKind::kCauchy:
      return {b * std::log1p(s / b), 1.0 / (1.0 + s / b)};
  }
  return {s, 1.0};
}

int AmbientSize(Manifold manifold, int euclidean_size) {
  switch (manifold) {
    case Manifold::kEuclidean: return euclidean_size;
    case Manifold::kUnitSphere: return 3;
    case Manifold::kRotation: return 4;
  }
  return euclidean_size;
}

int TangentSize(Manifold manifold, int euclidean_size) {
  switch (manifold) {
    case Manifold::kEuclidean: return euclidean_size;
    case Manifold::kUnitSphere: return 2;
    case Manifold::kRotation: return 3;
  }
  return euclidean_size;
}

Eigen::Matrix<double, 3, 2> SphereTangentBasis(const Vector3& x) {
  // Householder-style completion; continuous away from x = -e_z.
  Eigen::Matrix<double, 3, 2> basis;
  if (x.z() > -0.5) {
    const double a = 1.0 / (1.0 + x.z());
    const double b = -x.x() * x.y() * a;
    basis.col(0) = Vector3(1.0 - x.x() * x.x() * a, b, -x.x());
    basis.col(1) = Vector3(b, 1.0 - x.y() * x.y() * a, -x.y());
  } else {
    Vector3 helper = std::abs(x.x()) < 0.9 ? Vector3::UnitX() : Vector3::UnitY();
    Vector3 u = helper.cross(x).normalized();
    basis.col(0) = u;
    basis.col(1) = x.cross(u).normalized();
  }
  return basis;
}

void RotationToQuaternionArray(const Matrix3& rotation, double* q) {
  Eigen::Quaterniond quat(rotation);
  quat.normalize();
  q[0] = quat.w();
  q[1] = quat.x();
  q[2] = quat.y();
  q[3] = quat.z();
}

Matrix3 QuaternionArrayToRotation(const double* q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

void ManifoldPlus(Manifold manifold, int size, const double* x,
                  const double* delta, double* x_out) {
  switch (manifold) {
    case Manifold::kEuclidean:
      for (int i = 0; i < size; ++i) x_out[i] = x[i] + delta[i];
      return;
    case Manifold::kUnitSphere: {
      const Vector3 v(x[0], x[1], x[2]);
      const Vector3 moved =
          (v + SphereTangentBasis(v) * Eigen::Vector2d(delta[0], delta[1])).normalized();
      for (int i = 0; i < 3; ++i) x_out[i] = moved[i];
      return;
    }
    case Manifold::kRotation: {
      const Eigen::Quaterniond q(x[0], x[1], x[2], x[3]);
      const Vector3 omega(delta[0], delta[1], delta[2]);
      const double theta = omega.norm();
      Eigen::Quaterniond dq;
      if (theta < 1e-12) {
        dq = Eigen::Quaterniond(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
      } else {
        dq = Eigen::Quaterniond(Eigen::AngleAxisd(theta, omega / theta));
      }
      const Eigen::Quaterniond out = (dq * q).normalized();
      x_out[0] = out.w();
      x_out[1] = out.x();
      x_out[2] = out.y();
      x_out[3] = out.z();
      return;
    }
  }
}

const char* TerminationReasonName(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kFunctionTolerance: return "FunctionTolerance";
    case TerminationReason::kGradientTolerance: return "GradientTolerance";
    case TerminationReason::kParameterTolerance: return "ParameterTolerance";
    case TerminationReason::kExactFit: return "ExactFit";
    case TerminationReason::kNoProgress: return "NoProgress";
    case TerminationReason::kMaxIterations: return "MaxIterations";
    case TerminationReason::kNumericalFailure: return "NumericalFailure";
    case TerminationReason::kNothingToOptimize: return "NothingToOptimize";
  }
  return "Unknown";
}

int Problem::AddParameterBlock(double* values, int size, Manifold manifold) {
  Block block;
  block.values = values;
  block.manifold = manifold;
  block.size = AmbientSize(manifold, size);
  block.tangent = TangentSize(manifold, size);
  block.frozen.assign(block.tangent, 0);
  blocks_.push_back(std::move(block));
  return static_cast<int>(blocks_.size()) - 1;
}

void Problem::SetConstant(int block, bool constant) {
  blocks_.at(block).constant = constant;
}

bool Problem::IsConstant(int block) const { return blocks_.at(block).constant; }

void Problem::SetSubsetConstant(int block, const std::vector<int>& indices) {
  Block& b = blocks_.at(block);
  if (b.manifold != Manifold::kEuclidean) {
    throw std::invalid_argument("SetSubsetConstant: Euclidean blocks only");
  }
  for (int i : indices) b.frozen.at(i) = 1;
}

void Problem::SetEliminate(int block) { blocks_.at(block).eliminate = true; }

void Problem::AddResidualBlock(std::shared_ptr<const CostFunction> cost,
                               RobustLoss loss, std::vector<int> blocks) {
  for (int b : blocks) {
    if (b < 0 || b >= NumParameterBlocks()) {
      throw std::out_of_range("AddResidualBlock: bad parameter block id");
    }
  }
  residuals_.push_back({std::move(cost), loss, std::move(blocks)});
}

int Problem::NumResiduals() const {
  int n = 0;
  for (const auto& r : residuals_) n += r.cost->NumResiduals();
  return n;
}

void Problem::RefreshTangents() {
  for (auto& b : blocks_) {
    b.free_index.assign(b.tangent, -1);
    b.free_tangent = 0;
    if (b.constant) continue;
    for (int k = 0; k < b.tangent; ++k) {
      if (!b.frozen[k]) b.free_index[k] = b.free_tangent++;
    }
  }
}

bool Problem::EvaluateResidual(const Residual& res, double* out) const {
  std::vector<const double*> params(res.blocks.size());
  for (size_t i = 0; i < res.blocks.size(); ++i) params[i] = blocks_[res.blocks[i]].values;
  if (!res.cost->Evaluate(params.data(), out, nullptr)) return false;
  for (int i = 0; i < res.cost->NumResiduals(); ++i) {
    if (!std::isfinite(out[i])) return false;
  }
  return true;
}

double Problem::EvaluateCost() const {
  double cost = 0.0;
  std::vector<double> r;
  for (const auto& res : residuals_) {
    r.resize(res.cost->NumResiduals());
    if (!EvaluateResidual(res, r.data())) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double v : r) s += v * v;
    cost += res.loss.Evaluate(s)[0];
  }
  return 0.5 * cost;
}

bool Problem::EvaluateResiduals(Eigen::VectorXd* residuals) const {
  residuals->resize(NumResiduals());
  int row = 0;
  for (const auto& res : residuals_) {
    if (!EvaluateResidual(res, residuals->data() + row)) return false;
    row += res.cost->NumResiduals();
  }
  return true;
}

bool Problem::BlockJacobian(const Residual& res, int local, bool allow_analytic,
                            Eigen::MatrixXd* jac) const {
  const Block& blk = blocks_[res.blocks[local]];
  const int m = res.cost->NumResiduals();
  jac->setZero(m, blk.tangent);
  std::vector<const double*> params(res.blocks.size());
  for (size_t i = 0; i < res.blocks.size(); ++i) params[i] = blocks_[res.blocks[i]].values;

  if (allow_analytic && res.cost->ProvidesJacobian(local)) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m, blk.tangent);
    std::vector<double*> jacs(res.blocks.size(), nullptr);
    jacs[local] = rm.data();
    std::vector<double> r(m);
    if (!res.cost->Evaluate(params.data(), r.data(), jacs.data())) return false;
    *jac = rm;
    return jac->allFinite();
  }

  std::vector<double> xp(blk.size), xm(blk.size), delta(blk.tangent, 0.0);
  std::vector<double> r0(m), rp(m), rmv(m);
  if (!res.cost->Evaluate(params.data(), r0.data(), nullptr)) return false;
  for (int k = 0; k < blk.tangent; ++k) {
    double h = numerics::kFiniteDiffRelStep;
    if (blk.manifold == Manifold::kEuclidean) {
      h *= std::max(1.0, std::abs(blk.values[k]));
    }
    delta[k] = h;
    ManifoldPlus(blk.manifold, blk.size, blk.values, delta.data(), xp.data());
    delta[k] = -h;
    ManifoldPlus(blk.manifold, blk.size, blk.values, delta.data(), xm.data());
    delta[k] = 0.0;
    params[local] = xp.data();
    const bool plus = res.cost->Evaluate(params.data(), rp.data(), nullptr);
    params[local] = xm.data();
    const bool minus = res.cost->Evaluate(params.data(), rmv.data(), nullptr);
    params[local] = blk.values;
    // One-sided difference when the point sits at the edge of the valid
    // domain, e.g. a ray that stops refracting under the perturbation.
    if (!plus && !minus) return false;
    if (!plus) rp = r0;
    if (!minus) rmv = r0;
    const double span = plus && minus ? 2.0 * h : h;
    for (int i = 0; i < m; ++i) (*jac)(i, k) = (rp[i] - rmv[i]) / span;
  }
  return jac->allFinite();
}

bool Problem::ResidualJacobians(const Residual& res, bool allow_analytic,
                                Eigen::VectorXd* r,
                                std::vector<Eigen::MatrixXd>* jacs) const {
  const int m = res.cost->NumResiduals();
  r->resize(m);
  if (!EvaluateResidual(res, r->data())) return false;
  jacs->resize(res.blocks.size());
  for (size_t i = 0; i < res.blocks.size(); ++i) {
    const Block& blk = blocks_[res.blocks[i]];
    if (blk.free_tangent == 0) {
      (*jacs)[i].resize(0, 0);
      continue;
    }
    Eigen::MatrixXd full;
    if (!BlockJacobian(res, static_cast<int>(i), allow_analytic, &full)) return false;
    Eigen::MatrixXd reduced(m, blk.free_tangent);
    for (int k = 0; k < blk.tangent; ++k) {
      if (blk.free_index[k] >= 0) reduced.col(blk.free_index[k]) = full.col(k);
    }
    (*jacs)[i] = std::move(reduced);
  }
  return true;
}

bool Problem::EvaluateJacobianImpl(bool allow_analytic, Eigen::MatrixXd* jacobian) const {
  const_cast<Problem*>(this)->RefreshTangents();
  std::vector<int> offset(blocks_.size(), 0);
  int cols = 0;
  for (size_t b = 0; b < blocks_.size(); ++b) {
    offset[b] = cols;
    cols += blocks_[b].free_tangent;
  }
  jacobian->setZero(NumResiduals(), cols);
  int row = 0;
  Eigen::VectorXd r;
  std::vector<Eigen::MatrixXd> jacs;
  for (const auto& res : residuals_) {
    if (!ResidualJacobians(res, allow_analytic, &r, &jacs)) return false;
    for (size_t i = 0; i < res.blocks.size(); ++i) {
      if (jacs[i].size() == 0) continue;
      jacobian->block(row, offset[res.blocks[i]], jacs[i].rows(), jacs[i].cols()) += jacs[i];
    }
    row += res.cost->NumResiduals();
  }
  return true;
}

bool Problem::EvaluateJacobian(Eigen::MatrixXd* jacobian) const {
  return EvaluateJacobianImpl(true, jacobian);
}

bool Problem::EvaluateNumericJacobian(Eigen::MatrixXd* jacobian) const {
  return EvaluateJacobianImpl(false, jacobian);
}

namespace {

struct ElimCoupling {
  int reduced_block;
  Eigen::MatrixXd h;  // m_e x k_b
};

struct ElimSystem {
  int block = -1;
  Eigen::MatrixXd hee;
  Eigen::VectorXd ge;
  std::vector<ElimCoupling> couplings;

  Eigen::MatrixXd& Coupling(int reduced_block, int rows, int cols) {
    for (auto& c : couplings) {
      if (c.reduced_block == reduced_block) return c.h;
    }
    couplings.push_back({reduced_block, Eigen::MatrixXd::Zero(rows, cols)});
    return couplings.back().h;
  }
};

}  // namespace

SolveReport Solve(const LMOptions& options, Problem* problem) {
  SolveReport report;
  Problem& p = *problem;
  p.RefreshTangents();

  // Eliminated blocks must not share a residual with another eliminated block.
  std::vector<int> elim_of_block(p.blocks_.size(), -1);
  std::vector<int> reduced_offset(p.blocks_.size(), -1);
  if (options.use_schur) {
    std::vector<char> candidate(p.blocks_.size(), 0);
    for (size_t b = 0; b < p.blocks_.size(); ++b) {
      candidate[b] = p.blocks_[b].eliminate && p.blocks_[b].free_tangent > 0;
    }
    for (const auto& res : p.residuals_) {
      int count = 0;
      for (int b : res.blocks) count += candidate[b];
      if (count > 1) {
        for (int b : res.blocks) candidate[b] = 0;
      }
    }
    int next = 0;
    for (size_t b = 0; b < p.blocks_.size(); ++b) {
      if (candidate[b]) elim_of_block[b] = next++;
    }
  }
  int num_reduced = 0;
  for (size_t b = 0; b < p.blocks_.size(); ++b) {
    if (elim_of_block[b] < 0 && p.blocks_[b].free_tangent > 0) {
      reduced_offset[b] = num_reduced;
      num_reduced += p.blocks_[b].free_tangent;
    }
  }
  int num_elim = 0;
  for (int e : elim_of_block) num_elim += e >= 0;

  double cost = p.EvaluateCost();
  report.initial_cost = cost;
  report.final_cost = cost;
  report.cost_history.push_back(cost);
  if (!std::isfinite(cost)) {
    report.reason = TerminationReason::kNumericalFailure;
    return report;
  }
  if (num_reduced == 0 && num_elim == 0) {
    report.reason = TerminationReason::kNothingToOptimize;
    return report;
  }
  if (cost <= options.absolute_cost_tolerance) {
    report.reason = TerminationReason::kExactFit;
    return report;
  }

  double lambda = options.initial_damping;
  double nu = 2.0;

  std::vector<ElimSystem> elims(num_elim);
  Eigen::MatrixXd hrr;
  Eigen::VectorXd gr;

  while (true) {
    // Linearize.
    hrr.setZero(num_reduced, num_reduced);
    gr.setZero(num_reduced);
    for (size_t b = 0; b < p.blocks_.size(); ++b) {
      if (elim_of_block[b] >= 0) {
        ElimSystem& es = elims[elim_of_block[b]];
        const int m = p.blocks_[b].free_tangent;
        es.block = static_cast<int>(b);
        es.hee.setZero(m, m);
        es.ge.setZero(m);
        es.couplings.clear();
      }
    }
    Eigen::VectorXd r;
    std::vector<Eigen::MatrixXd> jacs;
    bool ok = true;
    for (const auto& res : p.residuals_) {
      if (!p.ResidualJacobians(res, true, &r, &jacs)) {
        ok = false;
        break;
      }
      const double weight = std::sqrt(res.loss.Evaluate(r.squaredNorm())[1]);
      r *= weight;
      int elim_local = -1;
      for (size_t i = 0; i < res.blocks.size(); ++i) {
        if (jacs[i].size() == 0) continue;
        jacs[i] *= weight;
        if (elim_of_block[res.blocks[i]] >= 0) elim_local = static_cast<int>(i);
      }
      for (size_t i = 0; i < res.blocks.size(); ++i) {
        const int bi = res.blocks[i];
        if (jacs[i].size() == 0 || elim_of_block[bi] >= 0) continue;
        const int oi = reduced_offset[bi];
        gr.segment(oi, jacs[i].cols()) -= jacs[i].transpose() * r;
        for (size_t j = 0; j < res.blocks.size(); ++j) {
          const int bj = res.blocks[j];
          if (jacs[j].size() == 0 || elim_of_block[bj] >= 0) continue;
          hrr.block(oi, reduced_offset[bj], jacs[i].cols(), jacs[j].cols()) +=
              jacs[i].transpose() * jacs[j];
        }
      }
      if (elim_local >= 0) {
        const int be = res.blocks[elim_local];
        ElimSystem& es = elims[elim_of_block[be]];
        const Eigen::MatrixXd& je = jacs[elim_local];
        es.hee += je.transpose() * je;
        es.ge -= je.transpose() * r;
        for (size_t i = 0; i < res.blocks.size(); ++i) {
          const int bi = res.blocks[i];
          if (jacs[i].size() == 0 || elim_of_block[bi] >= 0) continue;
          es.Coupling(bi, je.cols(), jacs[i].cols()) += je.transpose() * jacs[i];
        }
      }
    }
    if (!ok) {
      report.reason = TerminationReason::kNumericalFailure;
      break;
    }

    double gmax = gr.size() > 0 ? gr.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& es : elims) {
      if (es.ge.size() > 0) gmax = std::max(gmax, es.ge.cwiseAbs().maxCoeff());
    }
    if (gmax < options.gradient_tolerance) {
      report.reason = TerminationReason::kGradientTolerance;
      break;
    }

    // Inner loop: damped solves until a step is accepted.
    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      if (report.iterations >= options.max_iterations) {
        report.reason = TerminationReason::kMaxIterations;
        stop = true;
        break;
      }
      ++report.iterations;

      const Eigen::VectorXd dr_diag =
          hrr.diagonal().cwiseMax(1e-6).cwiseMin(1e32);
      Eigen::MatrixXd s = hrr;
      s.diagonal() += lambda * dr_diag;
      Eigen::VectorXd rhs = gr;
      std::vector<Eigen::MatrixXd> inv_e(elims.size());
      std::vector<Eigen::VectorXd> de_diag(elims.size());
      for (size_t e = 0; e < elims.size(); ++e) {
        ElimSystem& es = elims[e];
        de_diag[e] = es.hee.diagonal().cwiseMax(1e-6).cwiseMin(1e32);
        Eigen::MatrixXd a = es.hee;
        a.diagonal() += lambda * de_diag[e];
        inv_e[e] = a.inverse();
        for (const auto& ci : es.couplings) {
          const int oi = reduced_offset[ci.reduced_block];
          const Eigen::MatrixXd tmp = ci.h.transpose() * inv_e[e];
          rhs.segment(oi, ci.h.cols()) -= tmp * es.ge;
          for (const auto& cj : es.couplings) {
            const int oj = reduced_offset[cj.reduced_block];
            s.block(oi, oj, ci.h.cols(), cj.h.cols()) -= tmp * cj.h;
          }
        }
      }
      Eigen::VectorXd dr;
      if (num_reduced > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
        dr = ldlt.solve(rhs);
      } else {
        dr.resize(0);
      }
      std::vector<Eigen::VectorXd> de(elims.size());
      bool finite = dr.allFinite();
      for (size_t e = 0; e < elims.size() && finite; ++e) {
        Eigen::VectorXd v = elims[e].ge;
        for (const auto& c : elims[e].couplings) {
          v -= c.h * dr.segment(reduced_offset[c.reduced_block], c.h.cols());
        }
        de[e] = inv_e[e] * v;
        finite = de[e].allFinite();
      }
      if (!finite) {
        lambda *= nu;
        nu *= 2.0;
        if (lambda > 1e32) {
          report.reason = TerminationReason::kNumericalFailure;
          stop = true;
          break;
        }
        continue;
      }

      // Predicted decrease of the linearized model.
      double predicted = dr.dot(gr) + lambda * dr.dot(dr_diag.cwiseProduct(dr));
      double step_norm2 = dr.squaredNorm();
      for (size_t e = 0; e < elims.size(); ++e) {
        predicted += de[e].dot(elims[e].ge) + lambda * de[e].dot(de_diag[e].cwiseProduct(de[e]));
        step_norm2 += de[e].squaredNorm();
      }
      predicted *= 0.5;

      // Apply the step, keeping a backup for rollback.
      std::vector<std::vector<double>> backup(p.blocks_.size());
      double x_norm2 = 0.0;
      for (size_t b = 0; b < p.blocks_.size(); ++b) {
        auto& blk = p.blocks_[b];
        if (blk.free_tangent == 0) continue;
        backup[b].assign(blk.values, blk.values + blk.size);
        for (int i = 0; i < blk.size; ++i) x_norm2 += blk.values[i] * blk.values[i];
        std::vector<double> delta(blk.tangent, 0.0);
        for (int k = 0; k < blk.tangent; ++k) {
          const int fi = blk.free_index[k];
          if (fi < 0) continue;
          delta[k] = elim_of_block[b] >= 0 ? de[elim_of_block[b]][fi]
                                           : dr[reduced_offset[b] + fi];
        }
        ManifoldPlus(blk.manifold, blk.size, blk.values, delta.data(), blk.values);
      }
      const double new_cost = p.EvaluateCost();
      const double actual = cost - new_cost;
      if (std::isfinite(new_cost) && actual >= 0.0 && new_cost <= cost) {
        accepted = true;
        ++report.accepted_steps;
        const double rho = predicted > 0.0 ? actual / predicted : 1.0;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        lambda = std::max(lambda, 1e-16);
        nu = 2.0;
        const double old_cost = cost;
        cost = new_cost;
        report.cost_history.push_back(cost);
        if (cost <= options.absolute_cost_tolerance) {
          report.reason = TerminationReason::kExactFit;
          stop = true;
        } else if (actual <= options.function_tolerance * old_cost) {
          report.reason = TerminationReason::kFunctionTolerance;
          stop = true;
        } else if (std::sqrt(step_norm2) <=
                   options.parameter_tolerance * (std::sqrt(x_norm2) + options.parameter_tolerance)) {
          report.reason = TerminationReason::kParameterTolerance;
          stop = true;
        }
      } else {
        for (size_t b = 0; b < p.blocks_.size(); ++b) {
          if (backup[b].empty()) continue;
          std::copy(backup[b].begin(), backup[b].end(), p.blocks_[b].values);
        }
        if (std::sqrt(step_norm2) <=
            options.parameter_tolerance * (std::sqrt(x_norm2) + options.parameter_tolerance)) {
          report.reason = TerminationReason::kParameterTolerance;
          stop = true;
          break;
        }
        lambda *= nu;
        nu *= 2.0;
        if (lambda > 1e32) {
          report.reason = TerminationReason::kNoProgress;
          stop = true;
          break;
        }
      }
    }
    if (stop) break;
  }
  report.final_cost = cost;
  return report;
}

}  // namespace rsfm
