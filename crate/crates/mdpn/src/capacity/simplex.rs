//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! The LP sizes here are a few hundred variables at most (one per
//! feasible state-action pair), so a dense tableau with fully recomputed
//! reduced costs per pivot is simple, robust, and bit-reproducible:
//! Bland's rule makes the pivot sequence a pure function of the input.

use thiserror::Error;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintOp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub op: ConstraintOp,
    pub rhs: f64,
}

/// `maximize objective . x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic column per remaining row (structural and slack indices).
    pub basis: Vec<usize>,
    pub pivots: usize,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("LP infeasible (phase-1 objective {0})")]
    Infeasible(f64),
    #[error("LP unbounded in column {0}")]
    Unbounded(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

struct Tableau {
    /// rows x (ncols + 1); last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.ncols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor == 0.0 {
                continue;
            }
            for (v, pv) in r.iter_mut().zip(pivot_row.iter()) {
                *v -= factor * pv;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `costs . x` over the current basis with Bland's rule.
    /// `allowed` marks the columns that may enter.
    fn run(&mut self, costs: &[f64], allowed: &[bool]) -> Result<usize, LpError> {
        let mut pivots = 0usize;
        loop {
            // Reduced cost of column j: c_j - c_B . B^-1 A_j, recomputed
            // from scratch each pass; Bland picks the first improving column.
            let mut entering = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = costs[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    if costs[b] != 0.0 {
                        rc -= costs[b] * self.t[i][j];
                    }
                }
                if rc > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(pivots);
            };

            // Ratio test; ties broken toward the smallest basis index (Bland).
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][col];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS || (ratio < lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded(col));
            };
            self.pivot(row, col);
            pivots += 1;
        }
    }
}

/// Solves the LP to an optimal basic solution. Redundant equality rows
/// (e.g. flow-balance systems whose rows sum to zero) are eliminated
/// after phase 1 when their artificial variable cannot be driven out.
pub fn simplex_solve(lp: &DenseLp) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Numerical(format!(
                "constraint {i} has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }

    // Column layout: structural | slack/surplus | artificial | rhs.
    let nslack = lp
        .constraints
        .iter()
        .filter(|c| c.op != ConstraintOp::Eq)
        .count();
    let ncols = n + nslack + m;
    let mut t = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack_at = n;

    for (i, c) in lp.constraints.iter().enumerate() {
        let flip = c.rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for (j, &v) in c.coeffs.iter().enumerate() {
            t[i][j] = sign * v;
        }
        t[i][ncols] = sign * c.rhs;
        let op = match (c.op, flip) {
            (ConstraintOp::Eq, _) => ConstraintOp::Eq,
            (ConstraintOp::Le, false) | (ConstraintOp::Ge, true) => ConstraintOp::Le,
            (ConstraintOp::Ge, false) | (ConstraintOp::Le, true) => ConstraintOp::Ge,
        };
        match op {
            ConstraintOp::Le => {
                t[i][slack_at] = 1.0;
                basis[i] = slack_at;
                slack_at += 1;
            }
            ConstraintOp::Ge => {
                t[i][slack_at] = -1.0;
                slack_at += 1;
                t[i][n + nslack + i] = 1.0;
                basis[i] = n + nslack + i;
            }
            ConstraintOp::Eq => {
                t[i][n + nslack + i] = 1.0;
                basis[i] = n + nslack + i;
            }
        }
    }

    let mut tab = Tableau { t, basis, ncols };
    let mut pivots = 0usize;

    // Phase 1: drive the artificial variables to zero.
    let needs_phase1 = tab.basis.iter().any(|&b| b >= n + nslack);
    if needs_phase1 {
        let mut w = vec![0.0; ncols];
        for item in w.iter_mut().skip(n + nslack) {
            *item = -1.0;
        }
        let allowed = vec![true; ncols];
        pivots += tab.run(&w, &allowed)?;
        let infeasibility: f64 = tab
            .basis
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b >= n + nslack)
            .map(|(i, _)| tab.rhs(i))
            .sum();
        if infeasibility > 1e-7 {
            return Err(LpError::Infeasible(infeasibility));
        }
        // Drive out artificial variables stuck in the basis at zero, or
        // drop their rows entirely when the row has no real coefficients
        // left (a redundant constraint).
        let mut row = 0;
        while row < tab.t.len() {
            if tab.basis[row] >= n + nslack {
                let col = (0..n + nslack).find(|&j| tab.t[row][j].abs() > EPS);
                match col {
                    Some(j) => tab.pivot(row, j),
                    None => {
                        tab.t.remove(row);
                        tab.basis.remove(row);
                        continue;
                    }
                }
            }
            row += 1;
        }
    }

    // Phase 2: optimize the real objective with artificials barred.
    let mut costs = vec![0.0; ncols];
    costs[..n].copy_from_slice(&lp.objective);
    let mut allowed = vec![true; ncols];
    for item in allowed.iter_mut().skip(n + nslack) {
        *item = false;
    }
    pivots += tab.run(&costs, &allowed)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i);
        }
    }
    let objective = lp.objective.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        basis: tab.basis.clone(),
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_box() {
        let lp = DenseLp {
            objective: vec![1.0],
            constraints: vec![Constraint {
                coeffs: vec![1.0],
                op: ConstraintOp::Le,
                rhs: 1.0,
            }],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classic_two_variable_program() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 => (2, 6), 36.
        let lp = DenseLp {
            objective: vec![3.0, 5.0],
            constraints: vec![
                Constraint {
                    coeffs: vec![1.0, 0.0],
                    op: ConstraintOp::Le,
                    rhs: 4.0,
                },
                Constraint {
                    coeffs: vec![0.0, 2.0],
                    op: ConstraintOp::Le,
                    rhs: 12.0,
                },
                Constraint {
                    coeffs: vec![3.0, 2.0],
                    op: ConstraintOp::Le,
                    rhs: 18.0,
                },
            ],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equality_rows_are_eliminated() {
        // x + y = 1 twice plus its negated sum: rank 1 system.
        let lp = DenseLp {
            objective: vec![2.0, 1.0],
            constraints: vec![
                Constraint {
                    coeffs: vec![1.0, 1.0],
                    op: ConstraintOp::Eq,
                    rhs: 1.0,
                },
                Constraint {
                    coeffs: vec![1.0, 1.0],
                    op: ConstraintOp::Eq,
                    rhs: 1.0,
                },
                Constraint {
                    coeffs: vec![-1.0, -1.0],
                    op: ConstraintOp::Eq,
                    rhs: -1.0,
                },
            ],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ge_constraints_and_negative_margins() {
        // max e s.t. 0.5 - e >= 0.2  (e enters with -1): e* = 0.3.
        let lp = DenseLp {
            objective: vec![1.0, -1.0],
            constraints: vec![Constraint {
                coeffs: vec![-1.0, 1.0],
                op: ConstraintOp::Ge,
                rhs: 0.2 - 0.5,
            }],
        };
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.objective - 0.3).abs() < 1e-9);
    }

    #[test]
    fn unbounded_is_reported() {
        let lp = DenseLp {
            objective: vec![1.0],
            constraints: vec![Constraint {
                coeffs: vec![1.0],
                op: ConstraintOp::Ge,
                rhs: 0.0,
            }],
        };
        assert!(matches!(simplex_solve(&lp), Err(LpError::Unbounded(_))));
    }

    #[test]
    fn infeasible_is_reported() {
        let lp = DenseLp {
            objective: vec![0.0],
            constraints: vec![
                Constraint {
                    coeffs: vec![1.0],
                    op: ConstraintOp::Le,
                    rhs: 1.0,
                },
                Constraint {
                    coeffs: vec![1.0],
                    op: ConstraintOp::Ge,
                    rhs: 2.0,
                },
            ],
        };
        assert!(matches!(simplex_solve(&lp), Err(LpError::Infeasible(_))));
    }

    #[test]
    fn constraint_residuals_hold_at_optimum() {
        let lp = DenseLp {
            objective: vec![1.0, 2.0, 0.5],
            constraints: vec![
                Constraint {
                    coeffs: vec![1.0, 1.0, 1.0],
                    op: ConstraintOp::Eq,
                    rhs: 1.0,
                },
                Constraint {
                    coeffs: vec![1.0, -1.0, 0.0],
                    op: ConstraintOp::Le,
                    rhs: 0.5,
                },
                Constraint {
                    coeffs: vec![0.0, 1.0, 1.0],
                    op: ConstraintOp::Ge,
                    rhs: 0.3,
                },
            ],
        };
        let sol = simplex_solve(&lp).unwrap();
        let x = &sol.x;
        assert!((x[0] + x[1] + x[2] - 1.0).abs() <= 1e-8);
        assert!(x[0] - x[1] <= 0.5 + 1e-8);
        assert!(x[1] + x[2] >= 0.3 - 1e-8);
        assert!(x.iter().all(|&v| v >= -1e-9));
    }
}
