//! Coefficient scheduling for the regularized objective.
//!
//! The regularizer coefficient `c_reg` is solved so the regularizer makes up a
//! target share of the total loss at the calibration epoch, and scaled back
//! whenever the share climbs past a cap at the stage-change epochs. The
//! diagonal weight λ is solved the same way against the correlation term.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub target_reg_share: f64,
    pub eps_reg: f64,
    pub target_diag_share: f64,
    pub eps_diag: f64,
    pub cap_share: f64,
    pub cap_target: f64,
    pub calibration_epoch: usize,
    pub milestone_epochs: Vec<usize>,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            target_reg_share: 0.10,
            eps_reg: 0.01,
            target_diag_share: 0.10,
            eps_diag: 0.05,
            cap_share: 0.40,
            cap_target: 0.35,
            calibration_epoch: 10,
            milestone_epochs: Vec::new(),
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.target_reg_share
            && self.target_reg_share < self.cap_share
            && self.cap_share < 1.0
            && 0.0 < self.target_diag_share
            && self.target_diag_share < 1.0
            && 0.0 < self.cap_target
            && self.cap_target < self.cap_share;
        if !ordered {
            return Err(Error::Config(format!(
                "balance shares must satisfy 0 < target < cap_share < 1 and 0 < cap_target < cap_share: {self:?}"
            )));
        }
        if !(self.eps_reg > 0.0 && self.eps_diag > 0.0) {
            return Err(Error::Config("balance tolerances must be positive".into()));
        }
        if self.milestone_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "milestones must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Reasons a calibration leaves its coefficient unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BalanceSignal {
    #[error("regularizer is already zero")]
    AlreadyOrthogonal,
    #[error("task loss is not positive")]
    NonPositiveTaskLoss,
    #[error("diagonal residual is zero")]
    NoDiagonalResidual,
}

/// Fraction of `base + weighted` taken by `weighted`.
pub fn share(base: f64, weighted: f64) -> f64 {
    let total = base + weighted;
    if total > 0.0 {
        weighted / total
    } else {
        0.0
    }
}

fn solve_share(target: f64, base: f64, raw: f64) -> f64 {
    target / (1.0 - target) * base / raw
}

/// `c` with `c·raw / (task + c·raw) = target`.
pub fn calibrate_reg_coefficient(
    task_loss: f64,
    raw_reg_loss: f64,
    target: f64,
) -> std::result::Result<f64, BalanceSignal> {
    if raw_reg_loss <= 0.0 {
        return Err(BalanceSignal::AlreadyOrthogonal);
    }
    if task_loss <= 0.0 {
        return Err(BalanceSignal::NonPositiveTaskLoss);
    }
    Ok(solve_share(target, task_loss, raw_reg_loss))
}

/// `λ` with `λ·diag / (corr + λ·diag) = target`.
pub fn calibrate_lambda(
    corr_loss: f64,
    raw_diag_loss: f64,
    target: f64,
) -> std::result::Result<f64, BalanceSignal> {
    if raw_diag_loss <= 0.0 {
        return Err(BalanceSignal::NoDiagonalResidual);
    }
    Ok(solve_share(target, corr_loss.max(0.0), raw_diag_loss))
}

/// Start and midpoint of learning stages two and three, and the start of
/// stage four when it exists. Stage `k+1` begins at milestone `k`; the last
/// stage ends at `total_epochs`.
pub fn adjustment_epochs(cfg: &BalanceConfig, total_epochs: usize) -> Vec<usize> {
    let ms: Vec<usize> = cfg
        .milestone_epochs
        .iter()
        .copied()
        .filter(|&m| m < total_epochs)
        .collect();
    let stage_end = |k: usize| ms.get(k + 1).copied().unwrap_or(total_epochs);
    let mut out = Vec::new();
    for k in 0..2 {
        if let Some(&start) = ms.get(k) {
            out.push(start);
            out.push((start + stage_end(k)) / 2);
        }
    }
    if let Some(&start) = ms.get(2) {
        out.push(start);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Retargets `c` to `cap_target` when the regularizer share exceeds
/// `cap_share`; otherwise returns it unchanged.
pub fn enforce_cap(task_loss: f64, c: f64, raw_reg_loss: f64, cfg: &BalanceConfig) -> f64 {
    if raw_reg_loss <= 0.0 || task_loss <= 0.0 {
        return c;
    }
    if share(task_loss, c * raw_reg_loss) > cfg.cap_share {
        solve_share(cfg.cap_target, task_loss, raw_reg_loss)
    } else {
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Calibrate,
    /// Calibration declined; see [`BalanceSignal`].
    Skip,
    Cap,
    /// Cap checked and not triggered.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    CReg,
    LambdaDiag,
}

/// One scheduler event; serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub epoch: usize,
    pub action: Action,
    pub coefficient: Coefficient,
    pub old: f64,
    pub new: f64,
    pub share_before: f64,
    pub share_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientState {
    pub c_reg: f64,
    pub lambda_diag: f64,
    pub history: Vec<Adjustment>,
}

impl CoefficientState {
    pub fn new(c_reg: f64, lambda_diag: f64) -> Self {
        Self {
            c_reg,
            lambda_diag,
            history: Vec::new(),
        }
    }

    /// Calibrates `c_reg` against epoch-averaged losses.
    pub fn calibrate_reg(&mut self, epoch: usize, task: f64, raw_reg: f64, cfg: &BalanceConfig) {
        let old = self.c_reg;
        let (action, new) = match calibrate_reg_coefficient(task, raw_reg, cfg.target_reg_share) {
            Ok(c) => (Action::Calibrate, c),
            Err(_) => (Action::Skip, old),
        };
        self.c_reg = new;
        self.history.push(Adjustment {
            epoch,
            action,
            coefficient: Coefficient::CReg,
            old,
            new,
            share_before: share(task, old * raw_reg),
            share_after: share(task, new * raw_reg),
        });
    }

    /// Calibrates λ against epoch-averaged correlation and diagonal terms.
    pub fn calibrate_lambda(&mut self, epoch: usize, corr: f64, diag: f64, cfg: &BalanceConfig) {
        let old = self.lambda_diag;
        let (action, new) = match calibrate_lambda(corr, diag, cfg.target_diag_share) {
            Ok(l) => (Action::Calibrate, l),
            Err(_) => (Action::Skip, old),
        };
        self.lambda_diag = new;
        self.history.push(Adjustment {
            epoch,
            action,
            coefficient: Coefficient::LambdaDiag,
            old,
            new,
            share_before: share(corr, old * diag),
            share_after: share(corr, new * diag),
        });
    }

    pub fn enforce_cap(&mut self, epoch: usize, task: f64, raw_reg: f64, cfg: &BalanceConfig) {
        let old = self.c_reg;
        let new = enforce_cap(task, old, raw_reg, cfg);
        self.c_reg = new;
        self.history.push(Adjustment {
            epoch,
            action: if new != old {
                Action::Cap
            } else {
                Action::Hold
            },
            coefficient: Coefficient::CReg,
            old,
            new,
            share_before: share(task, old * raw_reg),
            share_after: share(task, new * raw_reg),
        });
    }

    /// Applies `history` to the given starting coefficients.
    pub fn replay(c_reg: f64, lambda_diag: f64, history: &[Adjustment]) -> Self {
        let mut state = Self::new(c_reg, lambda_diag);
        for adj in history {
            match adj.coefficient {
                Coefficient::CReg => state.c_reg = adj.new,
                Coefficient::LambdaDiag => state.lambda_diag = adj.new,
            }
            state.history.push(adj.clone());
        }
        state
    }

    pub fn history_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for adj in &self.history {
            out.push_str(&serde_json::to_string(adj)?);
            out.push('\n');
        }
        Ok(out)
    }
}
