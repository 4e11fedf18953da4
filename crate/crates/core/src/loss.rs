//! Contrastive objective: two triplet terms and the upper-bound term.
//!
//! Distances are squared Euclidean, computed row by row (node by node) and
//! averaged over rows and over the `k` negatives. The event positive is a
//! single row broadcast against every anchor row.
//!
//! ```
//! use ndarray::array;
//! use segcl::loss::{dist2, triplet_loss};
//!
//! assert_eq!(dist2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
//! let h = array![[0.0, 0.0]];
//! let pos = array![[3.0, 4.0]];
//! let neg = array![[0.0, 0.0]];
//! assert_eq!(triplet_loss(&h, &pos, &[neg], 0.0).unwrap(), 25.0);
//! ```

use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// Sign convention of the upper-bound term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpperBoundMode {
    /// `max(0, d⁻ − d⁺ − η − θ)`: penalizes negatives drifting too far.
    #[default]
    Hinge,
    /// `min(d⁺ − d⁻ + η + θ, 0)`, unbounded below.
    PaperLiteral,
}

impl FromStr for UpperBoundMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hinge" => Ok(Self::Hinge),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(format!(
                "unknown upper bound mode {other:?} (allowed: hinge, paper-literal)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub eta: f64,
    pub theta: f64,
    pub w_e: f64,
    pub w_s: f64,
    pub k_negatives: usize,
    pub upper_bound_sign: UpperBoundMode,
    pub use_structure: bool,
    pub use_event: bool,
    pub use_upper_bound: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            theta: 0.9,
            w_e: 1.0,
            w_s: 1.0,
            k_negatives: 1,
            upper_bound_sign: UpperBoundMode::Hinge,
            use_structure: true,
            use_event: true,
            use_upper_bound: true,
        }
    }
}

/// A loss term that can be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Structure,
    Event,
    UpperBound,
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "structure" => Ok(Self::Structure),
            "event" => Ok(Self::Event),
            "upper_bound" | "upper-bound" => Ok(Self::UpperBound),
            other => Err(format!(
                "unknown ablation {other:?} (allowed: structure, event, upper_bound)"
            )),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("theta", self.theta),
            ("w_e", self.w_e),
            ("w_s", self.w_s),
        ] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::invalid(
                    "loss config",
                    format!("{name} must be >= 0 (got {v})"),
                ));
            }
        }
        if self.k_negatives == 0 {
            return Err(Error::invalid("loss config", "k_negatives must be >= 1"));
        }
        Ok(())
    }

    pub fn ablate(mut self, a: Ablation) -> Self {
        match a {
            Ablation::Structure => self.use_structure = false,
            Ablation::Event => self.use_event = false,
            Ablation::UpperBound => self.use_upper_bound = false,
        }
        self
    }
}

/// Norms of each term's gradient with respect to all encoder parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermGradNorms {
    pub zeta_s: f64,
    pub zeta_e: f64,
    pub zeta_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub zeta_s: f64,
    pub zeta_e: f64,
    pub zeta_u: f64,
    pub zeta_total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norms: Option<TermGradNorms>,
}

/// `‖a − b‖²`
pub fn dist2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            context: "dist2",
            expected: a.len().to_string(),
            got: b.len().to_string(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn row_dist2(h: &Array2<f64>, other: &Array2<f64>) -> Result<Array1<f64>> {
    let broadcast = other.nrows() == 1 && h.nrows() != 1;
    if h.ncols() != other.ncols() || (!broadcast && h.nrows() != other.nrows()) {
        return Err(Error::Shape {
            context: "embedding",
            expected: format!("{}x{}", h.nrows(), h.ncols()),
            got: format!("{}x{}", other.nrows(), other.ncols()),
        });
    }
    let diff = h - other;
    Ok((&diff * &diff).sum_axis(Axis(1)))
}

fn check_negatives(negatives: &[Array2<f64>]) -> Result<()> {
    if negatives.is_empty() {
        return Err(Error::invalid(
            "loss",
            "at least one negative embedding is required",
        ));
    }
    Ok(())
}

/// Mean over rows and negatives of `max(0, d²(H,H⁺) − d²(H,H⁻ᵢ) + η)`.
/// `pos` may be a single row, broadcast against every row of `h`.
pub fn triplet_loss(
    h: &Array2<f64>,
    pos: &Array2<f64>,
    negatives: &[Array2<f64>],
    eta: f64,
) -> Result<f64> {
    check_negatives(negatives)?;
    let dp = row_dist2(h, pos)?;
    let mut total = 0.0;
    for neg in negatives {
        let dn = row_dist2(h, neg)?;
        total += (&dp - &dn)
            .mapv(|t| (t + eta).max(0.0))
            .mean()
            .unwrap_or(0.0);
    }
    Ok(total / negatives.len() as f64)
}

/// Upper-bound term averaged like [`triplet_loss`].
pub fn upper_bound_loss(
    h: &Array2<f64>,
    pos: &Array2<f64>,
    negatives: &[Array2<f64>],
    eta: f64,
    theta: f64,
    mode: UpperBoundMode,
) -> Result<f64> {
    check_negatives(negatives)?;
    let dp = row_dist2(h, pos)?;
    let mut total = 0.0;
    for neg in negatives {
        let dn = row_dist2(h, neg)?;
        let t = &dp - &dn + (eta + theta);
        total += match mode {
            UpperBoundMode::Hinge => t.mapv(|t| (-t).max(0.0)),
            UpperBoundMode::PaperLiteral => t.mapv(|t| t.min(0.0)),
        }
        .mean()
        .unwrap_or(0.0);
    }
    Ok(total / negatives.len() as f64)
}

/// `ζ = W_e·ζ_e + W_s·ζ_s + ζ_u` with ablated terms set to exactly 0.
pub fn total_loss(set: &EmbeddingSet, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let negs = &set.negatives[..];
    let zeta_s = if cfg.use_structure {
        triplet_loss(&set.anchor, &set.structural, negs, cfg.eta)?
    } else {
        0.0
    };
    let zeta_e = if cfg.use_event {
        triplet_loss(&set.anchor, &set.event, negs, cfg.eta)?
    } else {
        0.0
    };
    let zeta_u = if cfg.use_upper_bound {
        upper_bound_loss(
            &set.anchor,
            &set.structural,
            negs,
            cfg.eta,
            cfg.theta,
            cfg.upper_bound_sign,
        )?
    } else {
        0.0
    };
    Ok(LossReport {
        zeta_s,
        zeta_e,
        zeta_u,
        zeta_total: compose(cfg, zeta_s, zeta_e, zeta_u),
        grad_norms: None,
    })
}

fn compose(cfg: &LossConfig, zeta_s: f64, zeta_e: f64, zeta_u: f64) -> f64 {
    cfg.w_e * zeta_e + cfg.w_s * zeta_s + zeta_u
}

/// Loss terms recorded on a tape. Ablated terms are `None`.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub zeta_s: Option<Var>,
    pub zeta_e: Option<Var>,
    pub zeta_u: Option<Var>,
    pub total: Var,
}

fn tape_triplet(tape: &mut Tape, h: Var, pos: Var, negs: &[Var], eta: f64) -> Var {
    let dp = tape.row_sq_dist(h, pos);
    let mut acc: Option<Var> = None;
    for &n in negs {
        let dn = tape.row_sq_dist(h, n);
        let t = tape.sub(dp, dn);
        let t = tape.add_scalar(t, eta);
        let t = tape.relu(t);
        let m = tape.mean(t);
        acc = Some(match acc {
            Some(a) => tape.add(a, m),
            None => m,
        });
    }
    tape.scale(acc.expect("negatives checked"), 1.0 / negs.len() as f64)
}

fn tape_upper_bound(
    tape: &mut Tape,
    h: Var,
    pos: Var,
    negs: &[Var],
    eta: f64,
    theta: f64,
    mode: UpperBoundMode,
) -> Var {
    let dp = tape.row_sq_dist(h, pos);
    let mut acc: Option<Var> = None;
    for &n in negs {
        let dn = tape.row_sq_dist(h, n);
        let t = tape.sub(dn, dp);
        let t = tape.add_scalar(t, -(eta + theta));
        let t = tape.relu(t);
        let m = tape.mean(t);
        acc = Some(match acc {
            Some(a) => tape.add(a, m),
            None => m,
        });
    }
    let sign = match mode {
        UpperBoundMode::Hinge => 1.0,
        UpperBoundMode::PaperLiteral => -1.0,
    };
    tape.scale(acc.expect("negatives checked"), sign / negs.len() as f64)
}

/// Records the objective on `tape` for already-recorded embeddings.
pub fn loss_on_tape(
    tape: &mut Tape,
    anchor: Var,
    negatives: &[Var],
    structural: Var,
    event: Var,
    cfg: &LossConfig,
) -> Result<LossVars> {
    if negatives.is_empty() {
        return Err(Error::invalid(
            "loss",
            "at least one negative embedding is required",
        ));
    }
    let zeta_s = cfg
        .use_structure
        .then(|| tape_triplet(tape, anchor, structural, negatives, cfg.eta));
    let zeta_e = cfg
        .use_event
        .then(|| tape_triplet(tape, anchor, event, negatives, cfg.eta));
    let zeta_u = cfg.use_upper_bound.then(|| {
        tape_upper_bound(
            tape,
            anchor,
            structural,
            negatives,
            cfg.eta,
            cfg.theta,
            cfg.upper_bound_sign,
        )
    });
    let mut total = tape.leaf(Array2::zeros((1, 1)));
    for (term, w) in [(zeta_e, cfg.w_e), (zeta_s, cfg.w_s), (zeta_u, 1.0)] {
        if let Some(v) = term {
            let weighted = tape.scale(v, w);
            total = tape.add(total, weighted);
        }
    }
    Ok(LossVars {
        zeta_s,
        zeta_e,
        zeta_u,
        total,
    })
}

impl LossVars {
    pub fn report(&self, tape: &Tape) -> LossReport {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
        LossReport {
            zeta_s: get(self.zeta_s),
            zeta_e: get(self.zeta_e),
            zeta_u: get(self.zeta_u),
            zeta_total: tape.scalar(self.total),
            grad_norms: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(
        anchor: Array2<f64>,
        neg: Array2<f64>,
        structural: Array2<f64>,
        event: Array2<f64>,
    ) -> EmbeddingSet {
        EmbeddingSet {
            anchor,
            negatives: vec![neg],
            structural,
            event,
        }
    }

    #[test]
    fn dist2_examples() {
        assert_eq!(dist2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(dist2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert!(dist2(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn triplet_examples() {
        let z = array![[0.0, 0.0]];
        let far = array![[3.0, 4.0]];
        assert_eq!(triplet_loss(&z, &z, &[far.clone()], 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&z, &far, &[z.clone()], 0.0).unwrap(), 25.0);
        assert_eq!(triplet_loss(&z, &far, &[far.clone()], 0.0).unwrap(), 0.0);
        assert!(triplet_loss(&z, &z, &[], 0.0).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let z = array![[0.0, 0.0]];
        let far = array![[3.0, 4.0]];
        let hinge =
            upper_bound_loss(&z, &z, &[far.clone()], 0.9, 0.9, UpperBoundMode::Hinge).unwrap();
        let literal = upper_bound_loss(
            &z,
            &z,
            &[far.clone()],
            0.9,
            0.9,
            UpperBoundMode::PaperLiteral,
        )
        .unwrap();
        assert!((hinge - 23.2).abs() < 1e-12);
        assert!((literal + 23.2).abs() < 1e-12);
        assert_eq!(
            upper_bound_loss(&z, &z, &[far], 0.9, 1e9, UpperBoundMode::Hinge).unwrap(),
            0.0
        );
    }

    #[test]
    fn total_composes() {
        // structural positive far, event positive equal to anchor, negative far
        let z = array![[0.0, 0.0]];
        let far = array![[3.0, 4.0]];
        let s = set(z.clone(), z.clone(), far.clone(), far.clone());
        let cfg = LossConfig {
            eta: 0.0,
            ..Default::default()
        };
        let r = total_loss(&s, &cfg).unwrap();
        assert_eq!(r.zeta_s, 25.0);
        assert_eq!(r.zeta_e, 25.0);
        assert_eq!(r.zeta_total, r.zeta_s + r.zeta_e + r.zeta_u);

        let off = LossConfig {
            use_structure: false,
            use_event: false,
            use_upper_bound: false,
            ..cfg
        };
        assert_eq!(total_loss(&s, &off).unwrap().zeta_total, 0.0);
    }

    #[test]
    fn event_row_broadcasts() {
        let h = array![[0.0, 0.0], [2.0, 0.0]];
        let e = array![[1.0, 0.0]];
        let neg = array![[2.0, 0.0], [0.0, 0.0]];
        // d⁺ = [1, 1], d⁻ = [4, 4]; η = 4 → relu(1 − 4 + 4) = 1
        assert_eq!(triplet_loss(&h, &e, &[neg], 4.0).unwrap(), 1.0);
    }

    #[test]
    fn tape_matches_plain() {
        let h = array![[0.1, 0.7], [0.4, -0.3], [1.2, 0.5]];
        let n1 = array![[0.4, -0.3], [1.2, 0.5], [0.1, 0.7]];
        let n2 = array![[1.2, 0.5], [0.1, 0.7], [0.4, -0.3]];
        let s = array![[0.2, 0.6], [0.0, 0.1], [0.9, 0.9]];
        let e = array![[0.5, 0.3]];
        for mode in [UpperBoundMode::Hinge, UpperBoundMode::PaperLiteral] {
            let cfg = LossConfig {
                eta: 0.3,
                theta: 0.1,
                w_e: 0.7,
                w_s: 1.3,
                k_negatives: 2,
                upper_bound_sign: mode,
                ..Default::default()
            };
            let plain = total_loss(
                &EmbeddingSet {
                    anchor: h.clone(),
                    negatives: vec![n1.clone(), n2.clone()],
                    structural: s.clone(),
                    event: e.clone(),
                },
                &cfg,
            )
            .unwrap();
            let mut tape = Tape::new();
            let hv = tape.leaf(h.clone());
            let nv = [tape.leaf(n1.clone()), tape.leaf(n2.clone())];
            let sv = tape.leaf(s.clone());
            let ev = tape.leaf(e.clone());
            let vars = loss_on_tape(&mut tape, hv, &nv, sv, ev, &cfg).unwrap();
            let r = vars.report(&tape);
            assert!((r.zeta_s - plain.zeta_s).abs() < 1e-14);
            assert!((r.zeta_e - plain.zeta_e).abs() < 1e-14);
            assert!((r.zeta_u - plain.zeta_u).abs() < 1e-14);
            assert!((r.zeta_total - plain.zeta_total).abs() < 1e-14);
        }
    }

    #[test]
    fn clamped_region_has_zero_gradient() {
        let mut tape = Tape::new();
        let h = tape.leaf(array![[0.0, 0.0]]);
        let n = tape.leaf(array![[1.0, 0.0]]);
        let s = tape.leaf(array![[0.0, 0.0]]);
        let e = tape.leaf(array![[0.0, 0.0]]);
        // d⁺ = 0, d⁻ = 1, η = 0.5, θ = 1: every term clamps
        let cfg = LossConfig {
            eta: 0.5,
            theta: 1.0,
            ..Default::default()
        };
        let vars = loss_on_tape(&mut tape, h, &[n], s, e, &cfg).unwrap();
        assert_eq!(tape.scalar(vars.total), 0.0);
        let g = tape.backward(vars.total);
        for v in [h, n, s, e] {
            assert!(g.get_or_zeros(v, (1, 2)).iter().all(|&x| x == 0.0));
        }
    }
}
