//! Sufficient statistics of the hybrid ridge regression behind LMDH.
//!
//! The joint design matrix over `ζ = [z; x]` is
//!
//! ```text
//! Φ = λI + Σ ζζᵀ = [ A   C ]      A = λI_d + Σ zzᵀ
//!                  [ Cᵀ  D ]      C = Σ zxᵀ,  D = λI_m + Σ xxᵀ
//! ```
//!
//! and it is never stored. Instead the statistics keep `M = D`, `B = C`,
//! `y = Σ w x`, the Schur complement `H = A - B M⁻¹ Bᵀ` and
//! `u = Σ w z - B M⁻¹ y`. With these, `θ̂ = H⁻¹u`,
//! `β̂ = M⁻¹(y - Bᵀθ̂)` and `ζᵀΦ⁻¹ζ` expands into four `d`/`m`-sized terms.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::catalog::MarginalGain;
use crate::error::{Error, Result};

/// Hyperparameters of the LMDH policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmdhConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub d: usize,
    pub m: usize,
    pub k: usize,
}

impl LmdhConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        // Zero exploration is allowed: it turns LMDH into greedy exploitation.
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.d == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::Config("d, m and K must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct HybridStatistics {
    d: usize,
    m: usize,
    lambda: f64,
    h: DMatrix<f64>,
    b: DMatrix<f64>,
    mm: DMatrix<f64>,
    u: DVector<f64>,
    y: DVector<f64>,
    h_inv: DMatrix<f64>,
    m_inv: DMatrix<f64>,
    observations: u64,
    width_clamps: AtomicU64,
}

impl Clone for HybridStatistics {
    fn clone(&self) -> Self {
        Self {
            d: self.d,
            m: self.m,
            lambda: self.lambda,
            h: self.h.clone(),
            b: self.b.clone(),
            mm: self.mm.clone(),
            u: self.u.clone(),
            y: self.y.clone(),
            h_inv: self.h_inv.clone(),
            m_inv: self.m_inv.clone(),
            observations: self.observations,
            width_clamps: AtomicU64::new(self.width_clamps.load(Ordering::Relaxed)),
        }
    }
}

fn spd_inverse(mat: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    mat.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NumericalDegeneracy(what))
}

fn symmetrize(mat: &mut DMatrix<f64>) {
    let t = mat.transpose();
    *mat += t;
    *mat *= 0.5;
}

impl HybridStatistics {
    /// `H = λI_d`, `M = λI_m`, `B = 0`, `u = 0`, `y = 0`.
    pub fn new(d: usize, m: usize, lambda: f64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Config("d and m must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self {
            d,
            m,
            lambda,
            h: DMatrix::identity(d, d) * lambda,
            b: DMatrix::zeros(d, m),
            mm: DMatrix::identity(m, m) * lambda,
            u: DVector::zeros(d),
            y: DVector::zeros(m),
            h_inv: DMatrix::identity(d, d) / lambda,
            m_inv: DMatrix::identity(m, m) / lambda,
            observations: 0,
            width_clamps: AtomicU64::new(0),
        })
    }

    pub fn relevance_dim(&self) -> usize {
        self.d
    }

    pub fn diversity_dim(&self) -> usize {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of individual (item, reward) observations folded in.
    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// Times a numerically negative width was clamped to zero.
    pub fn width_clamps(&self) -> u64 {
        self.width_clamps.load(Ordering::Relaxed)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn m(&self) -> &DMatrix<f64> {
        &self.mm
    }
    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn h_inv(&self) -> &DMatrix<f64> {
        &self.h_inv
    }
    pub fn m_inv(&self) -> &DMatrix<f64> {
        &self.m_inv
    }

    /// `(θ̂, β̂) = (H⁻¹u, M⁻¹(y - Bᵀθ̂))`.
    pub fn estimate(&self) -> (DVector<f64>, DVector<f64>) {
        let theta = &self.h_inv * &self.u;
        let beta = &self.m_inv * (&self.y - self.b.transpose() * &theta);
        (theta, beta)
    }

    fn check_dims(&self, z: &[f64], x: &[f64]) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::Dimension {
                what: "relevance feature",
                expected: self.d,
                found: z.len(),
            });
        }
        if x.len() != self.m {
            return Err(Error::Dimension {
                what: "diversity feature",
                expected: self.m,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `zᵀH⁻¹z - 2zᵀH⁻¹BM⁻¹x + xᵀM⁻¹x + xᵀM⁻¹BᵀH⁻¹BM⁻¹x`, which equals
    /// `ζᵀΦ⁻¹ζ`. May be slightly negative from rounding; see [`ucb_score`].
    pub fn confidence_width(&self, z: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(z, x)?;
        Ok(self.scorer().raw_width(z, x))
    }

    /// Per-round cache of everything the width and score need.
    pub fn scorer(&self) -> RoundScorer<'_> {
        let (theta, beta) = self.estimate();
        let cross = &self.h_inv * &self.b * &self.m_inv;
        let diversity_quad = &self.m_inv + cross.transpose() * &self.b * &self.m_inv;
        RoundScorer {
            stats: self,
            theta,
            beta,
            cross,
            diversity_quad,
        }
    }

    /// Folds in one round of feedback. `features[k]` must be the marginal
    /// features logged when position `k` was chosen.
    pub fn update(&mut self, features: &[MarginalGain], rewards: &[f64]) -> Result<()> {
        if features.len() != rewards.len() {
            return Err(Error::Dimension {
                what: "rewards per slate position",
                expected: features.len(),
                found: rewards.len(),
            });
        }
        for (f, &w) in features.iter().zip(rewards) {
            self.check_dims(&f.relevance, &f.diversity)?;
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidFeedback(w));
            }
        }
        if features.is_empty() {
            return Ok(());
        }

        // H ← H + B M⁻¹ Bᵀ and u ← u + B M⁻¹ y restore A and Σ w z.
        let bm = &self.b * &self.m_inv;
        let mut h = &self.h + &bm * self.b.transpose();
        let mut u = &self.u + &bm * &self.y;

        let mut zz = DMatrix::<f64>::zeros(self.d, self.d);
        let mut wz = DVector::<f64>::zeros(self.d);
        for (f, &w) in features.iter().zip(rewards) {
            let z = DVector::from_column_slice(&f.relevance);
            let x = DVector::from_column_slice(&f.diversity);
            zz += &z * z.transpose();
            wz += &z * w;
            self.mm += &x * x.transpose();
            self.b += &z * x.transpose();
            self.y += &x * w;
        }
        symmetrize(&mut self.mm);
        self.m_inv = spd_inverse(&self.mm, "M is not positive definite")?;

        let bm = &self.b * &self.m_inv;
        h += zz - &bm * self.b.transpose();
        u += wz - &bm * &self.y;
        symmetrize(&mut h);
        self.h_inv = spd_inverse(&h, "H is not positive definite")?;
        self.h = h;
        self.u = u;
        self.observations += features.len() as u64;
        Ok(())
    }

    /// `Φ` rebuilt from the blocks: `[[H + BM⁻¹Bᵀ, B], [Bᵀ, M]]`.
    pub fn joint_design(&self) -> DMatrix<f64> {
        let n = self.d + self.m;
        let mut phi = DMatrix::zeros(n, n);
        let a = &self.h + &self.b * &self.m_inv * self.b.transpose();
        phi.view_mut((0, 0), (self.d, self.d)).copy_from(&a);
        phi.view_mut((0, self.d), (self.d, self.m)).copy_from(&self.b);
        phi.view_mut((self.d, 0), (self.m, self.d)).copy_from(&self.b.transpose());
        phi.view_mut((self.d, self.d), (self.m, self.m)).copy_from(&self.mm);
        phi
    }

    /// Textual snapshot: a `d,m,lambda,observations` header and value row,
    /// followed by `block,row,col,value` rows (row-major) for `H`, `B`, `M`,
    /// `u` and `y`. Floats use shortest round-trip formatting.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "d,m,lambda,observations");
        let _ = writeln!(out, "{},{},{},{}", self.d, self.m, self.lambda, self.observations);
        let _ = writeln!(out, "block,row,col,value");
        let mut emit = |name: &str, mat: &DMatrix<f64>| {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    let _ = writeln!(out, "{name},{r},{c},{}", mat[(r, c)]);
                }
            }
        };
        emit("H", &self.h);
        emit("B", &self.b);
        emit("M", &self.mm);
        let u = DMatrix::from_column_slice(self.d, 1, self.u.as_slice());
        let y = DMatrix::from_column_slice(self.m, 1, self.y.as_slice());
        emit("u", &u);
        emit("y", &y);
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Snapshot(msg);
        let mut lines = text.lines();
        if lines.next() != Some("d,m,lambda,observations") {
            return Err(bad("missing header".into()));
        }
        let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing metadata".into()))?.split(',').collect();
        if meta.len() != 4 {
            return Err(bad("metadata row needs 4 fields".into()));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
        let d = parse_usize(meta[0])?;
        let m = parse_usize(meta[1])?;
        let lambda: f64 = meta[2].parse().map_err(|e| bad(format!("{}: {e}", meta[2])))?;
        let observations: u64 = meta[3].parse().map_err(|e| bad(format!("{}: {e}", meta[3])))?;
        let mut stats = Self::new(d, m, lambda)?;
        if lines.next() != Some("block,row,col,value") {
            return Err(bad("missing block header".into()));
        }
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("malformed row `{line}`")));
            }
            let r = parse_usize(f[1])?;
            let c = parse_usize(f[2])?;
            let v: f64 = f[3].parse().map_err(|e| bad(format!("{}: {e}", f[3])))?;
            let (rows, cols) = match f[0] {
                "H" => (d, d),
                "B" => (d, m),
                "M" => (m, m),
                "u" => (d, 1),
                "y" => (m, 1),
                other => return Err(bad(format!("unknown block {other}"))),
            };
            if r >= rows || c >= cols {
                return Err(bad(format!("index ({r},{c}) out of range for {}", f[0])));
            }
            match f[0] {
                "H" => stats.h[(r, c)] = v,
                "B" => stats.b[(r, c)] = v,
                "M" => stats.mm[(r, c)] = v,
                "u" => stats.u[r] = v,
                _ => stats.y[r] = v,
            }
        }
        stats.h_inv = spd_inverse(&stats.h, "H is not positive definite")?;
        stats.m_inv = spd_inverse(&stats.mm, "M is not positive definite")?;
        stats.observations = observations;
        Ok(stats)
    }
}

/// A frozen view of the statistics for scoring one round. Holds `θ̂`, `β̂`,
/// `H⁻¹BM⁻¹` and `M⁻¹ + M⁻¹BᵀH⁻¹BM⁻¹` so each width costs
/// `O(d² + dm + m²)`.
#[derive(Debug)]
pub struct RoundScorer<'a> {
    stats: &'a HybridStatistics,
    pub theta: DVector<f64>,
    pub beta: DVector<f64>,
    cross: DMatrix<f64>,
    diversity_quad: DMatrix<f64>,
}

fn quad(mat: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for r in 0..n {
        let mut row = 0.0;
        for c in 0..n {
            row += mat[(r, c)] * v[c];
        }
        total += v[r] * row;
    }
    total
}

fn bilinear(mat: &DMatrix<f64>, left: &[f64], right: &[f64]) -> f64 {
    let mut total = 0.0;
    for (r, l) in left.iter().enumerate() {
        for (c, rv) in right.iter().enumerate() {
            total += l * mat[(r, c)] * rv;
        }
    }
    total
}

impl RoundScorer<'_> {
    /// `zᵀH⁻¹z`, cacheable per item because `z` does not depend on the slate.
    pub fn relevance_width(&self, z: &[f64]) -> f64 {
        quad(&self.stats.h_inv, z)
    }

    /// The unclamped width given a cached `zᵀH⁻¹z`.
    pub fn width_with(&self, relevance_width: f64, z: &[f64], x: &[f64]) -> f64 {
        relevance_width - 2.0 * bilinear(&self.cross, z, x) + quad(&self.diversity_quad, x)
    }

    pub fn raw_width(&self, z: &[f64], x: &[f64]) -> f64 {
        self.width_with(self.relevance_width(z), z, x)
    }

    pub fn estimate_score(&self, z: &[f64], x: &[f64]) -> f64 {
        let t: f64 = self.theta.iter().zip(z).map(|(a, b)| a * b).sum();
        let b: f64 = self.beta.iter().zip(x).map(|(a, b)| a * b).sum();
        t + b
    }

    /// Clamps a negative width to zero, counting the event.
    pub fn clamp_width(&self, width: f64) -> f64 {
        if width < 0.0 {
            self.stats.width_clamps.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            width
        }
    }
}

/// `μ = θ̂ᵀz + β̂ᵀx + α√v`, with `v` clamped at zero.
pub fn ucb_score(
    z: &[f64],
    x: &[f64],
    stats: &HybridStatistics,
    theta_hat: &DVector<f64>,
    beta_hat: &DVector<f64>,
    alpha: f64,
) -> Result<f64> {
    let scorer = stats.scorer();
    let width = scorer.clamp_width(stats.confidence_width(z, x)?);
    let t: f64 = theta_hat.iter().zip(z).map(|(a, b)| a * b).sum();
    let b: f64 = beta_hat.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(t + b + alpha * width.sqrt())
}
