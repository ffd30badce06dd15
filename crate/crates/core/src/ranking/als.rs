use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{non_empty, RankingScorer};
use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::linalg::cholesky_solve;
use crate::rng;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsConfig {
    pub factors: usize,
    pub alpha: f64,
    pub reg: f64,
    pub sweeps: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            factors: 50,
            alpha: 40.0,
            reg: 0.01,
            sweeps: 15,
            init_std: 0.01,
            seed: 0,
        }
    }
}

/// Confidence-weighted implicit matrix factorisation solved by exact
/// alternating least squares.
#[derive(Debug, Clone)]
pub struct Als<T> {
    cfg: AlsConfig,
    state: Option<AlsState<T>>,
}

#[derive(Debug, Clone)]
struct AlsState<T> {
    x: Vec<T>,
    y: Vec<T>,
    losses: Vec<f64>,
    ops: u64,
}

impl<T: Scalar> Als<T> {
    pub fn new(cfg: AlsConfig) -> Self {
        Als { cfg, state: None }
    }

    /// Full objective after each half-sweep (users, then items).
    pub fn loss_history(&self) -> &[f64] {
        self.state.as_ref().map_or(&[], |s| &s.losses)
    }

    pub fn factors(&self) -> Option<(&[T], &[T])> {
        self.state.as_ref().map(|s| (s.x.as_slice(), s.y.as_slice()))
    }
}

/// One side of the alternation: for every row `r` of `solve` with positives
/// `rows[r]`, set it to the minimiser given the fixed `other` factors.
fn half_sweep<T: Scalar>(solve: &mut [T], other: &[T], rows: &[Vec<u32>], f: usize, alpha: T, reg: T) -> u64 {
    let n_other = other.len() / f;
    let mut gram = vec![T::zero(); f * f];
    for v in other.chunks_exact(f) {
        for a in 0..f {
            let va = v[a];
            for b in 0..=a {
                gram[a * f + b] += va * v[b];
            }
        }
    }
    for a in 0..f {
        gram[a * f + a] += reg;
        for b in 0..a {
            gram[b * f + a] = gram[a * f + b];
        }
    }
    let one_plus = T::one() + alpha;
    let mut a_mat = vec![T::zero(); f * f];
    let mut rhs = vec![T::zero(); f];
    let mut ops = (n_other * f * f) as u64;
    for (r, pos) in rows.iter().enumerate() {
        let out = &mut solve[r * f..(r + 1) * f];
        if pos.is_empty() {
            out.iter_mut().for_each(|v| *v = T::zero());
            continue;
        }
        a_mat.copy_from_slice(&gram);
        rhs.iter_mut().for_each(|v| *v = T::zero());
        for &j in pos {
            let v = &other[j as usize * f..(j as usize + 1) * f];
            for a in 0..f {
                let av = alpha * v[a];
                rhs[a] += one_plus * v[a];
                for b in 0..=a {
                    a_mat[a * f + b] += av * v[b];
                }
            }
        }
        for a in 0..f {
            for b in 0..a {
                a_mat[b * f + a] = a_mat[a * f + b];
            }
        }
        if cholesky_solve(&mut a_mat, &mut rhs, f).is_none() {
            // reg > 0 keeps the system definite; this only happens with reg = 0.
            continue;
        }
        out.copy_from_slice(&rhs);
        ops += (pos.len() * f * f + f * f * f / 3) as u64;
    }
    ops
}

/// Σ_ui c_ui (p_ui − x_u·y_i)² + reg (‖X‖² + ‖Y‖²), evaluated without
/// visiting the zero cells one by one.
fn objective<T: Scalar>(x: &[T], y: &[T], by_user: &[Vec<u32>], f: usize, alpha: f64, reg: f64) -> f64 {
    let gram = |m: &[T]| {
        let mut g = vec![0.0; f * f];
        for v in m.chunks_exact(f) {
            for a in 0..f {
                for b in 0..f {
                    g[a * f + b] += v[a].as_f64() * v[b].as_f64();
                }
            }
        }
        g
    };
    let (gx, gy) = (gram(x), gram(y));
    // Σ over all cells of (x·y)² = tr(GxGy)
    let mut total: f64 = (0..f * f).map(|k| gx[k] * gy[k]).sum();
    for (u, items) in by_user.iter().enumerate() {
        for &i in items {
            let s = dot(&x[u * f..(u + 1) * f], &y[i as usize * f..(i as usize + 1) * f]).as_f64();
            total += (1.0 + alpha) * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    let norms: f64 = x.iter().chain(y).map(|v| v.as_f64() * v.as_f64()).sum();
    total + reg * norms
}

impl<T: Scalar> RankingScorer<T> for Als<T> {
    fn name(&self) -> &str {
        "als"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let c = self.cfg;
        if c.factors == 0 || c.reg < 0.0 || c.alpha < 0.0 {
            return Err(ModelError::Config(format!("bad ALS settings {c:?}")));
        }
        let f = c.factors;
        let by_user = train.by_user();
        let by_item = train.by_item();
        let normal = Normal::new(0.0, c.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut init = rng::stream(c.seed, rng::INIT);
        let mut x: Vec<T> = (0..by_user.len() * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let mut y: Vec<T> = (0..by_item.len() * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let (alpha, reg) = (T::of(c.alpha), T::of(c.reg));
        let mut ops = 0;
        let mut losses = Vec::with_capacity(2 * c.sweeps);
        for _ in 0..c.sweeps {
            ops += half_sweep(&mut x, &y, &by_user, f, alpha, reg);
            losses.push(objective(&x, &y, &by_user, f, c.alpha, c.reg));
            ops += half_sweep(&mut y, &x, &by_item, f, alpha, reg);
            losses.push(objective(&x, &y, &by_user, f, c.alpha, c.reg));
        }
        self.state = Some(AlsState { x, y, losses, ops });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let f = self.cfg.factors;
        let (u, i) = (u as usize, i as usize);
        if (u + 1) * f > s.x.len() || (i + 1) * f > s.y.len() {
            return Ok(T::zero());
        }
        Ok(dot(&s.x[u * f..(u + 1) * f], &s.y[i * f..(i + 1) * f]))
    }

    fn score_all(&self, u: UserIdx, out: &mut [T]) -> Result<(), ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let f = self.cfg.factors;
        let u = u as usize;
        let xu = s.x.get(u * f..(u + 1) * f);
        for (i, o) in out.iter_mut().enumerate() {
            *o = match (xu, s.y.get(i * f..(i + 1) * f)) {
                (Some(a), Some(b)) => dot(a, b),
                _ => T::zero(),
            };
        }
        Ok(())
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn score_ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| (s.y.len() * 2) as u64)
    }
}
