//! Information-gain quantities on small discrete distributions and the
//! Monte-Carlo regularizer used during adversarial training.
//!
//! All values are in nats.

use crate::discriminator::DiscRunner;
use crate::error::{bail, Result};
use crate::generator::{Generator, SampledSequence};
use crate::numeric::{compensated_sum, Rng};

const TOL: f64 = 1e-9;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        bail!(Argument, "{what} is empty");
    }
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        bail!(Argument, "{what} has negative or non-finite entries");
    }
    let s = compensated_sum(p.iter().copied());
    if (s - 1.0).abs() > TOL {
        bail!(Argument, "{what} sums to {s}, not 1");
    }
    Ok(())
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `H(p) = -sum p log p`, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p, "distribution")?;
    Ok((-compensated_sum(p.iter().map(|&v| plogp(v)))).max(0.0))
}

/// Joint distribution `p(c, x)` stored row-major, one row per `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(rows: usize, cols: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != rows * cols {
            bail!(Argument, "joint table has {} entries, expected {}", p.len(), rows * cols);
        }
        check_distribution(&p, "joint")?;
        Ok(Self { rows, cols, p })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, c: usize, x: usize) -> f64 {
        self.p[c * self.cols + x]
    }

    /// Marginal over rows (`c`).
    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|c| compensated_sum((0..self.cols).map(|x| self.get(c, x))))
            .collect()
    }

    /// Marginal over columns (`x`).
    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|x| compensated_sum((0..self.rows).map(|c| self.get(c, x))))
            .collect()
    }

    /// Exact posterior `p(c | x)` as an auxiliary table. Columns with zero
    /// mass get a uniform distribution.
    pub fn posterior(&self) -> AuxiliaryQ {
        let px = self.col_marginal();
        let mut q = vec![0.0; self.rows * self.cols];
        for x in 0..self.cols {
            for c in 0..self.rows {
                q[c * self.cols + x] = if px[x] > 0.0 {
                    self.get(c, x) / px[x]
                } else {
                    1.0 / self.rows as f64
                };
            }
        }
        AuxiliaryQ {
            rows: self.rows,
            cols: self.cols,
            q,
        }
    }
}

/// Conditional table `q(c | x)`, row-major by `c`; every column sums to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryQ {
    rows: usize,
    cols: usize,
    q: Vec<f64>,
}

impl AuxiliaryQ {
    pub fn new(rows: usize, cols: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != rows * cols {
            bail!(Argument, "q table has {} entries, expected {}", q.len(), rows * cols);
        }
        for x in 0..cols {
            let col: Vec<f64> = (0..rows).map(|c| q[c * cols + x]).collect();
            check_distribution(&col, "q column")?;
        }
        Ok(Self { rows, cols, q })
    }

    pub fn get(&self, c: usize, x: usize) -> f64 {
        self.q[c * self.cols + x]
    }
}

/// `I(c; x) = H(c) - H(c | x)`.
pub fn mutual_information(joint: &DiscreteJoint) -> f64 {
    let hc = -compensated_sum(joint.row_marginal().into_iter().map(plogp));
    let px = joint.col_marginal();
    // H(c | x) = -sum p(c, x) log p(c | x)
    let hcx = -compensated_sum((0..joint.rows).flat_map(|c| {
        let px = &px;
        (0..joint.cols).map(move |x| {
            let p = joint.get(c, x);
            if p > 0.0 {
                p * (p / px[x]).ln()
            } else {
                0.0
            }
        })
    }));
    (hc - hcx).max(0.0)
}

/// `L = sum p(c, x) log q(c | x) + H(c)`; `-inf` when `q` misses support.
pub fn variational_lower_bound(joint: &DiscreteJoint, q: &AuxiliaryQ) -> Result<f64> {
    if (q.rows, q.cols) != (joint.rows, joint.cols) {
        bail!(Argument, "q and joint shapes differ");
    }
    let hc = -compensated_sum(joint.row_marginal().into_iter().map(plogp));
    let mut terms = Vec::with_capacity(joint.p.len());
    for c in 0..joint.rows {
        for x in 0..joint.cols {
            let p = joint.get(c, x);
            if p > 0.0 {
                let qv = q.get(c, x);
                if qv <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                terms.push(p * qv.ln());
            }
        }
    }
    Ok(compensated_sum(terms) + hc)
}

/// Both sides of the resampling identity
/// `E_{x,y}[f(x, y)] = E_{x,y} E_{x' ~ p(.|y)}[f(x', y)]`, computed exactly.
///
/// `joint` is laid out with `x` on rows and `y` on columns; `f` likewise.
pub fn lemma_expectation_check(f: &[f64], joint: &DiscreteJoint) -> Result<(f64, f64)> {
    if f.len() != joint.p.len() {
        bail!(Argument, "function table does not match the joint");
    }
    let (nx, ny) = (joint.rows, joint.cols);
    let lhs = compensated_sum((0..nx).flat_map(|x| (0..ny).map(move |y| joint.get(x, y) * f[x * ny + y])));
    let py = joint.col_marginal();
    let inner: Vec<f64> = (0..ny)
        .map(|y| {
            if py[y] > 0.0 {
                compensated_sum((0..nx).map(|x2| joint.get(x2, y) / py[y] * f[x2 * ny + y]))
            } else {
                0.0
            }
        })
        .collect();
    let rhs = compensated_sum((0..nx).flat_map(|x| {
        let inner = &inner;
        (0..ny).map(move |y| joint.get(x, y) * inner[y])
    }));
    Ok((lhs, rhs))
}

/// Monte-Carlo estimate of the lower bound on generated samples.
#[derive(Clone, Debug)]
pub struct IgmEstimate {
    /// Batch mean of `log Q(c | x)` plus `ln C`.
    pub value: f64,
    pub samples: Vec<SampledSequence>,
    pub log_q: Vec<f64>,
}

impl IgmEstimate {
    /// Per-sample generator rewards `lambda * (log Q(c_i | x_i) + ln C)`.
    pub fn rewards(&self, lambda: f64, categories: usize) -> Vec<f64> {
        let h = (categories as f64).ln();
        self.log_q.iter().map(|l| lambda * (l + h)).collect()
    }
}

/// Draws `c` uniformly, samples `x ~ G(z, c)` and scores `log Q(c | x)`
/// with `D_f`'s auxiliary head.
pub fn igm_regularizer_estimate(
    gen: &Generator,
    df: &DiscRunner<'_>,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<IgmEstimate> {
    if batch_size < 1 {
        bail!(Argument, "batch size must be at least 1");
    }
    let c_count = gen.config().categories;
    let sampler = gen.sampler();
    let mut samples = Vec::with_capacity(batch_size);
    let mut log_q = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let c = rng.below(c_count);
        let s = sampler.sample_one(c, rng);
        let Some(q) = df.forward(&s.seq, c, None)?.q else {
            bail!(Usage, "regularizer needs a D_f model with a Q head");
        };
        if q.len() != c_count {
            bail!(Config, "generator has {c_count} categories, Q head has {}", q.len());
        }
        log_q.push(q[c].ln());
        samples.push(s);
    }
    let value = compensated_sum(log_q.iter().copied()) / batch_size as f64 + (c_count as f64).ln();
    Ok(IgmEstimate { value, samples, log_q })
}
