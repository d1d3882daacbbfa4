//! Tape-free forward passes.

use super::{DiscKind, DiscOutput, Discriminator, Example};
use crate::corpus::{EmbeddingTable, TokenSeq};
use crate::error::Result;
use crate::numeric::{affine_row, softmax_in_place};

/// Above this many cached values the runner convolves directly.
const CACHE_LIMIT: usize = 1 << 24;

enum Conv {
    /// Per window: `|V| x (u * F)` table whose row `v` holds
    /// `emb[v] * K[j]` for every offset `j`.
    Cached(Vec<Vec<f64>>),
    Direct,
}

/// Forward evaluator bound to one model state and embedding table.
pub struct DiscRunner<'a> {
    disc: &'a Discriminator,
    emb: &'a EmbeddingTable,
    conv: Conv,
}

impl<'a> DiscRunner<'a> {
    /// Picks the per-token projection cache when it is small enough.
    pub fn new(disc: &'a Discriminator, emb: &'a EmbeddingTable) -> Result<Self> {
        let cfg = &disc.config;
        let size: usize = cfg
            .windows
            .iter()
            .zip(&cfg.filters)
            .map(|(u, f)| emb.rows() * u * f)
            .sum();
        if size > CACHE_LIMIT {
            return Self::direct(disc, emb);
        }
        Self::cached(disc, emb)
    }

    pub fn direct(disc: &'a Discriminator, emb: &'a EmbeddingTable) -> Result<Self> {
        Self::check(disc, emb)?;
        Ok(Self {
            disc,
            emb,
            conv: Conv::Direct,
        })
    }

    pub fn cached(disc: &'a Discriminator, emb: &'a EmbeddingTable) -> Result<Self> {
        Self::check(disc, emb)?;
        let cfg = &disc.config;
        let e = cfg.embed_dim;
        let mut tables = Vec::with_capacity(cfg.windows.len());
        for (&u, &f) in cfg.windows.iter().zip(&cfg.filters) {
            let k = disc.params.expect(&format!("conv{u}.w")).data();
            let zero = vec![0.0; f];
            let mut table = vec![0.0; emb.rows() * u * f];
            for v in 0..emb.rows() {
                let x = emb.row(v);
                for j in 0..u {
                    let out = &mut table[(v * u + j) * f..(v * u + j + 1) * f];
                    affine_row(x, &k[j * e * f..(j + 1) * e * f], &zero, out);
                }
            }
            tables.push(table);
        }
        Ok(Self {
            disc,
            emb,
            conv: Conv::Cached(tables),
        })
    }

    fn check(disc: &Discriminator, emb: &EmbeddingTable) -> Result<()> {
        if emb.dim() != disc.config.embed_dim {
            crate::error::bail!(
                Config,
                "embedding dim {} does not match {}",
                emb.dim(),
                disc.config.embed_dim
            );
        }
        Ok(())
    }

    /// Pooled feature vector `f`.
    fn pooled(&self, seq: &TokenSeq) -> Vec<f64> {
        let cfg = &self.disc.config;
        let (t, e) = (cfg.max_len, cfg.embed_dim);
        let ids = seq.ids();
        let mut f = Vec::with_capacity(cfg.pooled_dim());
        for (wi, (&u, &nf)) in cfg.windows.iter().zip(&cfg.filters).enumerate() {
            let bias = self.disc.params.expect(&format!("conv{u}.b")).data();
            let mut best = vec![f64::NEG_INFINITY; nf];
            let mut m = vec![0.0; nf];
            let mut window = Vec::new();
            for p in 0..=t - u {
                match &self.conv {
                    Conv::Cached(tables) => {
                        m.copy_from_slice(bias);
                        for j in 0..u {
                            let v = ids[p + j];
                            let row = &tables[wi][(v * u + j) * nf..(v * u + j + 1) * nf];
                            for (a, b) in m.iter_mut().zip(row) {
                                *a += b;
                            }
                        }
                    }
                    Conv::Direct => {
                        window.clear();
                        for j in 0..u {
                            window.extend_from_slice(self.emb.row(ids[p + j]));
                        }
                        let k = self.disc.params.expect(&format!("conv{u}.w")).data();
                        debug_assert_eq!(window.len(), u * e);
                        affine_row(&window, k, bias, &mut m);
                    }
                }
                for (b, &x) in best.iter_mut().zip(&m) {
                    let r = if x > 0.0 { x } else { 0.0 };
                    if r > *b {
                        *b = r;
                    }
                }
            }
            f.extend(best);
        }
        f
    }

    pub fn forward(&self, seq: &TokenSeq, category: usize, features: Option<&[f64; 4]>) -> Result<DiscOutput> {
        self.disc.check_input(self.emb, seq)?;
        let f = self.pooled(seq);
        let mut fe = f.clone();
        fe.extend(self.disc.extras(category, features)?);
        let params = &self.disc.params;
        let mut p = vec![0.0; 2];
        affine_row(&fe, params.expect("p.w").data(), params.expect("p.b").data(), &mut p);
        softmax_in_place(&mut p);
        let q = if self.disc.config.kind == DiscKind::Df {
            let c = self.disc.config.categories;
            let mut q = vec![0.0; c];
            affine_row(&f, params.expect("q.w").data(), params.expect("q.b").data(), &mut q);
            softmax_in_place(&mut q);
            Some(q)
        } else {
            None
        };
        Ok(DiscOutput { p, q })
    }

    /// Probability of label 1 (fraud for `D_g`, human for `D_f`).
    pub fn positive_prob(&self, seq: &TokenSeq, category: usize, features: Option<&[f64; 4]>) -> Result<f64> {
        Ok(self.forward(seq, category, features)?.p[1])
    }

    pub fn forward_example(&self, ex: &Example) -> Result<DiscOutput> {
        self.forward(&ex.seq, ex.category, ex.features.as_ref())
    }
}
