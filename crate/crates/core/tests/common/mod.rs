//! Shared fixtures: a finite two-sample problem whose functionals are exact
//! sums, used for finite-difference orthogonality checks.

#![allow(dead_code)]

use std::sync::Arc;

use udebias::covshift::{comparison_a_with, debiased_kernel, plugin_kernel, LabeledPoint, Method, NuisanceBundle, ScoreFn, TaggedPoint};
use udebias::ustat::PairKernel;

/// Joint laws `F` and `G` on the atoms `(x, y)` with `x ∈ xs`, `y ∈ ys`.
pub struct DiscreteProblem {
    pub atoms: Vec<(f64, f64)>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub score: ScoreFn,
}

const ZETA_X: f64 = 0.3;
const ZETA_U: f64 = 0.6;

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

impl DiscreteProblem {
    /// Four covariate values, three responses, unequal conditionals.
    pub fn standard() -> Self {
        let xs = [-1.0, 0.0, 1.0, 2.0];
        let ys = [0.0, 1.0, 2.0];
        let mut atoms = Vec::new();
        let mut f = Vec::new();
        let mut g = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            for (k, &y) in ys.iter().enumerate() {
                atoms.push((x, y));
                f.push(1.0 + ((i * 3 + k * 5) % 7) as f64);
                g.push(1.0 + ((i * 5 + k * 2 + 3) % 6) as f64 + 0.5 * i as f64);
            }
        }
        Self {
            atoms,
            f: normalize(f),
            g: normalize(g),
            score: Arc::new(|x: &[f64], y: f64| y - 0.37 * x[0]),
        }
    }

    fn covariates(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    fn marginal(&self, p: &[f64], x: f64) -> f64 {
        self.atoms.iter().zip(p).filter(|(a, _)| a.0 == x).map(|(_, w)| w).sum()
    }

    pub fn x_point(&self, k: usize) -> TaggedPoint {
        let (x, y) = self.atoms[k];
        TaggedPoint { point: LabeledPoint::new(vec![x], y), zeta: ZETA_X, index: k }
    }

    pub fn u_point(&self, k: usize) -> TaggedPoint {
        let (x, y) = self.atoms[k];
        TaggedPoint { point: LabeledPoint::new(vec![x], y), zeta: ZETA_U, index: k }
    }

    /// `γ = g/f` on the covariates of `(f, g)`.
    pub fn gamma_table(&self, f: &[f64], g: &[f64]) -> Vec<(f64, f64)> {
        self.covariates().into_iter().map(|x| (x, self.marginal(g, x) / self.marginal(f, x))).collect()
    }

    /// `α(x) = E_{f(y|x) × g}[a]` on the covariates of `(f, g)`.
    pub fn alpha_table(&self, f: &[f64], g: &[f64]) -> Vec<(f64, f64)> {
        self.covariates()
            .into_iter()
            .map(|x| {
                let fx = self.marginal(f, x);
                let mut total = 0.0;
                for (p, wf) in f.iter().enumerate() {
                    if self.atoms[p].0 != x {
                        continue;
                    }
                    for (q, wg) in g.iter().enumerate() {
                        let a = comparison_a_with(&self.x_point(p), &self.u_point(q), &self.score).unwrap();
                        total += wf / fx * wg * f64::from(u8::from(a));
                    }
                }
                (x, total)
            })
            .collect()
    }

    pub fn bundle(&self, f: &[f64], g: &[f64]) -> NuisanceBundle {
        let lookup = |table: Vec<(f64, f64)>| -> udebias::covshift::CovariateFn {
            Arc::new(move |x: &[f64]| table.iter().find(|(k, _)| *k == x[0]).map(|(_, v)| *v).unwrap())
        };
        NuisanceBundle {
            gamma_hat: lookup(self.gamma_table(f, g)),
            alpha_hat: lookup(self.alpha_table(f, g)),
            s_hat: self.score.clone(),
        }
    }

    /// `E_{F×G}[kernel]` under the true laws with nuisances from `(f, g)`.
    pub fn functional(&self, method: Method, f: &[f64], g: &[f64]) -> f64 {
        let bundle = self.bundle(f, g);
        let kernel: Box<dyn PairKernel<TaggedPoint, TaggedPoint>> = match method {
            Method::Plugin => Box::new(plugin_kernel(bundle)),
            Method::Debiased => Box::new(debiased_kernel(bundle)),
        };
        let mut total = 0.0;
        for (p, wf) in self.f.iter().enumerate() {
            for (q, wg) in self.g.iter().enumerate() {
                total += wf * wg * kernel.eval(&self.x_point(p), &self.u_point(q)).unwrap();
            }
        }
        total
    }

    fn contaminate(p: &[f64], atom: usize, eps: f64) -> Vec<f64> {
        p.iter().enumerate().map(|(k, w)| (1.0 - eps) * w + if k == atom { eps } else { 0.0 }).collect()
    }

    /// Central difference along `F_ε = (1−ε)F + ε·δ_{f_atom}`,
    /// `G_ε = (1−ε)G + ε·δ_{g_atom}`, the nuisances following the path.
    pub fn derivative(&self, method: Method, f_atom: usize, g_atom: usize, eps: f64) -> f64 {
        let at = |e: f64| {
            self.functional(method, &Self::contaminate(&self.f, f_atom, e), &Self::contaminate(&self.g, g_atom, e))
        };
        (at(eps) - at(-eps)) / (2.0 * eps)
    }

    /// The plug-in's first-order term `α(u′) − γ(x′)·α(x′)`.
    pub fn plugin_derivative(&self, f_atom: usize, g_atom: usize) -> f64 {
        let gamma = self.gamma_table(&self.f, &self.g);
        let alpha = self.alpha_table(&self.f, &self.g);
        let get = |t: &[(f64, f64)], x: f64| t.iter().find(|(k, _)| *k == x).unwrap().1;
        let xp = self.atoms[f_atom].0;
        let up = self.atoms[g_atom].0;
        get(&alpha, up) - get(&gamma, xp) * get(&alpha, xp)
    }
}
