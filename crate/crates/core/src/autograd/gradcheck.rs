use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use super::params::{ParamId, ParamStore};
use super::Var;
use crate::error::{Error, Result};

/// Settings for a central finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Coordinates sampled from each trainable tensor.
    pub per_tensor: usize,
    pub step: f32,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            per_tensor: 8,
            step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub param: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

impl CoordCheck {
    /// `|a - n| <= atol + rtol * max(|a|, |n|)`.
    pub fn within(&self, rtol: f64, atol: f64) -> bool {
        self.abs_err <= atol + rtol * self.analytic.abs().max(self.numeric.abs())
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn failures(&self, rtol: f64, atol: f64) -> Vec<&CoordCheck> {
        self.coords.iter().filter(|c| !c.within(rtol, atol)).collect()
    }
}

fn eval<F>(params: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = build(&mut g)?;
    Ok(g.scalar_f64(loss))
}

/// Compare reverse-mode gradients of the scalar built by `build` with
/// central differences at randomly sampled coordinates of every trainable
/// parameter.
pub fn gradcheck<F>(params: &ParamStore, build: F, cfg: &GradCheck, rng: &mut ChaCha8Rng) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.backward(loss)
    };
    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    let ids: Vec<ParamId> = params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let (rows, cols) = params.value(id).dim();
        for _ in 0..cfg.per_tensor.min(rows * cols) {
            let idx = (rng.random_range(0..rows), rng.random_range(0..cols));
            let w = params.value(id)[idx];
            let up = w + cfg.step;
            let down = w - cfg.step;
            work.get_mut(id).value[idx] = up;
            let f_up = eval(&work, &build)?;
            work.get_mut(id).value[idx] = down;
            let f_down = eval(&work, &build)?;
            work.get_mut(id).value[idx] = w;
            let numeric = (f_up - f_down) / (up as f64 - down as f64);
            let analytic = grads.param(id).map_or(0.0, |g| g[idx] as f64);
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at {}{idx:?}", params.get(id).name)));
            }
            let abs_err = (analytic - numeric).abs();
            let denom = analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.coords.push(CoordCheck {
                param: params.get(id).name.clone(),
                index: idx,
                analytic,
                numeric,
                abs_err,
                rel_err: abs_err / denom,
            });
        }
    }
    Ok(report)
}
