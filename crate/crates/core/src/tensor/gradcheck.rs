//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// `|g - h| / max(1e-8, |g| + |h|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct GradCheckSpec {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many entries per input (the largest-gradient entry
    /// plus a seeded random sample); `None` checks every entry.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EntryCheck {
    pub input: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checks: Vec<EntryCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.rel_error <= self.tolerance)
    }

    pub fn worst(&self) -> Option<&EntryCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &EntryCheck> {
        self.checks.iter().filter(|c| c.rel_error > self.tolerance)
    }
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    Ok((tape, vars, loss))
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences of the same forward computation.
pub fn check_gradients<F>(inputs: &[Tensor], spec: &GradCheckSpec, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, loss) = evaluate(inputs, &f)?;
    let grads = tape.backward(loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut checks = Vec::new();
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let n = analytic.len();
        let entries: Vec<usize> = match spec.max_entries {
            Some(k) if k < n => {
                let largest = (0..n)
                    .max_by(|&a, &b| analytic.data()[a].abs().total_cmp(&analytic.data()[b].abs()))
                    .unwrap();
                let mut picked = sample(&mut rng, n, k.max(1)).into_vec();
                if !picked.contains(&largest) {
                    picked[0] = largest;
                }
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        };
        for entry in entries {
            let original = probe[i].data()[entry];
            probe[i].data_mut()[entry] = original + spec.step;
            let (t_plus, _, l_plus) = evaluate(&probe, &f)?;
            probe[i].data_mut()[entry] = original - spec.step;
            let (t_minus, _, l_minus) = evaluate(&probe, &f)?;
            probe[i].data_mut()[entry] = original;
            let numeric =
                (t_plus.value(l_plus).data()[0] - t_minus.value(l_minus).data()[0]) / (2.0 * spec.step);
            let a = analytic.data()[entry];
            checks.push(EntryCheck {
                input: i,
                entry,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    Ok(GradCheckReport {
        tolerance: spec.tolerance,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error(1.0, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_caps_entries_and_keeps_largest() {
        let x = Tensor::new(vec![50], (0..50).map(|i| i as f64 * 0.01).collect()).unwrap();
        let spec = GradCheckSpec {
            max_entries: Some(5),
            ..Default::default()
        };
        let report = check_gradients(&[x], &spec, |t, v| {
            let s = t.square(v[0])?;
            t.sum(s)
        })
        .unwrap();
        assert_eq!(report.checks.len(), 5);
        assert!(report.checks.iter().any(|c| c.entry == 49));
        assert!(report.passed());
    }
}
