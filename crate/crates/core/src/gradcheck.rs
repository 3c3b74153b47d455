//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::Sample;
use crate::error::{CoreError, Result};
use crate::fusion::FusionModel;
use crate::nn::{Mode, Parameterized};
use crate::rng::{streams, RngStream};
use crate::tensor::Param;

/// Step for the central differences.
pub const STEP: f64 = 1e-5;

/// Denominator floor of the relative error, per unit of loss magnitude.
/// Central differences at `STEP` through the deep model carry absolute
/// roundoff of about `1e-10·max(1, |L|)`, so gradients below
/// `REL_FLOOR·max(1, |L|)` are effectively held to an absolute tolerance of
/// `tolerance·REL_FLOOR·max(1, |L|)` instead.
pub const REL_FLOOR: f64 = 1e-5;

/// A scalar objective over 64-bit parameters with an analytic gradient.
pub trait Objective: Parameterized<f64> {
    fn loss(&self) -> Result<f64>;
    /// Zeroes, then fills every parameter's `grad`; returns the loss.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupReport {
    pub name: String,
    pub len: usize,
    pub probes: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub max_rel_err: f64,
    pub passed: bool,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn failing(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| !g.passed)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = REL_FLOOR * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Probes up to `probes` random coordinates of every parameter group (all of
/// them when the group is smaller).
pub fn gradcheck<O: Objective>(obj: &mut O, probes: usize, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    let base = obj.loss_and_grad()?;
    if !base.is_finite() {
        return Err(CoreError::NonFiniteCheck);
    }
    let analytic: Vec<Vec<f64>> = obj.params().iter().map(|p| p.grad.clone()).collect();
    let mut rng = RngStream::with_stream(seed, streams::PROBE);
    let mut groups = Vec::with_capacity(analytic.len());
    for (g, grads) in analytic.iter().enumerate() {
        let (name, len) = {
            let p = &obj.params()[g];
            (p.name.clone(), p.len())
        };
        let coords = rng.sample_indices(len, probes);
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for &j in &coords {
            let orig = obj.params()[g].value[j];
            set(obj, g, j, orig + STEP);
            let plus = obj.loss()?;
            set(obj, g, j, orig - STEP);
            let minus = obj.loss()?;
            set(obj, g, j, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(CoreError::NonFiniteCheck);
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            max_rel = max_rel.max(relative_error(grads[j], numeric, base));
            max_abs = max_abs.max((grads[j] - numeric).abs());
        }
        groups.push(GroupReport {
            name,
            len,
            probes: coords.len(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < tolerance,
        });
    }
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { tolerance, step: STEP, max_rel_err, passed: groups.iter().all(|g| g.passed), groups })
}

fn set<O: Objective>(obj: &mut O, group: usize, index: usize, value: f64) {
    let mut params = obj.params_mut();
    params[group].value[index] = value;
}

/// The fusion model's full training objective on a fixed batch, evaluated
/// in eval mode so dropout cannot perturb the differences.
pub struct FusionObjective<'a> {
    pub model: FusionModel<f64>,
    pub samples: Vec<&'a Sample>,
    pub labels: Vec<usize>,
    /// Negates the gradient of the group with this index; used to prove
    /// the harness catches broken backward passes.
    pub corrupt_group: Option<usize>,
}

impl<'a> FusionObjective<'a> {
    pub fn new(model: FusionModel<f64>, samples: Vec<&'a Sample>) -> Result<Self> {
        let labels = samples
            .iter()
            .map(|s| s.label.ok_or_else(|| CoreError::Unlabeled(s.id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, samples, labels, corrupt_group: None })
    }
}

impl Parameterized<f64> for FusionObjective<'_> {
    fn params(&self) -> Vec<&Param<f64>> {
        self.model.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.model.params_mut()
    }
}

impl Objective for FusionObjective<'_> {
    fn loss(&self) -> Result<f64> {
        let mut rng = RngStream::new(0);
        let pass = self.model.forward_batch(&self.samples, Mode::Eval, &mut rng)?;
        Ok(self.model.loss(&pass, &self.labels)?.total)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let mut rng = RngStream::new(0);
        let pass = self.model.forward_batch(&self.samples, Mode::Eval, &mut rng)?;
        let loss = self.model.backward(&pass, &self.labels)?.total;
        if let Some(g) = self.corrupt_group {
            let mut params = self.model.params_mut();
            params[g].grad.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(loss)
    }
}
