//! Loss-vs-compute power laws with an optional shared saturation level:
//! single `L = a + e·C^(−f)` and broken `L = a + b·C^(−c) + e·C^(−f)`.
//! Fitted jointly by Levenberg–Marquardt in log-coefficients, which keeps
//! every coefficient positive.

use super::{invalid, FitError};
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// Compute in PFH.
    pub c: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub tag: String,
    pub points: Vec<LossPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerLawKind {
    Single,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Saturation {
    /// One a for every curve.
    Shared,
    /// Each curve has its own a.
    PerCurve,
    /// a = 0.
    Zero,
}

/// Starting coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawInit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub e: f64,
    pub f: f64,
}

impl Default for PowerLawInit {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 0.40,
            c: 0.20,
            e: 2.50,
            f: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub a: f64,
    /// Zero for the single law.
    pub b: f64,
    pub c: f64,
    pub e: f64,
    pub f: f64,
    pub r2: f64,
}

impl CurveFit {
    pub fn eval(&self, c: f64) -> f64 {
        self.a + self.b * c.powf(-self.c) + self.e * c.powf(-self.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    pub kind: PowerLawKind,
    pub saturation: Saturation,
    pub tags: Vec<String>,
    pub curves: Vec<CurveFit>,
    /// R² pooled over all curves.
    pub r2: f64,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: String,
}

struct Problem<'a> {
    curves: &'a [LossCurve],
    kind: PowerLawKind,
    saturation: Saturation,
    x: DVector<f64>,
}

impl Problem<'_> {
    fn per_curve(&self) -> usize {
        match self.kind {
            PowerLawKind::Single => 2,
            PowerLawKind::Broken => 4,
        }
    }

    fn offset(&self) -> usize {
        match self.saturation {
            Saturation::Shared => 1,
            _ => 0,
        }
    }

    fn stride(&self) -> usize {
        self.per_curve() + (self.saturation == Saturation::PerCurve) as usize
    }

    /// Index of ln a for curve i, if a is free.
    fn a_index(&self, i: usize) -> Option<usize> {
        match self.saturation {
            Saturation::Shared => Some(0),
            Saturation::PerCurve => Some(self.offset() + i * self.stride()),
            Saturation::Zero => None,
        }
    }

    fn coeffs(&self, i: usize) -> CurveFit {
        let base =
            self.offset() + i * self.stride() + (self.saturation == Saturation::PerCurve) as usize;
        let a = self.a_index(i).map_or(0.0, |k| self.x[k].exp());
        let (b, c, e, f) = match self.kind {
            PowerLawKind::Single => (0.0, 0.0, self.x[base].exp(), self.x[base + 1].exp()),
            PowerLawKind::Broken => (
                self.x[base].exp(),
                self.x[base + 1].exp(),
                self.x[base + 2].exp(),
                self.x[base + 3].exp(),
            ),
        };
        CurveFit {
            a,
            b,
            c,
            e,
            f,
            r2: f64::NAN,
        }
    }

    fn n_residuals(&self) -> usize {
        self.curves.iter().map(|c| c.points.len()).sum()
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut r = Vec::with_capacity(self.n_residuals());
        for (i, curve) in self.curves.iter().enumerate() {
            let fit = self.coeffs(i);
            r.extend(curve.points.iter().map(|p| fit.eval(p.c) - p.loss));
        }
        let r = DVector::from_vec(r);
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.n_residuals(), self.x.len());
        let mut row = 0;
        for (i, curve) in self.curves.iter().enumerate() {
            let fit = self.coeffs(i);
            let base = self.offset()
                + i * self.stride()
                + (self.saturation == Saturation::PerCurve) as usize;
            for p in &curve.points {
                let lc = p.c.ln();
                if let Some(k) = self.a_index(i) {
                    jac[(row, k)] = fit.a;
                }
                let tail = fit.e * p.c.powf(-fit.f);
                let (je, jf) = (tail, -tail * fit.f * lc);
                match self.kind {
                    PowerLawKind::Single => {
                        jac[(row, base)] = je;
                        jac[(row, base + 1)] = jf;
                    }
                    PowerLawKind::Broken => {
                        let steep = fit.b * p.c.powf(-fit.c);
                        jac[(row, base)] = steep;
                        jac[(row, base + 1)] = -steep * fit.c * lc;
                        jac[(row, base + 2)] = je;
                        jac[(row, base + 3)] = jf;
                    }
                }
                row += 1;
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

fn r_squared(points: &[LossPoint], fit: &CurveFit) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.loss).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.loss - mean).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.loss - fit.eval(p.c)).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

pub fn fit_loss_power_law(
    curves: &[LossCurve],
    kind: PowerLawKind,
    saturation: Saturation,
    init: &PowerLawInit,
) -> Result<LossFit, FitError> {
    if curves.is_empty() {
        return Err(invalid("curves", "need at least one curve"));
    }
    let mut x = Vec::new();
    if saturation == Saturation::Shared {
        x.push(init.a.ln());
    }
    for curve in curves {
        let free = match kind {
            PowerLawKind::Single => 2,
            PowerLawKind::Broken => 4,
        } + usize::from(saturation != Saturation::Zero);
        if curve.points.len() < free {
            return Err(invalid(
                "curves",
                format!(
                    "curve {:?} has {} points, needs {free}",
                    curve.tag,
                    curve.points.len()
                ),
            ));
        }
        if curve.points.iter().any(|p| !(p.c > 0.0 && p.loss > 0.0)) {
            return Err(invalid(
                "curves",
                format!("curve {:?} needs C > 0 and L > 0", curve.tag),
            ));
        }
        if saturation == Saturation::PerCurve {
            x.push(init.a.ln());
        }
        if kind == PowerLawKind::Broken {
            x.extend([init.b.ln(), init.c.ln()]);
        }
        x.extend([init.e.ln(), init.f.ln()]);
    }
    if [init.a, init.b, init.c, init.e, init.f]
        .iter()
        .any(|v| !(*v > 0.0))
    {
        return Err(invalid("init", "coefficients must be > 0"));
    }
    let problem = Problem {
        curves,
        kind,
        saturation,
        x: DVector::from_vec(x),
    };
    let (solved, report) = LevenbergMarquardt::new()
        .with_patience(2000)
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .minimize(problem);
    let fits: Vec<CurveFit> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut f = solved.coeffs(i);
            f.r2 = r_squared(&c.points, &f);
            f
        })
        .collect();
    let all: Vec<(LossPoint, &CurveFit)> = curves
        .iter()
        .zip(&fits)
        .flat_map(|(c, f)| c.points.iter().map(move |p| (*p, f)))
        .collect();
    let n = all.len() as f64;
    let mean = all.iter().map(|(p, _)| p.loss).sum::<f64>() / n;
    let ss_tot: f64 = all.iter().map(|(p, _)| (p.loss - mean).powi(2)).sum();
    let ss_res: f64 = all
        .iter()
        .map(|(p, f)| (p.loss - f.eval(p.c)).powi(2))
        .sum();
    Ok(LossFit {
        kind,
        saturation,
        tags: curves.iter().map(|c| c.tag.clone()).collect(),
        curves: fits,
        r2: 1.0 - ss_res / ss_tot,
        objective: report.objective_function,
        evaluations: report.number_of_evaluations,
        converged: report.termination.was_successful(),
        termination: format!("{:?}", report.termination),
    })
}
