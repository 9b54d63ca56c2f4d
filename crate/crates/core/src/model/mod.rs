//! Model family definition, joint log-likelihood and maximum-likelihood
//! fitting for the six transformation-model variants.

pub(crate) mod init;
pub(crate) mod params;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bernstein::{transform_eval, BernsteinBasis, MonotoneCoeffs};
use crate::corr::{corr_from_lambda, CorrelationParam};
use crate::data::CaseControlData;
use crate::error::{Result, TdaError};
use crate::norm::phi;
use crate::optim::{minimize_bfgs, BfgsOptions};

use params::{decode, eval_loglik, ParamLayout};

/// Shape of the marginal transformations across disease classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginalFamily {
    /// Separate transformation per class (sTDA).
    Free,
    /// Shared transformation with a class-1 location shift (TDA).
    Location,
    /// Shared transformation with class-1 location and scale terms (lsTDA).
    LocationScale,
}

impl MarginalFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "free" | "s" => Ok(Self::Free),
            "loc" | "location" | "l" => Ok(Self::Location),
            "locscale" | "location-scale" | "ls" => Ok(Self::LocationScale),
            other => Err(TdaError::InvalidArgument(format!(
                "unknown marginal family '{other}' (expected free|loc|locscale)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Free => "free",
            Self::Location => "location",
            Self::LocationScale => "location-scale",
        }
    }
}

/// Whether the two classes share one correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationScope {
    Global,
    PerDisease,
}

impl CorrelationScope {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Self::Global),
            "per-disease" | "perdisease" | "per_disease" => Ok(Self::PerDisease),
            other => Err(TdaError::InvalidArgument(format!(
                "unknown correlation scope '{other}' (expected global|per-disease)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::PerDisease => "per-disease",
        }
    }
}

/// Selects one of the six model variants plus the Bernstein order and,
/// once known, the per-marker support bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: MarginalFamily,
    pub scope: CorrelationScope,
    pub order: usize,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl ModelSpec {
    pub const DEFAULT_ORDER: usize = 6;

    pub fn new(family: MarginalFamily, scope: CorrelationScope, order: usize) -> Result<Self> {
        if !(1..=20).contains(&order) {
            return Err(TdaError::InvalidArgument(format!(
                "Bernstein order must lie in 1..=20, got {order}"
            )));
        }
        Ok(Self {
            family,
            scope,
            order,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Short display name in the style ltda / lstda_d / stda.
    pub fn variant_name(&self) -> String {
        let stem = match self.family {
            MarginalFamily::Free => "stda",
            MarginalFamily::Location => "ltda",
            MarginalFamily::LocationScale => "lstda",
        };
        match self.scope {
            CorrelationScope::Global => stem.to_string(),
            CorrelationScope::PerDisease => format!("{stem}_d"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Gradient max-norm threshold on the full log-likelihood scale.
    pub grad_tol: f64,
    pub f_tol_rel: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-5,
            f_tol_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum CoeffSet {
    Shared(Vec<MonotoneCoeffs>),
    PerClass([Vec<MonotoneCoeffs>; 2]),
}

/// An immutable fitted transformation model.
#[derive(Debug, Clone)]
pub struct FittedTda {
    pub(crate) spec: ModelSpec,
    pub(crate) marker_names: Vec<String>,
    pub(crate) coeffs: CoeffSet,
    pub(crate) delta: Vec<f64>,
    pub(crate) gamma: Vec<f64>,
    pub(crate) corrs: Vec<CorrelationParam>,
    pub loglik: Option<f64>,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub n0: usize,
    pub n1: usize,
}

/// Support bounds: pooled observed min/max extended by 10% of the range.
pub fn support_bounds(data: &CaseControlData) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(data.n_markers());
    for k in 0..data.n_markers() {
        let col = data.observed_column(k, None);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if !(range > 0.0) {
            return Err(TdaError::DegenerateData(format!(
                "marker {} is constant",
                data.marker_names()[k]
            )));
        }
        out.push((lo - 0.1 * range, hi + 0.1 * range));
    }
    Ok(out)
}

fn validate_for_fit(data: &CaseControlData, spec: &ModelSpec) -> Result<()> {
    if !(1..=20).contains(&spec.order) {
        return Err(TdaError::InvalidArgument(format!(
            "Bernstein order must lie in 1..=20, got {}",
            spec.order
        )));
    }
    let j = data.n_markers();
    let (n0, n1) = data.class_counts();
    for (d, n_d) in [(0u8, n0), (1u8, n1)] {
        if n_d < j + 2 {
            return Err(TdaError::InsufficientData(format!(
                "class {d} has {n_d} rows; need at least J + 2 = {}",
                j + 2
            )));
        }
        for k in 0..j {
            let col = data.observed_column(k, Some(d));
            let distinct = {
                let mut c = col.clone();
                c.sort_by(|a, b| a.partial_cmp(b).unwrap());
                c.dedup();
                c.len()
            };
            if distinct < 2 {
                return Err(TdaError::DegenerateData(format!(
                    "marker {} is constant within class {d}",
                    data.marker_names()[k]
                )));
            }
        }
    }
    Ok(())
}

/// Joint log-likelihood of a flat parameter vector (decoded through the
/// monotone and correlation reparameterizations). Returns `-inf` when a
/// transformation derivative fails to be positive at an observed point.
pub fn log_likelihood(params: &[f64], data: &CaseControlData, spec: &ModelSpec) -> f64 {
    let bounds = spec
        .bounds
        .as_ref()
        .expect("ModelSpec.bounds must be set for log_likelihood");
    let layout = ParamLayout {
        j: data.n_markers(),
        order: spec.order,
        family: spec.family,
        scope: spec.scope,
    };
    assert_eq!(params.len(), layout.n_params(), "parameter vector length");
    eval_loglik(&layout, params, data, bounds, false).0
}

/// Maximum-likelihood fit of the selected variant.
///
/// Non-convergence is not an error: the best parameters found are returned
/// with `converged = false`.
pub fn fit(data: &CaseControlData, spec: &ModelSpec, opts: &FitOptions) -> Result<FittedTda> {
    validate_for_fit(data, spec)?;
    let bounds = match &spec.bounds {
        Some(b) => {
            if b.len() != data.n_markers() || b.iter().any(|&(l, u)| !(u > l)) {
                return Err(TdaError::InvalidArgument("invalid support bounds".into()));
            }
            b.clone()
        }
        None => support_bounds(data)?,
    };
    let layout = ParamLayout {
        j: data.n_markers(),
        order: spec.order,
        family: spec.family,
        scope: spec.scope,
    };
    let x0 = init::initial_params(&layout, data, &bounds);
    let n_total = data.n_rows() as f64;

    let objective = |x: &DVector<f64>| {
        let (ll, grad) = eval_loglik(&layout, x.as_slice(), data, &bounds, true);
        let g = grad.unwrap();
        (
            -ll / n_total,
            DVector::from_iterator(g.len(), g.into_iter().map(|v| -v / n_total)),
        )
    };
    let bfgs_opts = BfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol / n_total,
        f_tol_rel: opts.f_tol_rel,
    };
    let outcome = minimize_bfgs(objective, DVector::from_vec(x0), &bfgs_opts);

    let fitted = build_fitted(
        &layout,
        outcome.x.as_slice(),
        spec,
        data.marker_names().to_vec(),
        bounds,
    );
    let (n0, n1) = data.class_counts();
    Ok(FittedTda {
        loglik: Some(-outcome.f * n_total),
        converged: outcome.converged,
        iterations: outcome.iterations,
        n0,
        n1,
        ..fitted
    })
}

fn build_fitted(
    layout: &ParamLayout,
    x: &[f64],
    spec: &ModelSpec,
    marker_names: Vec<String>,
    bounds: Vec<(f64, f64)>,
) -> FittedTda {
    let dec = decode(layout, x);
    let coeffs = match spec.family {
        MarginalFamily::Free => {
            let mut it = dec.coeffs.into_iter();
            CoeffSet::PerClass([it.next().unwrap(), it.next().unwrap()])
        }
        _ => CoeffSet::Shared(dec.coeffs.into_iter().next().unwrap()),
    };
    FittedTda {
        spec: spec.clone().with_bounds(bounds),
        marker_names,
        coeffs,
        delta: dec.delta,
        gamma: dec.gamma,
        corrs: dec.corrs,
        loglik: None,
        n_params: layout.n_params(),
        converged: true,
        iterations: 0,
        n0: 0,
        n1: 0,
    }
}

/// `P(Y_dj <= y)` under the fitted model: the probit link applied to the
/// class-`d` transformation of marker `j`.
pub fn marginal_cdf(model: &FittedTda, d: u8, j: usize, y: f64) -> f64 {
    let (h, _) = model.transform(d, j, y);
    phi(h)
}

impl FittedTda {
    /// Builds a model with a shared transformation explicitly (Location or
    /// LocationScale family), e.g. as a simulation generator or an oracle.
    pub fn from_shared_parts(
        spec: ModelSpec,
        marker_names: Vec<String>,
        coeffs: Vec<MonotoneCoeffs>,
        delta: Vec<f64>,
        gamma: Vec<f64>,
        lambdas: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if spec.family == MarginalFamily::Free {
            return Err(TdaError::InvalidArgument(
                "from_shared_parts requires a shared-transformation family".into(),
            ));
        }
        let bounds = spec
            .bounds
            .clone()
            .ok_or_else(|| TdaError::InvalidArgument("spec must carry bounds".into()))?;
        let j = marker_names.len();
        if coeffs.len() != j || delta.len() != j || gamma.len() != j || bounds.len() != j {
            return Err(TdaError::InvalidArgument("dimension mismatch".into()));
        }
        if spec.family == MarginalFamily::Location && gamma.iter().any(|&g| g != 0.0) {
            return Err(TdaError::InvalidArgument(
                "Location family requires zero scale terms".into(),
            ));
        }
        let expected_blocks = match spec.scope {
            CorrelationScope::Global => 1,
            CorrelationScope::PerDisease => 2,
        };
        if lambdas.len() != expected_blocks {
            return Err(TdaError::InvalidArgument("wrong number of lambda blocks".into()));
        }
        let corrs: Vec<CorrelationParam> =
            lambdas.iter().map(|l| corr_from_lambda(l)).collect();
        if corrs.iter().any(|c| c.dim() != j) {
            return Err(TdaError::InvalidArgument("lambda block dimension mismatch".into()));
        }
        let layout = ParamLayout {
            j,
            order: spec.order,
            family: spec.family,
            scope: spec.scope,
        };
        Ok(Self {
            spec,
            marker_names,
            coeffs: CoeffSet::Shared(coeffs),
            delta,
            gamma,
            corrs,
            loglik: None,
            n_params: layout.n_params(),
            converged: true,
            iterations: 0,
            n0: 0,
            n1: 0,
        })
    }

    /// Builds a Free-family model from per-class coefficients.
    pub fn from_free_parts(
        spec: ModelSpec,
        marker_names: Vec<String>,
        coeffs0: Vec<MonotoneCoeffs>,
        coeffs1: Vec<MonotoneCoeffs>,
        lambdas: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if spec.family != MarginalFamily::Free {
            return Err(TdaError::InvalidArgument(
                "from_free_parts requires the Free family".into(),
            ));
        }
        let bounds = spec
            .bounds
            .clone()
            .ok_or_else(|| TdaError::InvalidArgument("spec must carry bounds".into()))?;
        let j = marker_names.len();
        if coeffs0.len() != j || coeffs1.len() != j || bounds.len() != j {
            return Err(TdaError::InvalidArgument("dimension mismatch".into()));
        }
        let expected_blocks = match spec.scope {
            CorrelationScope::Global => 1,
            CorrelationScope::PerDisease => 2,
        };
        if lambdas.len() != expected_blocks {
            return Err(TdaError::InvalidArgument("wrong number of lambda blocks".into()));
        }
        let corrs: Vec<CorrelationParam> =
            lambdas.iter().map(|l| corr_from_lambda(l)).collect();
        let layout = ParamLayout {
            j,
            order: spec.order,
            family: spec.family,
            scope: spec.scope,
        };
        Ok(Self {
            spec,
            marker_names,
            coeffs: CoeffSet::PerClass([coeffs0, coeffs1]),
            delta: vec![0.0; j],
            gamma: vec![0.0; j],
            corrs,
            loglik: None,
            n_params: layout.n_params(),
            converged: true,
            iterations: 0,
            n0: 0,
            n1: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> MarginalFamily {
        self.spec.family
    }

    pub fn scope(&self) -> CorrelationScope {
        self.spec.scope
    }

    pub fn n_markers(&self) -> usize {
        self.marker_names.len()
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        self.spec.bounds.as_ref().expect("fitted model carries bounds")
    }

    pub fn basis(&self, j: usize) -> BernsteinBasis {
        let (lo, up) = self.bounds()[j];
        BernsteinBasis::new(self.spec.order, lo, up, j)
    }

    /// Correlation parameterization used by class `d`.
    pub fn corr(&self, d: u8) -> &CorrelationParam {
        if self.corrs.len() == 2 {
            &self.corrs[d as usize]
        } else {
            &self.corrs[0]
        }
    }

    /// The shared-transformation coefficients for marker `j` (Location and
    /// LocationScale families).
    pub fn shared_coeffs(&self, j: usize) -> Option<&MonotoneCoeffs> {
        match &self.coeffs {
            CoeffSet::Shared(c) => Some(&c[j]),
            CoeffSet::PerClass(_) => None,
        }
    }

    pub fn class_coeffs(&self, d: u8, j: usize) -> &MonotoneCoeffs {
        match &self.coeffs {
            CoeffSet::Shared(c) => &c[j],
            CoeffSet::PerClass(c) => &c[d as usize][j],
        }
    }

    /// Class-`d` transformation of marker `j`: value and derivative.
    pub fn transform(&self, d: u8, j: usize, y: f64) -> (f64, f64) {
        let basis = self.basis(j);
        match &self.coeffs {
            CoeffSet::Shared(c) => {
                let (t, tp) = transform_eval(y, &c[j], &basis);
                if d == 1 {
                    let s = (-self.gamma[j]).exp();
                    ((t - self.delta[j]) * s, tp * s)
                } else {
                    (t, tp)
                }
            }
            CoeffSet::PerClass(c) => transform_eval(y, &c[d as usize][j], &basis),
        }
    }

    /// Mean of the shared transformation evaluated on class-`d` data
    /// (zero, or the location shift vector).
    pub fn h_mean(&self, d: u8) -> DVector<f64> {
        match (&self.coeffs, d) {
            (CoeffSet::Shared(_), 1) => DVector::from_column_slice(&self.delta),
            _ => DVector::zeros(self.n_markers()),
        }
    }

    /// Covariance of the shared transformation on class-`d` data:
    /// the correlation matrix for class 0, scale-inflated for class 1.
    pub fn h_cov(&self, d: u8) -> DMatrix<f64> {
        let sigma = self.corr(d).sigma.clone();
        match (&self.coeffs, d) {
            (CoeffSet::Shared(_), 1) => {
                let j = self.n_markers();
                let mut out = sigma;
                for r in 0..j {
                    for c in 0..j {
                        out[(r, c)] *= (self.gamma[r] + self.gamma[c]).exp();
                    }
                }
                out
            }
            _ => sigma,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc::from_model(self);
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.into_model()
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Versioned JSON document for fitted models.
#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    family: String,
    corr_scope: String,
    order: usize,
    marker_names: Vec<String>,
    bounds: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shared_coeffs: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class0_coeffs: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class1_coeffs: Option<Vec<Vec<f64>>>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
    lambda: Vec<Vec<f64>>,
    loglik: Option<f64>,
    n_params: usize,
    converged: bool,
    iterations: usize,
    n0: usize,
    n1: usize,
}

impl ModelDoc {
    fn from_model(m: &FittedTda) -> Self {
        let (shared, c0, c1) = match &m.coeffs {
            CoeffSet::Shared(c) => (
                Some(c.iter().map(|v| v.values().to_vec()).collect()),
                None,
                None,
            ),
            CoeffSet::PerClass([a, b]) => (
                None,
                Some(a.iter().map(|v| v.values().to_vec()).collect()),
                Some(b.iter().map(|v| v.values().to_vec()).collect()),
            ),
        };
        Self {
            format: "tda-model".into(),
            version: 1,
            family: m.spec.family.name().into(),
            corr_scope: m.spec.scope.name().into(),
            order: m.spec.order,
            marker_names: m.marker_names.clone(),
            bounds: m.bounds().to_vec(),
            shared_coeffs: shared,
            class0_coeffs: c0,
            class1_coeffs: c1,
            delta: m.delta.clone(),
            gamma: m.gamma.clone(),
            lambda: m.corrs.iter().map(|c| c.lambda.clone()).collect(),
            loglik: m.loglik,
            n_params: m.n_params,
            converged: m.converged,
            iterations: m.iterations,
            n0: m.n0,
            n1: m.n1,
        }
    }

    fn into_model(self) -> Result<FittedTda> {
        if self.format != "tda-model" {
            return Err(TdaError::Data(format!("unknown model format '{}'", self.format)));
        }
        if self.version != 1 {
            return Err(TdaError::Data(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        let family = MarginalFamily::parse(&self.family)?;
        let scope = CorrelationScope::parse(&self.corr_scope)?;
        let spec = ModelSpec::new(family, scope, self.order)?.with_bounds(self.bounds);
        let to_coeffs = |raw: Vec<Vec<f64>>| -> Result<Vec<MonotoneCoeffs>> {
            raw.into_iter()
                .map(|v| {
                    if v.len() != self.order + 1 || v.windows(2).any(|w| w[1] < w[0]) {
                        Err(TdaError::Data("invalid coefficient vector in model file".into()))
                    } else {
                        Ok(MonotoneCoeffs::from_values(v))
                    }
                })
                .collect()
        };
        let coeffs = match family {
            MarginalFamily::Free => {
                let c0 = to_coeffs(self.class0_coeffs.ok_or_else(|| {
                    TdaError::Data("free family model lacks class0 coefficients".into())
                })?)?;
                let c1 = to_coeffs(self.class1_coeffs.ok_or_else(|| {
                    TdaError::Data("free family model lacks class1 coefficients".into())
                })?)?;
                CoeffSet::PerClass([c0, c1])
            }
            _ => CoeffSet::Shared(to_coeffs(self.shared_coeffs.ok_or_else(|| {
                TdaError::Data("shared-family model lacks coefficients".into())
            })?)?),
        };
        let corrs: Vec<CorrelationParam> =
            self.lambda.iter().map(|l| corr_from_lambda(l)).collect();
        let expected = match scope {
            CorrelationScope::Global => 1,
            CorrelationScope::PerDisease => 2,
        };
        if corrs.len() != expected {
            return Err(TdaError::Data("wrong number of correlation blocks".into()));
        }
        let j = self.marker_names.len();
        if corrs.iter().any(|c| c.dim() != j) || self.delta.len() != j || self.gamma.len() != j {
            return Err(TdaError::Data("model file dimensions disagree".into()));
        }
        Ok(FittedTda {
            spec,
            marker_names: self.marker_names,
            coeffs,
            delta: self.delta,
            gamma: self.gamma,
            corrs,
            loglik: self.loglik,
            n_params: self.n_params,
            converged: self.converged,
            iterations: self.iterations,
            n0: self.n0,
            n1: self.n1,
        })
    }
}
