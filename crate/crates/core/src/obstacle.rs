//! Convex obstacles described by β-functions.
//!
//! Each obstacle carries a scalar function that is negative on its interior,
//! zero on its boundary and positive outside. An [`ObstacleSet`] multiplies
//! the per-obstacle functions into an aggregate β whose zero level set is the
//! boundary of the forbidden region, and optionally saturates it from above.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Shape of a single convex obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    /// Open ball `‖x − c‖ < r`.
    Sphere { center: Vec<f64>, radius: f64 },
    /// `(x − c)ᵀ A (x − c) < 1` with `A` symmetric positive definite,
    /// stored row-major.
    Ellipsoid { center: Vec<f64>, shape: Vec<Vec<f64>> },
    /// Infinite cylinder `x[i]² + x[j]² < r²` over the coordinate pair
    /// `(i, j)`, centered at the origin of that pair.
    Cylinder { axes: (usize, usize), radius: f64 },
}

impl Obstacle {
    pub fn sphere(center: Vec<f64>, radius: f64) -> Result<Self> {
        let o = Obstacle::Sphere { center, radius };
        o.validate()?;
        Ok(o)
    }

    pub fn ellipsoid(center: Vec<f64>, shape: Vec<Vec<f64>>) -> Result<Self> {
        let o = Obstacle::Ellipsoid { center, shape };
        o.validate()?;
        Ok(o)
    }

    pub fn cylinder(axes: (usize, usize), radius: f64) -> Result<Self> {
        let o = Obstacle::Cylinder { axes, radius };
        o.validate()?;
        Ok(o)
    }

    /// Checks the shape invariants. Called by the constructors and by
    /// [`ObstacleSet::new`], so deserialized obstacles are validated too.
    pub fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Sphere { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidArgument("sphere center is empty".into()));
                }
                check_radius(*radius)
            }
            Obstacle::Ellipsoid { center, shape } => {
                let d = center.len();
                if d == 0 {
                    return Err(Error::InvalidArgument("ellipsoid center is empty".into()));
                }
                if shape.len() != d || shape.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidArgument(format!("ellipsoid shape must be {d}x{d}")));
                }
                let m = DMatrix::from_fn(d, d, |i, j| shape[i][j]);
                let asym = (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .any(|(i, j)| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()));
                if asym {
                    return Err(Error::InvalidArgument("ellipsoid shape is not symmetric".into()));
                }
                if m.cholesky().is_none() {
                    return Err(Error::InvalidArgument(
                        "ellipsoid shape is not positive definite".into(),
                    ));
                }
                Ok(())
            }
            Obstacle::Cylinder { axes, radius } => {
                if axes.0 == axes.1 {
                    return Err(Error::InvalidArgument(format!(
                        "cylinder axes must be distinct, got ({}, {})",
                        axes.0, axes.1
                    )));
                }
                check_radius(*radius)
            }
        }
    }

    /// Smallest ambient dimension this obstacle can live in.
    pub fn min_dim(&self) -> usize {
        match self {
            Obstacle::Sphere { center, .. } | Obstacle::Ellipsoid { center, .. } => center.len(),
            Obstacle::Cylinder { axes, .. } => axes.0.max(axes.1) + 1,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        match self {
            Obstacle::Sphere { center, .. } | Obstacle::Ellipsoid { center, .. } => {
                check_dim(center.len(), x.len())
            }
            Obstacle::Cylinder { .. } => {
                if x.len() < self.min_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.min_dim(),
                        got: x.len(),
                    });
                }
                Ok(())
            }
        }
    }

    /// β-function of this obstacle at `x`.
    pub fn beta(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.beta_unchecked(x))
    }

    pub(crate) fn beta_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Obstacle::Sphere { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2 - radius * radius
            }
            Obstacle::Ellipsoid { center, shape } => {
                let mut q = 0.0;
                for (i, row) in shape.iter().enumerate() {
                    let di = x[i] - center[i];
                    let mut acc = 0.0;
                    for (j, a) in row.iter().enumerate() {
                        acc += a * (x[j] - center[j]);
                    }
                    q += di * acc;
                }
                q - 1.0
            }
            Obstacle::Cylinder { axes: (i, j), radius } => {
                x[*i] * x[*i] + x[*j] * x[*j] - radius * radius
            }
        }
    }

    /// Adds `scale · ∇βᵢ(x)` into `out`.
    pub(crate) fn add_scaled_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Obstacle::Sphere { center, .. } => {
                for ((o, a), c) in out.iter_mut().zip(x).zip(center) {
                    *o += scale * 2.0 * (a - c);
                }
            }
            Obstacle::Ellipsoid { center, shape } => {
                for (i, row) in shape.iter().enumerate() {
                    let mut acc = 0.0;
                    for (j, a) in row.iter().enumerate() {
                        acc += a * (x[j] - center[j]);
                    }
                    out[i] += scale * 2.0 * acc;
                }
            }
            Obstacle::Cylinder { axes: (i, j), .. } => {
                out[*i] += scale * 2.0 * x[*i];
                out[*j] += scale * 2.0 * x[*j];
            }
        }
    }

    /// Euclidean distance from `x` to the obstacle boundary, where a closed
    /// form exists (spheres and cylinders).
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        match self {
            Obstacle::Sphere { center, radius } => {
                let d: f64 =
                    x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                Ok((d - radius).abs())
            }
            Obstacle::Cylinder { axes: (i, j), radius } => Ok((x[*i].hypot(x[*j]) - radius).abs()),
            Obstacle::Ellipsoid { .. } => {
                Err(Error::Unsupported("no closed-form boundary distance for ellipsoids".into()))
            }
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    Ok(())
}

/// Value of the aggregate β and its (uncapped) gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEval {
    /// Uncapped product of the per-obstacle β-functions.
    pub raw: f64,
    /// `raw` after saturation at the set's cap.
    pub capped: f64,
    /// True when the cap clipped `raw`.
    pub clipped: bool,
    /// Gradient of the uncapped product.
    pub grad: Vec<f64>,
}

/// Where the saturation ceiling is applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapMode {
    /// `min(∏ᵢ βᵢ, cap)`; the gradient vanishes wherever the cap is active.
    #[default]
    Aggregate,
    /// `∏ᵢ min(βᵢ/cap, 1)`. Each factor saturates on its own, so the
    /// aggregate equals 1 away from every obstacle and the gradient near one
    /// obstacle is not inflated by the others.
    PerFactor,
}

/// An immutable, validated collection of non-overlapping obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    obstacles: Vec<Obstacle>,
    beta_cap: Option<f64>,
    #[serde(default)]
    cap_mode: CapMode,
}

impl Default for ObstacleSet {
    fn default() -> Self {
        Self::empty()
    }
}

impl ObstacleSet {
    /// Default saturation ceiling for the aggregate β.
    pub const DEFAULT_CAP: f64 = 1.0;

    /// The unconstrained problem: β ≡ 1.
    pub fn empty() -> Self {
        ObstacleSet {
            obstacles: Vec::new(),
            beta_cap: Some(Self::DEFAULT_CAP),
            cap_mode: CapMode::Aggregate,
        }
    }

    /// Builds a set with the default cap, rejecting overlapping obstacles.
    pub fn new(obstacles: Vec<Obstacle>) -> Result<Self> {
        Self::with_cap(obstacles, Some(Self::DEFAULT_CAP))
    }

    pub fn with_cap(obstacles: Vec<Obstacle>, beta_cap: Option<f64>) -> Result<Self> {
        if let Some(cap) = beta_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "beta cap must be positive, got {cap}"
                )));
            }
        }
        for o in &obstacles {
            o.validate()?;
        }
        for (a, oa) in obstacles.iter().enumerate() {
            for ob in &obstacles[a + 1..] {
                if overlaps(oa, ob) || overlaps(ob, oa) {
                    return Err(Error::InvalidArgument(format!(
                        "obstacles overlap: {oa:?} and {ob:?}"
                    )));
                }
            }
        }
        Ok(ObstacleSet { obstacles, beta_cap, cap_mode: CapMode::Aggregate })
    }

    pub fn with_cap_mode(mut self, cap_mode: CapMode) -> Self {
        self.cap_mode = cap_mode;
        self
    }

    pub fn cap_mode(&self) -> CapMode {
        self.cap_mode
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn beta_cap(&self) -> Option<f64> {
        self.beta_cap
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        self.obstacles.iter().try_for_each(|o| o.check_point(x))
    }

    fn saturate(&self, raw: f64) -> (f64, bool) {
        match self.beta_cap {
            Some(cap) if raw > cap => (cap, true),
            _ => (raw, false),
        }
    }

    /// Uncapped product `∏ᵢ βᵢ(x)`.
    pub fn beta_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.raw_unchecked(x))
    }

    /// Aggregate β saturated at the cap according to the cap mode.
    /// Non-positive values pass through.
    pub fn beta_aggregate(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        match self.cap_mode {
            CapMode::Aggregate => Ok(self.saturate(self.raw_unchecked(x)).0),
            CapMode::PerFactor => {
                Ok(self.obstacles.iter().map(|o| self.normalized(o.beta_unchecked(x)).0).product())
            }
        }
    }

    fn raw_unchecked(&self, x: &[f64]) -> f64 {
        self.obstacles.iter().map(|o| o.beta_unchecked(x)).product()
    }

    /// Product-rule gradient of the uncapped aggregate β.
    pub fn grad_beta(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x).grad)
    }

    /// β, its capped value and its gradient in one pass.
    pub fn evaluate(&self, x: &[f64]) -> Result<BetaEval> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> BetaEval {
        let mut grad = vec![0.0; x.len()];
        let raw = self.eval_into(x, &mut grad);
        let (capped, clipped) = self.saturate(raw);
        BetaEval { raw, capped, clipped, grad }
    }

    /// β exactly as the sampler sees it: the saturated value, whether the
    /// gradient is switched off entirely, and in `grad` the gradient of the
    /// saturated product (uncapped product gradient in aggregate mode).
    pub fn eval_drift_into(&self, x: &[f64], grad: &mut [f64]) -> (f64, bool) {
        match self.cap_mode {
            CapMode::Aggregate => self.saturate(self.eval_into(x, grad)),
            CapMode::PerFactor => {
                let mut all_clipped = true;
                let capped = self.product_gradient(x, grad, |v| {
                    let (c, slope) = self.normalized(v);
                    all_clipped &= slope == 0.0;
                    (c, slope)
                });
                (capped, all_clipped && !self.obstacles.is_empty())
            }
        }
    }

    /// Writes the uncapped gradient into `grad` and returns the uncapped β.
    pub(crate) fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.product_gradient(x, grad, |v| (v, 1.0))
    }

    /// Per-factor value `min(β/cap, 1)` and its derivative with respect to β.
    fn normalized(&self, v: f64) -> (f64, f64) {
        match self.beta_cap {
            Some(cap) if v >= cap => (1.0, 0.0),
            Some(cap) => (v / cap, 1.0 / cap),
            None => (v, 1.0),
        }
    }

    /// Product of `factor(βᵢ)` and its gradient; `factor` returns the value
    /// used and its derivative with respect to βᵢ.
    fn product_gradient(
        &self,
        x: &[f64],
        grad: &mut [f64],
        mut factor: impl FnMut(f64) -> (f64, f64),
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.obstacles.len();
        if n == 0 {
            return 1.0;
        }
        let (values, slopes): (Vec<f64>, Vec<f64>) =
            self.obstacles.iter().map(|o| factor(o.beta_unchecked(x))).unzip();
        // prefix/suffix products give ∏_{j≠i} βⱼ without dividing by βᵢ
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * values[i];
        }
        let mut prefix = 1.0;
        for (i, o) in self.obstacles.iter().enumerate() {
            if slopes[i] != 0.0 {
                o.add_scaled_gradient(x, slopes[i] * prefix * suffix[i + 1], grad);
            }
            prefix *= values[i];
        }
        prefix
    }

    /// True iff every βᵢ(x) is strictly positive. Boundary points are infeasible.
    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.obstacles.iter().all(|o| o.check_point(x).is_ok() && o.beta_unchecked(x) > 0.0)
    }

    /// Distance to the nearest obstacle boundary; `None` for the empty set.
    pub fn nearest_boundary_distance(&self, x: &[f64]) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for o in &self.obstacles {
            let d = o.boundary_distance(x)?;
            best = Some(best.map_or(d, |b| b.min(d)));
        }
        Ok(best)
    }
}

/// Conservative overlap test of `b` against `a`: checks that a
/// representative center of `b` lies outside `a`, plus the exact test for
/// sphere pairs. Cylinders over disjoint coordinate pairs act on separate
/// factors of the state and are never reported as overlapping.
fn overlaps(a: &Obstacle, b: &Obstacle) -> bool {
    use Obstacle::*;
    match (a, b) {
        (Sphere { center: ca, radius: ra }, Sphere { center: cb, radius: rb }) => {
            if ca.len() != cb.len() {
                return false;
            }
            let d: f64 = ca.iter().zip(cb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            d <= ra + rb
        }
        (Cylinder { axes: (i, j), .. }, Cylinder { axes: (k, l), .. }) => {
            i == k || i == l || j == k || j == l
        }
        (_, Sphere { center, .. }) | (_, Ellipsoid { center, .. }) => {
            a.check_point(center).is_ok() && a.beta_unchecked(center) <= 0.0
        }
        (Sphere { center, .. }, Cylinder { axes: (i, j), .. })
        | (Ellipsoid { center, .. }, Cylinder { axes: (i, j), .. }) => {
            // nearest point of the cylinder's axis subspace to a's center
            if *i >= center.len() || *j >= center.len() {
                return false;
            }
            let mut p = center.clone();
            p[*i] = 0.0;
            p[*j] = 0.0;
            a.beta_unchecked(&p) <= 0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_spheres() -> ObstacleSet {
        ObstacleSet::new(vec![
            Obstacle::sphere(vec![-1.0, 1.0], 0.4).unwrap(),
            Obstacle::sphere(vec![-1.0, 0.1], 0.4).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn sphere_beta_values() {
        let o = Obstacle::sphere(vec![-1.0, 1.0], 0.4).unwrap();
        assert!((o.beta(&[-1.0, 1.0]).unwrap() + 0.16).abs() < 1e-15);
        assert!(o.beta(&[-1.0, 1.4]).unwrap().abs() < 1e-12);
        assert!((o.beta(&[0.0, 0.0]).unwrap() - 1.84).abs() < 1e-12);
    }

    #[test]
    fn ellipsoid_and_cylinder_values() {
        let e = Obstacle::ellipsoid(vec![1.0, 0.0], vec![vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(e.beta(&[1.0, 0.0]).unwrap(), -1.0);
        assert!(e.beta(&[1.5, 0.0]).unwrap().abs() < 1e-15);
        let c = Obstacle::cylinder((0, 2), 0.5).unwrap();
        assert!((c.beta(&[0.3, 9.0, 0.4]).unwrap()).abs() < 1e-15);
        assert!(c.beta(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Obstacle::sphere(vec![0.0], 0.0).is_err());
        assert!(Obstacle::sphere(vec![0.0], -1.0).is_err());
        assert!(Obstacle::cylinder((1, 1), 0.5).is_err());
        assert!(Obstacle::ellipsoid(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(Obstacle::ellipsoid(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let o = Obstacle::sphere(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(o.beta(&[0.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
        let set = two_spheres();
        assert!(set.beta_aggregate(&[0.0, 0.0, 0.0]).is_err());
        assert!(set.grad_beta(&[0.0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let empty = ObstacleSet::empty();
        assert_eq!(empty.beta_aggregate(&[3.0, -7.0]).unwrap(), 1.0);
        assert_eq!(empty.grad_beta(&[3.0, -7.0]).unwrap(), vec![0.0, 0.0]);
        assert!(two_spheres().beta_aggregate(&[-1.0, 1.0]).unwrap() < 0.0);

        let single =
            ObstacleSet::with_cap(vec![Obstacle::sphere(vec![-1.0, 1.0], 0.4).unwrap()], None)
                .unwrap();
        assert!((single.beta_aggregate(&[0.0, 0.0]).unwrap() - 1.84).abs() < 1e-12);
        let g = single.grad_beta(&[0.0, 0.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15 && (g[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn cap_saturates_only_above() {
        let set = two_spheres();
        let far = [4.0, 4.0];
        assert!(set.beta_raw(&far).unwrap() > 1.0);
        assert_eq!(set.beta_aggregate(&far).unwrap(), 1.0);
        let inside = [-1.0, 1.1];
        assert_eq!(set.beta_aggregate(&inside).unwrap(), set.beta_raw(&inside).unwrap());
    }

    #[test]
    fn feasibility() {
        let set = two_spheres();
        assert!(set.is_feasible(&[-2.0, -1.0]));
        assert!(!set.is_feasible(&[-1.0, 1.0]));
        assert!(!set.is_feasible(&[-1.0, 1.4]));
        assert!(ObstacleSet::empty().is_feasible(&[0.0, 0.0]));
    }

    #[test]
    fn overlap_rejected() {
        let r = ObstacleSet::new(vec![
            Obstacle::sphere(vec![0.0, 0.0], 0.5).unwrap(),
            Obstacle::sphere(vec![0.8, 0.0], 0.5).unwrap(),
        ]);
        assert!(r.is_err());
        let r = ObstacleSet::new(vec![
            Obstacle::cylinder((0, 2), 0.5).unwrap(),
            Obstacle::cylinder((2, 3), 0.5).unwrap(),
        ]);
        assert!(r.is_err());
        let ok = ObstacleSet::new(vec![
            Obstacle::cylinder((0, 2), 0.5).unwrap(),
            Obstacle::cylinder((1, 3), 0.5).unwrap(),
        ]);
        assert!(ok.is_ok());
        let r = ObstacleSet::new(vec![
            Obstacle::cylinder((0, 1), 0.5).unwrap(),
            Obstacle::sphere(vec![0.0, 0.2, 3.0], 0.1).unwrap(),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn boundary_distance() {
        let set = two_spheres();
        let d = set.nearest_boundary_distance(&[-1.0, 1.5]).unwrap().unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(ObstacleSet::empty().nearest_boundary_distance(&[0.0]).unwrap(), None);
        let e = ObstacleSet::new(vec![Obstacle::ellipsoid(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()])
        .unwrap();
        assert!(matches!(e.nearest_boundary_distance(&[2.0, 0.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn serde_records() {
        let json = r#"[{"kind":"sphere","center":[-1,1],"radius":0.4},
                       {"kind":"cylinder","axes":[0,1],"radius":0.5},
                       {"kind":"ellipsoid","center":[0,0],"shape":[[1,0],[0,2]]}]"#;
        let obs: Vec<Obstacle> = serde_json::from_str(json).unwrap();
        assert_eq!(obs[0], Obstacle::Sphere { center: vec![-1.0, 1.0], radius: 0.4 });
        assert_eq!(obs[1], Obstacle::Cylinder { axes: (0, 1), radius: 0.5 });
    }
}
