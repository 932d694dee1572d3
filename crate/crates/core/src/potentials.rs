//! External potentials `V`, their derivatives and convexity data, and the
//! closed-form equilibrium measures of the quadratic and double-well
//! families.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::freecalc::{hilbert_transform, support_interior};
use crate::measures::{cell_averages_on_support, Grid, GridDensity};

/// Family tag plus a flat parameter map, as written in run configs.
///
/// Parameter keys: `theta` (quadratic), `c` (quartic), `a`, `b`, `cc`
/// (Kontsevich-Penner), `c0`, `c1`, ... (polynomial coefficients).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl PotentialSpec {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        PotentialSpec {
            family: family.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn quadratic(theta: f64) -> Self {
        PotentialSpec::new("quadratic", &[("theta", theta)])
    }

    pub fn quartic(c: f64) -> Self {
        PotentialSpec::new("quartic", &[("c", c)])
    }

    /// Parse the flag grammar `family:key=val,key=val`.
    pub fn parse(text: &str) -> Result<Self> {
        let (family, rest) = match text.split_once(':') {
            Some((f, r)) => (f.trim(), r.trim()),
            None => (text.trim(), ""),
        };
        let mut params = BTreeMap::new();
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("potential parameter {kv:?} is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("potential parameter {kv:?} is not numeric")))?;
            params.insert(k.trim().to_string(), v);
        }
        Ok(PotentialSpec { family: family.to_string(), params })
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| invalid(format!("{} potential needs parameter {key:?}", self.family)))
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { ':' } else { ',' })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `V ≡ 0`: pure Coulomb spreading, no equilibrium.
    Zero,
    /// `θx²`
    Quadratic { theta: f64 },
    /// `x⁴/4 + c x²/2`
    Quartic { c: f64 },
    /// `a x⁴/12 − b x²/2 − c log|x|`
    KontsevichPenner { a: f64, b: f64, c: f64 },
    /// `Σ_k coeffs[k] x^k`, even degree, positive leading coefficient.
    Polynomial { coeffs: Vec<f64> },
}

/// An external potential with analytic derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    family: Family,
    spec: PotentialSpec,
    convexity_bound: Option<f64>,
    drift_gamma: f64,
}

/// Build a [`Potential`] from its spec.
pub fn make_potential(spec: &PotentialSpec) -> Result<Potential> {
    let family = match spec.family.as_str() {
        "quadratic" => {
            let theta = spec.get("theta")?;
            if !(theta > 0.0) {
                return Err(invalid(format!("quadratic potential needs theta > 0, got {theta}")));
            }
            Family::Quadratic { theta }
        }
        "zero" => Family::Zero,
        "quartic" | "quartic-double-well" => Family::Quartic { c: spec.get("c")? },
        "kontsevich-penner" => {
            let a = spec.get("a")?;
            let b = spec.params.get("b").copied().unwrap_or(0.0);
            let c = spec.get("cc")?;
            if !(a > 0.0) {
                return Err(invalid(format!("kontsevich-penner needs a > 0, got {a}")));
            }
            if c < 0.0 {
                return Err(invalid(format!("kontsevich-penner needs c >= 0, got {c}")));
            }
            Family::KontsevichPenner { a, b, c }
        }
        "polynomial" => {
            let mut coeffs = Vec::new();
            for (k, v) in &spec.params {
                let deg: usize = k
                    .strip_prefix('c')
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| invalid(format!("polynomial coefficient key {k:?} is not c<k>")))?;
                if coeffs.len() <= deg {
                    coeffs.resize(deg + 1, 0.0);
                }
                coeffs[deg] = *v;
            }
            while coeffs.last() == Some(&0.0) {
                coeffs.pop();
            }
            let deg = coeffs.len().saturating_sub(1);
            if coeffs.is_empty() || deg < 2 {
                return Err(invalid("polynomial potential needs degree >= 2"));
            }
            if deg % 2 == 1 {
                return Err(invalid(format!("polynomial potential has odd leading degree {deg}")));
            }
            if coeffs[deg] <= 0.0 {
                return Err(invalid("polynomial potential needs a positive leading coefficient"));
            }
            Family::Polynomial { coeffs }
        }
        other => return Err(Error::UnsupportedPotential(other.to_string())),
    };
    Ok(Potential::from_family(family, spec.clone()))
}

impl Potential {
    fn from_family(family: Family, spec: PotentialSpec) -> Self {
        let convexity_bound = match &family {
            Family::Zero => Some(0.0),
            Family::Quadratic { theta } => Some(2.0 * theta),
            // V'' = 3x² + c
            Family::Quartic { c } => Some(*c),
            // V'' = a x² − b + c/x² ≥ 2√(ac) − b
            Family::KontsevichPenner { a, b, c } => Some(2.0 * (a * c).sqrt() - b),
            Family::Polynomial { .. } => None,
        };
        let mut p = Potential { family, spec, convexity_bound, drift_gamma: 0.0 };
        p.drift_gamma = p.probe_drift_gamma();
        p
    }

    pub fn quadratic(theta: f64) -> Result<Self> {
        make_potential(&PotentialSpec::quadratic(theta))
    }

    pub fn quartic(c: f64) -> Result<Self> {
        make_potential(&PotentialSpec::quartic(c))
    }

    pub fn zero() -> Self {
        Potential::from_family(Family::Zero, PotentialSpec::new("zero", &[]))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// Lower bound `K` on `V''`, when known in closed form.
    pub fn convexity_bound(&self) -> Option<f64> {
        self.convexity_bound
    }

    /// Whether `V` dominates `(1+δ) log(1+x²)` at infinity. Holds for every
    /// confining family; only the zero potential fails it.
    pub fn growth_ok(&self) -> bool {
        !matches!(self.family, Family::Zero)
    }

    /// Smallest `γ ≥ 0` with `−x V'(x) ≤ γ (1 + x²)` on a probe grid.
    pub fn drift_gamma(&self) -> f64 {
        self.drift_gamma
    }

    pub fn is_singular_at_zero(&self) -> bool {
        matches!(self.family, Family::KontsevichPenner { c, .. } if c > 0.0)
    }

    pub fn v(&self, x: f64) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Quadratic { theta } => theta * x * x,
            Family::Quartic { c } => {
                let x2 = x * x;
                0.25 * x2 * x2 + 0.5 * c * x2
            }
            Family::KontsevichPenner { a, b, c } => {
                let x2 = x * x;
                let log_term = if *c == 0.0 { 0.0 } else { c * x.abs().ln() };
                a * x2 * x2 / 12.0 - 0.5 * b * x2 - log_term
            }
            Family::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn dv(&self, x: f64) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Quadratic { theta } => 2.0 * theta * x,
            Family::Quartic { c } => x * x * x + c * x,
            Family::KontsevichPenner { a, b, c } => {
                let pole = if *c == 0.0 { 0.0 } else { c / x };
                a * x * x * x / 3.0 - b * x - pole
            }
            Family::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
        }
    }

    pub fn ddv(&self, x: f64) -> f64 {
        match &self.family {
            Family::Zero => 0.0,
            Family::Quadratic { theta } => 2.0 * theta,
            Family::Quartic { c } => 3.0 * x * x + c,
            Family::KontsevichPenner { a, b, c } => {
                let pole = if *c == 0.0 { 0.0 } else { c / (x * x) };
                a * x * x - b + pole
            }
            Family::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + (k * (k - 1)) as f64 * c),
        }
    }

    /// Errors if any cell centre of `grid` hits a singularity of `V`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        for i in 0..grid.n {
            let x = grid.center(i);
            if !(self.v(x).is_finite() && self.dv(x).is_finite() && self.ddv(x).is_finite()) {
                return Err(Error::Singular(x));
            }
        }
        Ok(())
    }

    fn probe_drift_gamma(&self) -> f64 {
        // x = ±10^s over s ∈ [-4, 4]; the bound is attained at moderate |x|
        // for every family since V' eventually dominates x.
        let mut worst: f64 = 0.0;
        for k in 0..=4000 {
            let s = -4.0 + 8.0 * k as f64 / 4000.0;
            let x = 10f64.powf(s);
            for x in [x, -x] {
                let r = -x * self.dv(x) / (1.0 + x * x);
                if r.is_finite() {
                    worst = worst.max(r);
                }
            }
        }
        worst
    }

    /// Support intervals of the closed-form equilibrium, if available.
    pub fn closed_form_support(&self) -> Option<Vec<(f64, f64)>> {
        match &self.family {
            Family::Quadratic { theta } => {
                let r = (2.0 / theta).sqrt();
                Some(vec![(-r, r)])
            }
            Family::Quartic { c } => match quartic_case(*c) {
                QuarticCase::TwoCut { a, b } => Some(vec![(-b, -a), (a, b)]),
                QuarticCase::Critical => Some(vec![(-2.0, 2.0)]),
                QuarticCase::OneCut { a, .. } => Some(vec![(-a, a)]),
            },
            _ => None,
        }
    }

    /// Radius of the closed-form support.
    pub fn closed_form_radius(&self) -> Option<f64> {
        self.closed_form_support()
            .map(|s| s.iter().map(|(l, r)| l.abs().max(r.abs())).fold(0.0, f64::max))
    }

    /// Pointwise closed-form equilibrium density.
    pub fn closed_form_density(&self, x: f64) -> Option<f64> {
        match &self.family {
            Family::Quadratic { theta } => {
                let r2 = 2.0 / theta;
                Some(2.0 / (PI * r2) * (r2 - x * x).max(0.0).sqrt())
            }
            Family::Quartic { c } => {
                let x2 = x * x;
                Some(match quartic_case(*c) {
                    QuarticCase::TwoCut { a, b } => {
                        if x.abs() <= a || x.abs() >= b {
                            0.0
                        } else {
                            x.abs() * ((x2 - a * a) * (b * b - x2)).sqrt() / (2.0 * PI)
                        }
                    }
                    QuarticCase::Critical => x2 * (4.0 - x2).max(0.0).sqrt() / (2.0 * PI),
                    QuarticCase::OneCut { a, b0 } => {
                        (0.5 * x2 + b0) * (a * a - x2).max(0.0).sqrt() / PI
                    }
                })
            }
            _ => None,
        }
    }
}

enum QuarticCase {
    TwoCut { a: f64, b: f64 },
    Critical,
    OneCut { a: f64, b0: f64 },
}

fn quartic_case(c: f64) -> QuarticCase {
    if c < -2.0 {
        QuarticCase::TwoCut { a: (-2.0 - c).sqrt(), b: (2.0 - c).sqrt() }
    } else if c == -2.0 {
        QuarticCase::Critical
    } else {
        let a2 = ((4.0 * c * c + 48.0).sqrt() - 2.0 * c) / 3.0;
        let b0 = (c + (0.25 * c * c + 3.0).sqrt()) / 3.0;
        QuarticCase::OneCut { a: a2.sqrt(), b0 }
    }
}

/// Closed-form equilibrium density as exact cell averages on `grid`.
///
/// Every cell is integrated with a 16-point rule over its intersection with
/// the support; pieces ending at a support endpoint use the square-root
/// substitution so the edge behaviour is resolved.
pub fn equilibrium_closed_form(potential: &Potential, grid: &Grid) -> Result<GridDensity> {
    let support = potential.closed_form_support().ok_or_else(|| {
        Error::UnsupportedPotential(format!(
            "no closed-form equilibrium for {}",
            potential.spec()
        ))
    })?;
    let (lo, hi) = (support[0].0, support[support.len() - 1].1);
    if lo < grid.left || hi > grid.right {
        return Err(invalid(format!(
            "grid [{}, {}] does not cover the support [{lo}, {hi}]",
            grid.left, grid.right
        )));
    }
    let rho = |x: f64| potential.closed_form_density(x).unwrap_or(0.0);
    let h = grid.h();
    let mut values = cell_averages_on_support(grid, rho, &support);
    // the closed forms are even; mirror so the symmetry is exact in floating point
    if grid.left == -grid.right {
        let n = grid.n;
        for i in 0..n / 2 {
            values[i] = values[n - 1 - i];
        }
    }
    let mass = h * values.iter().sum::<f64>();
    if grid.n >= 1024 && (mass - 1.0).abs() >= 1e-6 {
        return Err(Error::Verification(format!(
            "closed-form equilibrium has mass {mass} before renormalization"
        )));
    }
    GridDensity::from_cell_values(*grid, values)
}

/// `sup |Hρ(x_i) − V'(x_i)/2|` over the support interior, i.e. cells with
/// `ρ_i > 0.01 max ρ` whose two neighbours also carry mass.
pub fn euler_lagrange_residual(density: &GridDensity, potential: &Potential) -> Result<f64> {
    let hilbert = hilbert_transform(density);
    let grid = density.grid();
    support_interior(density, 0.01)
        .map(|i| (hilbert.values()[i] - 0.5 * potential.dv(grid.center(i))).abs())
        .reduce(f64::max)
        .ok_or_else(|| invalid("density has no mass above the residual threshold"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> PotentialSpec {
        PotentialSpec::parse(s).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let q = make_potential(&spec("quadratic:theta=0.5")).unwrap();
        assert_eq!((q.v(1.0), q.dv(1.0), q.ddv(1.0)), (0.5, 1.0, 1.0));
        let d = make_potential(&spec("quartic:c=-2")).unwrap();
        assert!(d.dv(2f64.sqrt()).abs() < 1e-14);
        let kp = make_potential(&spec("kontsevich-penner:a=12,b=0,cc=1")).unwrap();
        assert!((kp.v(1.0) - 1.0).abs() < 1e-15);
        assert!((kp.dv(1.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_derivatives() {
        // V = 1 + 2x − x² + x⁴
        let p = make_potential(&spec("polynomial:c0=1,c1=2,c2=-1,c4=1")).unwrap();
        let x = 0.7f64;
        assert!((p.v(x) - (1.0 + 2.0 * x - x * x + x.powi(4))).abs() < 1e-14);
        assert!((p.dv(x) - (2.0 - 2.0 * x + 4.0 * x.powi(3))).abs() < 1e-14);
        assert!((p.ddv(x) - (-2.0 + 12.0 * x * x)).abs() < 1e-14);
    }

    #[test]
    fn constructor_errors() {
        assert!(make_potential(&spec("polynomial:c0=1,c3=1")).is_err());
        assert!(make_potential(&spec("polynomial:c2=-1")).is_err());
        assert!(make_potential(&spec("kontsevich-penner:a=0,b=0,cc=1")).is_err());
        assert!(make_potential(&spec("quadratic:theta=-1")).is_err());
        assert!(matches!(
            make_potential(&spec("sextic:c=1")),
            Err(Error::UnsupportedPotential(_))
        ));
    }

    #[test]
    fn spec_grammar_round_trip() {
        let s = spec("kontsevich-penner:a=12,b=0,cc=1");
        assert_eq!(s.params["a"], 12.0);
        assert_eq!(PotentialSpec::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn singular_grid_rejected() {
        let kp = make_potential(&spec("kontsevich-penner:a=12,b=0,cc=1")).unwrap();
        assert!(kp.check_grid(&Grid::symmetric(2.0, 64).unwrap()).is_ok());
        assert!(matches!(
            kp.check_grid(&Grid::symmetric(2.0, 65).unwrap()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn convexity_bound_below_probe_minimum() {
        for s in [
            "quadratic:theta=0.5",
            "quartic:c=-3",
            "quartic:c=0",
            "quartic:c=1",
            "kontsevich-penner:a=12,b=0,cc=1",
            "kontsevich-penner:a=3,b=2,cc=1",
        ] {
            let p = make_potential(&spec(s)).unwrap();
            let k = p.convexity_bound().unwrap();
            let min = (0..10_000)
                .map(|i| -5.0 + 10.0 * (i as f64 + 0.5) / 10_000.0)
                .map(|x| p.ddv(x))
                .fold(f64::INFINITY, f64::min);
            assert!(min >= k - 1e-9, "{s}: probe min {min} < K {k}");
        }
    }

    #[test]
    fn drift_gamma_values() {
        assert_eq!(Potential::quadratic(0.5).unwrap().drift_gamma(), 0.0);
        // −x V' = x² − x⁴ for c = −1: max of (u − u²)/(1 + u) is 3 − 2√2
        let g = Potential::quartic(-1.0).unwrap().drift_gamma();
        assert!((g - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-4, "{g}");
    }

    #[test]
    fn semicircle_peak() {
        let grid = Grid::symmetric(2.5, 1024).unwrap();
        let d = equilibrium_closed_form(&Potential::quadratic(0.5).unwrap(), &grid).unwrap();
        assert!((Potential::quadratic(0.5).unwrap().closed_form_density(0.0).unwrap()
            - 1.0 / PI)
            .abs()
            < 1e-15);
        let mid = d.values()[511].max(d.values()[512]);
        assert!((mid - 1.0 / PI).abs() < 1e-5);
    }

    #[test]
    fn critical_quartic_value() {
        let p = Potential::quartic(-2.0).unwrap();
        let v = p.closed_form_density(2f64.sqrt()).unwrap();
        assert!((v - 2f64.sqrt() / PI).abs() < 1e-14);
        assert!((v - 0.45016).abs() < 1e-5);
    }

    #[test]
    fn two_cut_component_mass() {
        let p = Potential::quartic(-3.0).unwrap();
        assert_eq!(p.closed_form_support().unwrap(), vec![(-5f64.sqrt(), -1.0), (1.0, 5f64.sqrt())]);
        let grid = Grid::symmetric(3.0, 1024).unwrap();
        let d = equilibrium_closed_form(&p, &grid).unwrap();
        let pos: f64 = d.values()[512..].iter().sum::<f64>() * grid.h();
        assert!((pos - 0.5).abs() < 1e-6, "{pos}");
    }

    #[test]
    fn closed_forms_have_unit_mass_before_renormalization() {
        for c in [-3.0, -2.5, -2.0, -1.0, 0.0, 1.0, 3.0] {
            let p = Potential::quartic(c).unwrap();
            let r = p.closed_form_radius().unwrap();
            let grid = Grid::symmetric(1.3 * r, 2048).unwrap();
            // equilibrium_closed_form errors when the raw mass is off by 1e-6
            let d = equilibrium_closed_form(&p, &grid).unwrap();
            let v = d.values();
            for i in 0..grid.n {
                assert_eq!(v[i], v[grid.n - 1 - i], "c = {c}: asymmetric at cell {i}");
            }
        }
    }

    #[test]
    fn unsupported_and_uncovered() {
        let kp = make_potential(&spec("kontsevich-penner:a=12,b=0,cc=1")).unwrap();
        let grid = Grid::symmetric(3.0, 64).unwrap();
        assert!(matches!(equilibrium_closed_form(&kp, &grid), Err(Error::UnsupportedPotential(_))));
        let narrow = Grid::symmetric(1.5, 64).unwrap();
        assert!(equilibrium_closed_form(&Potential::quadratic(0.5).unwrap(), &narrow).is_err());
    }

    #[test]
    fn euler_lagrange_examples() {
        let grid = Grid::symmetric(2.5, 1024).unwrap();
        let q = Potential::quadratic(0.5).unwrap();
        let sc = equilibrium_closed_form(&q, &grid).unwrap();
        let r = euler_lagrange_residual(&sc, &q).unwrap();
        assert!(r <= 5e-3, "semicircle residual {r}");

        let quartic = Potential::quartic(1.0).unwrap();
        let g = Grid::symmetric(2.0, 1024).unwrap();
        let d = equilibrium_closed_form(&quartic, &g).unwrap();
        let r = euler_lagrange_residual(&d, &quartic).unwrap();
        assert!(r <= 1e-2, "quartic c=1 residual {r}");

        let uniform = GridDensity::from_fn(grid, |x| if x.abs() < 2.0 { 1.0 } else { 0.0 }).unwrap();
        let r = euler_lagrange_residual(&uniform, &q).unwrap();
        assert!(r > 0.1, "uniform residual {r}");
    }

    #[test]
    fn one_cut_parameters_at_c_one() {
        let QuarticCase::OneCut { a, b0 } = quartic_case(1.0) else { panic!() };
        assert!((a * a - 1.73703).abs() < 1e-5);
        assert!((b0 - 0.93426).abs() < 1e-5);
    }
}
