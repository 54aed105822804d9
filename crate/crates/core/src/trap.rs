//! Pseudopotential trap model: equilibrium, secular modes, and gradient shimming.
//!
//! All potentials are expressed in volts (energy divided by the ion charge).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{basis_jacobian, basis_solution};
use crate::geometry::ElectrodeLayout;
use crate::heating::IonSpecies;
use crate::num::{dot, mat_t_vec, norm, Mat3, Vec3};

/// Default RF drive frequency, rad/s (2π × 64.5 MHz).
pub const DEFAULT_RF_OMEGA: f64 = 2.0 * std::f64::consts::PI * 64.5e6;
/// Default RF amplitude, V (peak).
pub const DEFAULT_RF_AMPLITUDE: f64 = 49.6;

const UM: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub species: IonSpecies<f64>,
    /// RF drive frequency Ω, rad/s.
    pub rf_omega: f64,
    /// RF amplitude V₀, V (peak).
    pub rf_amplitude: f64,
    /// Static voltage per DC group, V.
    pub dc_voltages: BTreeMap<String, f64>,
    /// Uniform stray field, V/m.
    pub stray_field: Vec3<f64>,
}

impl TrapConfig {
    pub fn new(species: IonSpecies<f64>, rf_omega: f64, rf_amplitude: f64) -> Self {
        TrapConfig { species, rf_omega, rf_amplitude, dc_voltages: BTreeMap::new(), stray_field: [0.0; 3] }
    }

    /// ⁸⁸Sr⁺ with the bundled layout's DC set, tuned for a 1.29 MHz axial mode.
    pub fn bundled() -> Self {
        let mut c = TrapConfig::new(IonSpecies::sr88(), DEFAULT_RF_OMEGA, DEFAULT_RF_AMPLITUDE);
        for (g, v) in BUNDLED_DC {
            c.dc_voltages.insert(g.to_string(), v);
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        if !(self.rf_omega > 0.0 && self.rf_omega.is_finite()) {
            return Err(Error::non_positive("rf_omega", self.rf_omega));
        }
        if !(self.rf_amplitude > 0.0 && self.rf_amplitude.is_finite()) {
            return Err(Error::non_positive("rf_amplitude", self.rf_amplitude));
        }
        if self.dc_voltages.values().chain(self.stray_field.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("DC voltages and stray field must be finite".into()));
        }
        Ok(())
    }

    pub fn with_stray_field(mut self, e: Vec3<f64>) -> Self {
        self.stray_field = e;
        self
    }

    pub fn with_rf_amplitude(mut self, v0: f64) -> Self {
        self.rf_amplitude = v0;
        self
    }

    /// Adds `offsets` to the DC voltages.
    pub fn with_dc_offsets(mut self, offsets: &BTreeMap<String, f64>) -> Self {
        for (g, dv) in offsets {
            *self.dc_voltages.entry(g.clone()).or_insert(0.0) += dv;
        }
        self
    }

    /// Multiplies every DC voltage by `s`.
    pub fn with_dc_scale(mut self, s: f64) -> Self {
        for v in self.dc_voltages.values_mut() {
            *v *= s;
        }
        self
    }
}

/// DC voltages of [`TrapConfig::bundled`]: end pairs (A, B) and center pair (L0, R0)
/// put the DC field's z component to zero at the RF null and set ω_y = 2π × 1.29 MHz.
pub const BUNDLED_DC: [(&str, f64); 4] = [
    ("A", 12.076_029_930_632),
    ("B", 12.076_029_930_632),
    ("L0", -23.418_281_393_662),
    ("R0", -23.418_281_393_662),
];

/// Static properties of the trap at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapOperatingPoint {
    pub position: Vec3<f64>,
    /// Secular angular frequencies, ascending, rad/s.
    pub secular_frequencies: [f64; 3],
    /// Unit eigenvectors matching `secular_frequencies`.
    pub principal_axes: [Vec3<f64>; 3],
    /// ∂E₀²/∂i along each principal axis, V²/m³.
    pub grad_e0_sq: [f64; 3],
    /// ∇E₀² in lab coordinates, V²/m³.
    pub grad_e0_sq_cartesian: Vec3<f64>,
    /// V²/m²
    pub e0_sq: f64,
    /// Hessian of the total potential, V/m².
    pub hessian: Mat3<f64>,
    /// Total potential, V.
    pub potential: f64,
    /// |∇Φ|, V/m.
    pub gradient_norm: f64,
    /// Index of the principal axis closest to y.
    pub axial: usize,
}

impl TrapOperatingPoint {
    pub fn axial_frequency(&self) -> f64 {
        self.secular_frequencies[self.axial]
    }

    pub fn axial_axis(&self) -> Vec3<f64> {
        self.principal_axes[self.axial]
    }

    pub fn axial_gradient(&self) -> f64 {
        self.grad_e0_sq[self.axial]
    }
}

/// Evaluates potentials of one layout/config pair.
pub struct Trap<'a> {
    layout: &'a ElectrodeLayout<f64>,
    config: &'a TrapConfig,
    rf_group: String,
}

impl<'a> Trap<'a> {
    pub fn new(layout: &'a ElectrodeLayout<f64>, config: &'a TrapConfig) -> Result<Self> {
        config.validate()?;
        let rf_group = layout.rf_group()?.to_string();
        for g in config.dc_voltages.keys() {
            if !layout.has_group(g) {
                return Err(Error::UnknownGroup(g.clone()));
            }
            if *g == rf_group {
                return Err(Error::Invalid(format!("group `{g}` is the RF group, not a DC group")));
            }
        }
        Ok(Trap { layout, config, rf_group })
    }

    pub fn layout(&self) -> &ElectrodeLayout<f64> {
        self.layout
    }

    pub fn config(&self) -> &TrapConfig {
        self.config
    }

    pub fn rf_group(&self) -> &str {
        &self.rf_group
    }

    /// `q V₀² / (4 m Ω²)`: pseudopotential in volts per |e|² (e = RF field per volt).
    pub fn pseudo_coefficient(&self) -> f64 {
        let c = self.config;
        c.species.charge * c.rf_amplitude.powi(2) / (4.0 * c.species.mass * c.rf_omega.powi(2))
    }

    /// RF field per volt and its Jacobian.
    pub fn rf_basis(&self, p: Vec3<f64>) -> Result<(Vec3<f64>, Mat3<f64>)> {
        let (_, e) = basis_solution(self.layout, &self.rf_group, p)?;
        let j = basis_jacobian(self.layout, &self.rf_group, p)?;
        Ok((e, j))
    }

    /// E₀ = V₀ × RF field per volt.
    pub fn rf_field_amplitude(&self, p: Vec3<f64>) -> Result<Vec3<f64>> {
        let (_, e) = basis_solution(self.layout, &self.rf_group, p)?;
        Ok(e.map(|c| c * self.config.rf_amplitude))
    }

    /// ∇(E₀²) in V²/m³.
    pub fn grad_e0_sq(&self, p: Vec3<f64>) -> Result<Vec3<f64>> {
        let (e, j) = self.rf_basis(p)?;
        let v2 = self.config.rf_amplitude.powi(2);
        Ok(mat_t_vec(&j, e).map(|c| 2.0 * v2 * c))
    }

    /// Static DC field plus stray field, and the DC field Jacobian.
    pub fn static_field(&self, p: Vec3<f64>) -> Result<(Vec3<f64>, Mat3<f64>)> {
        let mut e = self.config.stray_field;
        let mut g = [[0.0; 3]; 3];
        for (grp, &v) in &self.config.dc_voltages {
            let (_, f) = basis_solution(self.layout, grp, p)?;
            let j = basis_jacobian(self.layout, grp, p)?;
            for a in 0..3 {
                e[a] += v * f[a];
                for b in 0..3 {
                    g[a][b] += v * j[a][b];
                }
            }
        }
        Ok((e, g))
    }

    /// Total potential Φ in volts.
    pub fn potential(&self, p: Vec3<f64>) -> Result<f64> {
        let (_, e) = basis_solution(self.layout, &self.rf_group, p)?;
        let mut phi = self.pseudo_coefficient() * dot(e, e) - dot(self.config.stray_field, p);
        for (grp, &v) in &self.config.dc_voltages {
            phi += v * basis_solution(self.layout, grp, p)?.0;
        }
        Ok(phi)
    }

    /// ∇Φ in V/m.
    pub fn gradient(&self, p: Vec3<f64>) -> Result<Vec3<f64>> {
        let (e, j) = self.rf_basis(p)?;
        let k = 2.0 * self.pseudo_coefficient();
        let pg = mat_t_vec(&j, e);
        let mut g = [k * pg[0], k * pg[1], k * pg[2]];
        for a in 0..3 {
            g[a] -= self.config.stray_field[a];
        }
        for (grp, &v) in &self.config.dc_voltages {
            let (_, f) = basis_solution(self.layout, grp, p)?;
            for a in 0..3 {
                g[a] -= v * f[a];
            }
        }
        Ok(g)
    }

    /// Hessian of Φ (V/m²) by central differences of the analytic gradient.
    pub fn hessian(&self, p: Vec3<f64>) -> Result<Mat3<f64>> {
        let h = 1e-3 * UM;
        let mut m = [[0.0; 3]; 3];
        for b in 0..3 {
            let mut lo = p;
            let mut hi = p;
            lo[b] -= h;
            hi[b] += h;
            let gl = self.gradient(lo)?;
            let gh = self.gradient(hi)?;
            for a in 0..3 {
                m[a][b] = (gh[a] - gl[a]) / (2.0 * h);
            }
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let s = 0.5 * (m[a][b] + m[b][a]);
                m[a][b] = s;
                m[b][a] = s;
            }
        }
        Ok(m)
    }

    /// Characteristic potential scale used for convergence tolerances, V.
    fn potential_scale(&self) -> f64 {
        self.config
            .dc_voltages
            .values()
            .fold(self.config.rf_amplitude, |a, v| a.max(v.abs()))
            .max(1.0)
    }

    /// Gradient tolerance, V/m.
    pub fn gradient_tolerance(&self) -> f64 {
        1e-6 * self.potential_scale() / self.layout.ion_height_hint
    }

    /// Operating-point quantities at an arbitrary point (not necessarily an equilibrium).
    pub fn operating_point_at(&self, p: Vec3<f64>) -> Result<TrapOperatingPoint> {
        let hess = self.hessian(p)?;
        let eig = SymmetricEigen::new(Matrix3::from_fn(|i, j| hess[i][j]));
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let qm = self.config.species.charge / self.config.species.mass;
        let mut freqs = [0.0; 3];
        let mut axes = [[0.0; 3]; 3];
        for (k, &i) in order.iter().enumerate() {
            let lam = eig.eigenvalues[i];
            if !(lam > 0.0) {
                return Err(Error::Unstable(format!(
                    "potential curvature {lam:.3e} V/m² along a principal axis at {:?}",
                    p
                )));
            }
            freqs[k] = (qm * lam).sqrt();
            let v = eig.eigenvectors.column(i);
            let mut a = [v[0], v[1], v[2]];
            let big = (0..3).max_by(|&x, &y| a[x].abs().total_cmp(&a[y].abs())).unwrap();
            if a[big] < 0.0 {
                a = a.map(|c| -c);
            }
            axes[k] = a;
        }
        let axial = (0..3).max_by(|&x, &y| axes[x][1].abs().total_cmp(&axes[y][1].abs())).unwrap();
        let g_cart = self.grad_e0_sq(p)?;
        let e0 = self.rf_field_amplitude(p)?;
        let grad = self.gradient(p)?;
        Ok(TrapOperatingPoint {
            position: p,
            secular_frequencies: freqs,
            principal_axes: axes,
            grad_e0_sq: [dot(g_cart, axes[0]), dot(g_cart, axes[1]), dot(g_cart, axes[2])],
            grad_e0_sq_cartesian: g_cart,
            e0_sq: dot(e0, e0),
            hessian: hess,
            potential: self.potential(p)?,
            gradient_norm: norm(grad),
            axial,
        })
    }

    /// Damped Newton iteration on ∇Φ = 0 from `start`.
    pub fn newton_equilibrium(&self, start: Vec3<f64>, max_iter: usize) -> Result<Vec3<f64>> {
        let tol = self.gradient_tolerance();
        let mut p = start;
        let mut g = self.gradient(p)?;
        for _ in 0..max_iter {
            if norm(g) < tol * 1e-3 {
                break;
            }
            let h = self.hessian(p)?;
            let hm = Matrix3::from_fn(|i, j| h[i][j]);
            let step = match hm.cholesky() {
                Some(ch) => ch.solve(&Vector3::from(g)),
                None => return Err(Error::Unstable(format!("indefinite Hessian near {p:?}"))),
            };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let q = [p[0] - t * step[0], p[1] - t * step[1], p[2] - t * step[2]];
                if q[2] > 0.0 {
                    let gq = self.gradient(q)?;
                    if norm(gq) < norm(g) {
                        p = q;
                        g = gq;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if norm(g) < tol {
            Ok(p)
        } else {
            Err(Error::NotConverged(format!("|∇Φ| = {:.3e} V/m at {p:?}", norm(g))))
        }
    }
}

/// Multi-start search settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    /// Half-width of the cubic search box, m.
    pub half_box: f64,
    /// Starts per dimension.
    pub grid: usize,
    /// Box center; defaults to the layout center at the ion height hint.
    pub center: Option<Vec3<f64>>,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { half_box: 60.0 * UM, grid: 3, center: None, max_iter: 300 }
    }
}

fn search_center(layout: &ElectrodeLayout<f64>, opts: &SearchOptions) -> Vec3<f64> {
    opts.center.unwrap_or_else(|| {
        let c = layout.center_xy();
        [c[0], c[1], layout.ion_height_hint]
    })
}

/// BFGS descent in micrometre coordinates. Returns the end point.
fn bfgs(trap: &Trap, start: Vec3<f64>, max_iter: usize, tol: f64) -> Result<Vec3<f64>> {
    let zmin = 0.02 * trap.layout.ion_height_hint / UM;
    let f = |u: &Vector3<f64>| trap.potential([u[0] * UM, u[1] * UM, u[2] * UM]);
    let gr = |u: &Vector3<f64>| trap.gradient([u[0] * UM, u[1] * UM, u[2] * UM]).map(|g| Vector3::from(g) * UM);
    let mut x = Vector3::new(start[0] / UM, start[1] / UM, start[2] / UM);
    let mut fx = f(&x)?;
    let mut g = gr(&x)?;
    let mut hinv = Matrix3::identity();
    let mut first = true;
    for _ in 0..max_iter {
        if g.norm() < tol * UM {
            break;
        }
        let mut d = -(hinv * g);
        if d.dot(&g) >= 0.0 {
            hinv = Matrix3::identity();
            d = -g;
        }
        if first {
            d *= 1.0 / d.norm();
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let xn = x + d * t;
            if xn[2] > zmin {
                let fn_ = f(&xn)?;
                if fn_ <= fx + 1e-4 * t * g.dot(&d) {
                    next = Some((xn, fn_));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = next else { break };
        let gn = gr(&xn)?;
        let s = xn - x;
        let y = gn - g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if first {
                hinv = Matrix3::identity() * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let i = Matrix3::identity();
            hinv = (i - s * y.transpose() * rho) * hinv * (i - y * s.transpose() * rho) + s * s.transpose() * rho;
        }
        first = false;
        x = xn;
        fx = fn_;
        g = gn;
        if s.norm() < 1e-10 {
            break;
        }
    }
    Ok([x[0] * UM, x[1] * UM, x[2] * UM])
}

fn lexi_less(a: &Vec3<f64>, b: &Vec3<f64>) -> bool {
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Finds the lowest local minimum of the total potential in the search box.
pub fn find_equilibrium(layout: &ElectrodeLayout<f64>, config: &TrapConfig) -> Result<TrapOperatingPoint> {
    find_equilibrium_with(layout, config, &SearchOptions::default())
}

pub fn find_equilibrium_with(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    opts: &SearchOptions,
) -> Result<TrapOperatingPoint> {
    let trap = Trap::new(layout, config)?;
    let c = search_center(layout, opts);
    let n = opts.grid.max(1);
    let offs: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -opts.half_box + 2.0 * opts.half_box * i as f64 / (n - 1) as f64).collect()
    };
    let zfloor = 0.2 * layout.ion_height_hint;
    let mut starts = Vec::with_capacity(n * n * n);
    for &dx in &offs {
        for &dy in &offs {
            for &dz in &offs {
                starts.push([c[0] + dx, c[1] + dy, (c[2] + dz).max(zfloor)]);
            }
        }
    }
    let tol = trap.gradient_tolerance();
    let results: Vec<Result<(Vec3<f64>, f64, Result<TrapOperatingPoint>)>> = starts
        .par_iter()
        .map(|s| {
            let p = bfgs(&trap, *s, opts.max_iter, tol)?;
            let p = trap.newton_equilibrium(p, 20).unwrap_or(p);
            let g = norm(trap.gradient(p)?);
            Ok((p, g, trap.operating_point_at(p)))
        })
        .collect();

    let inside = |p: &Vec3<f64>| (0..3).all(|i| (p[i] - c[i]).abs() <= opts.half_box * (1.0 + 1e-9)) && p[2] > 0.0;
    let mut stationary = 0usize;
    let mut best: Option<TrapOperatingPoint> = None;
    for r in results {
        let (p, g, op) = match r {
            Ok(v) => v,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        };
        if !(g < tol && inside(&p)) {
            continue;
        }
        stationary += 1;
        let op = match op {
            Ok(op) => op,
            Err(Error::Unstable(_)) => continue,
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let scale = 1e-12 * b.potential.abs().max(1e-12);
                if op.potential < b.potential - scale {
                    true
                } else if (op.potential - b.potential).abs() <= scale {
                    lexi_less(&op.position, &b.position)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some(op);
        }
    }
    match best {
        Some(b) => Ok(b),
        None if stationary > 0 => Err(Error::Unstable("stationary points found but none is a minimum".into())),
        None => Err(Error::NoMinimum(format!(
            "no converged minimum within ±{:.1} µm of {:?}",
            opts.half_box / UM,
            c
        ))),
    }
}

/// Locates the point where the RF field vanishes, starting near `start`.
pub fn find_rf_null(layout: &ElectrodeLayout<f64>, start: Vec3<f64>) -> Result<Vec3<f64>> {
    let rf = layout.rf_group()?.to_string();
    let eval = |p: Vec3<f64>| -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let (_, e) = basis_solution(layout, &rf, p)?;
        let j = basis_jacobian(layout, &rf, p)?;
        Ok((Vector3::from(e), Matrix3::from_fn(|a, b| j[a][b])))
    };
    let mut p = start;
    let (mut e, mut j) = eval(p)?;
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let jtj = j.transpose() * j;
        let jte = j.transpose() * e;
        let scale = jtj.diagonal().max();
        let a = jtj + Matrix3::identity() * (lambda * scale);
        let Some(step) = a.cholesky().map(|c| c.solve(&jte)) else { break };
        let q = [p[0] - step[0], p[1] - step[1], p[2] - step[2]];
        if q[2] > 0.0 {
            let (eq, jq) = eval(q)?;
            if eq.norm() < e.norm() {
                p = q;
                e = eq;
                j = jq;
                lambda = (lambda * 0.1).max(1e-15);
                if step.norm() < 1e-16 {
                    break;
                }
                continue;
            }
        }
        lambda *= 10.0;
        if lambda > 1e12 {
            break;
        }
    }
    // |e| relative to the field scale 1/h.
    if e.norm() * layout.ion_height_hint < 1e-9 {
        Ok(p)
    } else {
        Err(Error::NotConverged(format!("RF field per volt {:.3e} 1/m remains at {p:?}", e.norm())))
    }
}

/// Stray field that makes `point` an equilibrium of `config` (whose own stray field is ignored).
pub fn stray_field_for_position(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    point: Vec3<f64>,
) -> Result<Vec3<f64>> {
    let bare = config.clone().with_stray_field([0.0; 3]);
    Trap::new(layout, &bare)?.gradient(point)
}

/// Min-norm DC voltage patterns producing unit fields (1 V/m) along x, y, z at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct ShimBasis {
    pub groups: Vec<String>,
    /// `vectors[axis][k]` is the voltage on `groups[k]` per V/m along `axis`.
    pub vectors: [Vec<f64>; 3],
}

impl ShimBasis {
    pub fn at(layout: &ElectrodeLayout<f64>, groups: &[&str], point: Vec3<f64>) -> Result<Self> {
        if groups.len() < 3 {
            return Err(Error::Invalid("shimming three field components needs at least three DC groups".into()));
        }
        let n = groups.len();
        let mut a = DMatrix::<f64>::zeros(3, n);
        for (k, g) in groups.iter().enumerate() {
            let (_, e) = basis_solution(layout, g, point)?;
            for i in 0..3 {
                a[(i, k)] = e[i];
            }
        }
        let aat = &a * a.transpose();
        let inv = aat
            .try_inverse()
            .ok_or_else(|| Error::Singular("DC groups cannot produce independent x, y, z fields".into()))?;
        let v = a.transpose() * inv;
        let col = |i: usize| (0..n).map(|k| v[(k, i)]).collect::<Vec<f64>>();
        Ok(ShimBasis { groups: groups.iter().map(|s| s.to_string()).collect(), vectors: [col(0), col(1), col(2)] })
    }

    /// Voltage offsets for shim fields `s` (V/m along x, y, z).
    pub fn offsets(&self, s: Vec3<f64>) -> BTreeMap<String, f64> {
        self.groups
            .iter()
            .enumerate()
            .map(|(k, g)| (g.clone(), s[0] * self.vectors[0][k] + s[1] * self.vectors[1][k] + s[2] * self.vectors[2][k]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    /// Half-range of each shim scan, V/m.
    pub range: f64,
    pub samples: usize,
    /// Axis scan order (0 = x, 1 = y, 2 = z).
    pub order: [usize; 3],
    /// |∂_y E₀²| below which the procedure stops, V²/m³.
    pub floor: f64,
    pub max_brent_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { range: 2000.0, samples: 81, order: [2, 0, 1], floor: 1e10, max_brent_iter: 100 }
    }
}

/// A zero of the axial gradient found along one shim scan.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientZero {
    pub shims: Vec3<f64>,
    pub position: Vec3<f64>,
    pub e0_sq: f64,
    pub axial_gradient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientMinimization {
    /// Shim fields, V/m.
    pub shims: Vec3<f64>,
    /// DC voltage offsets realizing the shims.
    pub voltages: BTreeMap<String, f64>,
    /// Axial ∂E₀² before and after, V²/m³.
    pub initial: f64,
    pub residual: f64,
    pub operating_point: TrapOperatingPoint,
    /// Every zero found, in scan order.
    pub zeros: Vec<GradientZero>,
}

struct Probe<'a> {
    layout: &'a ElectrodeLayout<f64>,
    config: &'a TrapConfig,
    basis: &'a ShimBasis,
}

impl Probe<'_> {
    fn eval(&self, s: Vec3<f64>, start: Vec3<f64>) -> Result<TrapOperatingPoint> {
        let cfg = self.config.clone().with_dc_offsets(&self.basis.offsets(s));
        let trap = Trap::new(self.layout, &cfg)?;
        match trap.newton_equilibrium(start, 60) {
            Ok(p) => trap.operating_point_at(p),
            Err(_) => find_equilibrium(self.layout, &cfg),
        }
    }
}

/// Shims DC fields to null the axial pseudopotential gradient at the ion.
///
/// Scans each shim axis in turn, emulating a search for the shim setting at which
/// an axial probe tone stops exciting the ion. Sign changes of ∂_y E₀² along a
/// scan are refined with Brent's method; of several zeros the one with the
/// smallest E₀² is taken.
pub fn minimize_gradient(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    basis: &ShimBasis,
    opts: &MinimizeOptions,
) -> Result<GradientMinimization> {
    let probe = Probe { layout, config, basis };
    let op0 = find_equilibrium(layout, config)?;
    let initial = op0.axial_gradient();
    let mut shims = [0.0; 3];
    let mut current = op0.clone();
    let mut zeros = Vec::new();
    if initial.abs() > opts.floor {
        for &axis in &opts.order {
            let n = opts.samples.max(3);
            let mut scan = Vec::with_capacity(n);
            let mut start = current.position;
            for i in 0..n {
                let mut s = shims;
                s[axis] = -opts.range + 2.0 * opts.range * i as f64 / (n - 1) as f64;
                // Shim settings that leave no stable trap are simply not observable.
                match probe.eval(s, start) {
                    Ok(op) => {
                        start = op.position;
                        scan.push((s, op));
                    }
                    Err(e) if e.is_numerical() => {}
                    Err(e) => return Err(e),
                }
            }
            let mut found = Vec::new();
            for w in scan.windows(2) {
                let (ga, gb) = (w[0].1.axial_gradient(), w[1].1.axial_gradient());
                if ga == 0.0 {
                    found.push(w[0].clone());
                } else if ga.signum() != gb.signum() && gb != 0.0 {
                    match brent_zero(&probe, &w[0], &w[1], axis, opts.max_brent_iter) {
                        Ok(z) => found.push(z),
                        Err(e) if e.is_numerical() => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            for (s, op) in &found {
                zeros.push(GradientZero { shims: *s, position: op.position, e0_sq: op.e0_sq, axial_gradient: op.axial_gradient() });
            }
            let pick = if found.is_empty() {
                refine_tangential(&probe, &scan, axis)?
            } else {
                found.into_iter().min_by(|a, b| a.1.e0_sq.total_cmp(&b.1.e0_sq))
            };
            if let Some((s, op)) = pick {
                if op.axial_gradient().abs() < current.axial_gradient().abs() {
                    shims = s;
                    current = op;
                }
            }
            if current.axial_gradient().abs() <= opts.floor {
                break;
            }
        }
    }
    Ok(GradientMinimization {
        shims,
        voltages: basis.offsets(shims),
        initial,
        residual: current.axial_gradient(),
        operating_point: current,
        zeros,
    })
}

type ScanPoint = (Vec3<f64>, TrapOperatingPoint);

/// Without a sign change the gradient can still touch zero; refine the best
/// sample by golden-section search on |∂_y E₀²| between its neighbours.
fn refine_tangential(probe: &Probe, scan: &[ScanPoint], axis: usize) -> Result<Option<ScanPoint>> {
    let Some(i) = (0..scan.len()).min_by(|&a, &b| {
        scan[a].1.axial_gradient().abs().total_cmp(&scan[b].1.axial_gradient().abs())
    }) else {
        return Ok(None);
    };
    let mut best = scan[i].clone();
    let lo = scan[i.saturating_sub(1)].0[axis];
    let hi = scan[(i + 1).min(scan.len() - 1)].0[axis];
    if hi <= lo {
        return Ok(Some(best));
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let eval = |x: f64, best: &mut ScanPoint| -> Result<f64> {
        let mut s = best.0;
        s[axis] = x;
        match probe.eval(s, best.1.position) {
            Ok(op) => {
                let g = op.axial_gradient().abs();
                if g < best.1.axial_gradient().abs() {
                    *best = (s, op);
                }
                Ok(g)
            }
            Err(e) if e.is_numerical() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c, &mut best)?;
    let mut fd = eval(d, &mut best)?;
    for _ in 0..60 {
        if (b - a).abs() < 1e-9 * (hi - lo) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c, &mut best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d, &mut best)?;
        }
    }
    Ok(Some(best))
}

fn brent_zero(probe: &Probe, a: &ScanPoint, b: &ScanPoint, axis: usize, max_iter: usize) -> Result<ScanPoint> {
    let at = |x: f64, start: Vec3<f64>| -> Result<ScanPoint> {
        let mut s = a.0;
        s[axis] = x;
        Ok((s, probe.eval(s, start)?))
    };
    let (mut xa, mut fa) = (a.0[axis], a.1.axial_gradient());
    let (mut xb, mut fb) = (b.0[axis], b.1.axial_gradient());
    let mut best = if fa.abs() < fb.abs() { a.clone() } else { b.clone() };
    let (mut xc, mut fc) = (xa, fa);
    let mut d = xb - xa;
    let mut e = d;
    let tol_x = 1e-9 * (xb - xa).abs().max(1.0);
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            xc = xa;
            fc = fa;
            d = xb - xa;
            e = d;
        }
        if fc.abs() < fb.abs() {
            xa = xb;
            xb = xc;
            xc = xa;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let m = 0.5 * (xc - xb);
        if m.abs() <= tol_x || fb == 0.0 {
            return Ok(best);
        }
        if e.abs() >= tol_x && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if xa == xc {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (s * (2.0 * m * q0 * (q0 - r) - (xb - xa) * (r - 1.0)), (q0 - 1.0) * (r - 1.0) * (s - 1.0))
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol_x * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        xa = xb;
        fa = fb;
        xb += if d.abs() > tol_x { d } else { tol_x * m.signum() };
        let pt = at(xb, best.1.position)?;
        fb = pt.1.axial_gradient();
        if fb.abs() < best.1.axial_gradient().abs() {
            best = pt;
        }
    }
    Err(Error::NotConverged("shim root search exceeded its iteration budget".into()))
}

/// Solves the two DC voltages of an end-cap/center electrode split so that the
/// DC field has no z component at `point` and the axial curvature gives `axial_omega`.
///
/// Returns (V_end, V_center). Curvature from the RF pseudopotential at `point` is included.
pub fn balance_dc(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    end_groups: &[&str],
    center_groups: &[&str],
    point: Vec3<f64>,
    axial_omega: f64,
) -> Result<(f64, f64)> {
    let bare = TrapConfig { dc_voltages: BTreeMap::new(), stray_field: [0.0; 3], ..config.clone() };
    let trap = Trap::new(layout, &bare)?;
    let sum = |gs: &[&str]| -> Result<(Vec3<f64>, Mat3<f64>)> {
        let mut e = [0.0; 3];
        let mut j = [[0.0; 3]; 3];
        for g in gs {
            let (_, f) = basis_solution(layout, g, point)?;
            let jj = basis_jacobian(layout, g, point)?;
            for a in 0..3 {
                e[a] += f[a];
                for b in 0..3 {
                    j[a][b] += jj[a][b];
                }
            }
        }
        Ok((e, j))
    };
    let (ee, je) = sum(end_groups)?;
    let (ec, jc) = sum(center_groups)?;
    let pseudo_yy = trap.hessian(point)?[1][1];
    let target = config.species.mass * axial_omega * axial_omega / config.species.charge - pseudo_yy;
    // Potential curvature of a group is minus its field Jacobian.
    let m = nalgebra::Matrix2::new(ee[2], ec[2], -je[1][1], -jc[1][1]);
    let v = m
        .lu()
        .solve(&nalgebra::Vector2::new(0.0, target))
        .ok_or_else(|| Error::Singular("end and center groups are degenerate".into()))?;
    Ok((v[0], v[1]))
}

/// Scales all DC voltages so that the axial secular frequency equals `axial_omega`.
pub fn tune_axial_frequency(layout: &ElectrodeLayout<f64>, config: &TrapConfig, axial_omega: f64) -> Result<TrapConfig> {
    let w2 = |s: f64| -> Result<(f64, TrapOperatingPoint)> {
        let op = find_equilibrium(layout, &config.clone().with_dc_scale(s))?;
        Ok((op.axial_frequency().powi(2) - axial_omega * axial_omega, op))
    };
    let (mut s0, mut s1) = (1.0, 1.02);
    let (mut f0, _) = w2(s0)?;
    let (mut f1, _) = w2(s1)?;
    for _ in 0..40 {
        if (f1 - f0).abs() < f64::MIN_POSITIVE {
            break;
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        s0 = s1;
        f0 = f1;
        s1 = s2;
        f1 = w2(s1)?.0;
        if f1.abs() < 1e-9 * axial_omega * axial_omega {
            return Ok(config.clone().with_dc_scale(s1));
        }
    }
    Err(Error::NotConverged("axial frequency tuning".into()))
}

/// Magnitude of a uniform stray field along `direction` that produces the axial
/// gradient `target` (V²/m³) at the resulting equilibrium. Returns the field vector.
pub fn stray_for_axial_gradient(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    direction: Vec3<f64>,
    target: f64,
) -> Result<Vec3<f64>> {
    let dir = crate::num::normalized(direction).ok_or_else(|| Error::Invalid("direction must be non-zero".into()))?;
    let g = |e: f64| -> Result<f64> {
        let cfg = config.clone().with_stray_field(dir.map(|c| c * e));
        Ok(find_equilibrium(layout, &cfg)?.axial_gradient().abs() - target)
    };
    let (mut e0, mut e1) = (100.0, 200.0);
    let (mut f0, mut f1) = (g(e0)?, g(e1)?);
    for _ in 0..50 {
        if f1.abs() < 1e-9 * target {
            return Ok(dir.map(|c| c * e1));
        }
        if f1 == f0 {
            break;
        }
        let e2 = (e1 - f1 * (e1 - e0) / (f1 - f0)).max(0.5 * e1);
        e0 = e1;
        f0 = f1;
        e1 = e2;
        f1 = g(e1)?;
    }
    Err(Error::NotConverged("stray field for target gradient".into()))
}
