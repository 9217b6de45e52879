//! Smooth surfaces sampled on a grid: curvature frames, the energy
//! `E_v s = sum_i int |v_i s|^2`, the operator `Delta_v s = sum_i v_i(v_i s)`,
//! and four fields with `Delta_v s = 0` on strictly saddle patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("grid must be at least 4 x 4 with positive spacing and {expected} values, found {nx} x {ny}, h = {h}, {found} values")]
    Grid {
        nx: usize,
        ny: usize,
        h: f64,
        expected: usize,
        found: usize,
    },
    #[error("node ({i}, {j}) is not strictly saddle: Gauss curvature {gauss}")]
    NotStrictlySaddle { i: usize, j: usize, gauss: f64 },
    #[error("node ({i}, {j}): asymptotic directions are not along the grid axes")]
    NotAsymptoticGrid { i: usize, j: usize },
    #[error("characteristic marching needs a square grid, found {nx} x {ny}")]
    Cfl { nx: usize, ny: usize },
    #[error("w lost positivity at node ({i}, {j}) (w = {w:?}); use a smaller patch")]
    Positivity { i: usize, j: usize, w: [f64; 2] },
    #[error("field array has {found} nodes, patch has {expected}")]
    FieldSize { expected: usize, found: usize },
}

/// Values `s(x, y)` in R^3 on the grid `origin + (i h, j h)`, stored with
/// `i` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightFieldPatch {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub values: Vec<[f64; 3]>,
}

impl HeightFieldPatch {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2], values: Vec<[f64; 3]>) -> Result<Self, FieldError> {
        let p = HeightFieldPatch {
            nx,
            ny,
            h,
            origin,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_fn(nx: usize, ny: usize, h: f64, origin: [f64; 2], f: impl Fn(f64, f64) -> [f64; 3]) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(origin[0] + i as f64 * h, origin[1] + j as f64 * h));
            }
        }
        HeightFieldPatch {
            nx,
            ny,
            h,
            origin,
            values,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let ok = self.nx >= 4
            && self.ny >= 4
            && self.h > 0.0
            && self.h.is_finite()
            && self.values.len() == self.nx * self.ny
            && self.values.iter().flatten().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(FieldError::Grid {
                nx: self.nx,
                ny: self.ny,
                h: self.h,
                expected: self.nx * self.ny,
                found: self.values.len(),
            })
        }
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn area(&self) -> f64 {
        (self.nx - 1) as f64 * (self.ny - 1) as f64 * self.h * self.h
    }

    fn is_interior(&self, k: usize) -> bool {
        let (i, j) = (k % self.nx, k / self.nx);
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }

    pub fn map_values(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        HeightFieldPatch {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

/// The hyperbolic paraboloid `z = x^2 - y^2` in its asymptotic
/// parametrization `x = u + v`, `y = u - v`, over `[-side/2, side/2]^2`
/// with `n` nodes per side.
pub fn hyperbolic_paraboloid(n: usize, side: f64) -> HeightFieldPatch {
    let h = side / (n - 1) as f64;
    HeightFieldPatch::from_fn(n, n, h, [-side / 2.0, -side / 2.0], |u, v| [u + v, u - v, 4.0 * u * v])
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(c: f64, a: V3) -> V3 {
    [c * a[0], c * a[1], c * a[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// First derivative along an axis, second order everywhere: central inside,
/// three-point one-sided at the ends.
fn d1<T: Copy>(g: &[T], nx: usize, ny: usize, h: f64, axis: usize, lin: impl Fn(&[(f64, T)]) -> T) -> Vec<T> {
    let (n, step) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    (0..g.len())
        .map(|k| {
            let pos = if axis == 0 { k % nx } else { k / nx };
            let at = |d: isize| g[(k as isize + d * step as isize) as usize];
            let c = 1.0 / (2.0 * h);
            if pos == 0 {
                lin(&[(-3.0 * c, at(0)), (4.0 * c, at(1)), (-c, at(2))])
            } else if pos == n - 1 {
                lin(&[(3.0 * c, at(0)), (-4.0 * c, at(-1)), (c, at(-2))])
            } else {
                lin(&[(c, at(1)), (-c, at(-1))])
            }
        })
        .collect()
}

/// Second derivative along an axis: compact three-point stencil inside,
/// four-point one-sided at the ends.
fn d2(g: &[V3], nx: usize, ny: usize, h: f64, axis: usize) -> Vec<V3> {
    let (n, step) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let c = 1.0 / (h * h);
    (0..g.len())
        .map(|k| {
            let pos = if axis == 0 { k % nx } else { k / nx };
            let at = |d: isize| g[(k as isize + d * step as isize) as usize];
            if pos == 0 {
                lin3(&[(2.0 * c, at(0)), (-5.0 * c, at(1)), (4.0 * c, at(2)), (-c, at(3))])
            } else if pos == n - 1 {
                lin3(&[(2.0 * c, at(0)), (-5.0 * c, at(-1)), (4.0 * c, at(-2)), (-c, at(-3))])
            } else {
                lin3(&[(c, at(1)), (-2.0 * c, at(0)), (c, at(-1))])
            }
        })
        .collect()
}

fn lin3(terms: &[(f64, V3)]) -> V3 {
    terms.iter().fold([0.0; 3], |acc, &(c, v)| add(acc, scale(c, v)))
}


fn grad3(s: &HeightFieldPatch, g: &[V3]) -> (Vec<V3>, Vec<V3>) {
    (
        d1(g, s.nx, s.ny, s.h, 0, lin3),
        d1(g, s.nx, s.ny, s.h, 1, lin3),
    )
}

/// `v g` for a parameter-plane field `v` and a vector grid `g`.
fn along(s: &HeightFieldPatch, v: &[[f64; 2]], g: &[V3]) -> Vec<V3> {
    let (gx, gy) = grad3(s, g);
    (0..g.len()).map(|k| add(scale(v[k][0], gx[k]), scale(v[k][1], gy[k]))).collect()
}

/// Principal and asymptotic data at one node. Directions are parameter
/// vectors; `e` are unit in the surface metric, `a` are the grid axes when
/// `aligned` and unit otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFrame {
    pub kappa: [f64; 2],
    pub e: [[f64; 2]; 2],
    pub a: [[f64; 2]; 2],
    pub aligned: bool,
    pub normal: [f64; 3],
}

/// Tolerance on the Gauss curvature for strict saddleness, and on the
/// angle between an asymptotic direction and a grid axis.
pub const SADDLE_TOL: f64 = 1e-9;
pub const AXIS_TOL: f64 = 1e-9;

pub fn curvature_frame(s: &HeightFieldPatch) -> Result<Vec<CurvatureFrame>, FieldError> {
    s.validate()?;
    let (su, sv) = grad3(s, &s.values);
    let suu = d2(&s.values, s.nx, s.ny, s.h, 0);
    let svv = d2(&s.values, s.nx, s.ny, s.h, 1);
    let (suv_a, _) = grad3(s, &sv);
    let (_, suv_b) = grad3(s, &su);
    let mut out = Vec::with_capacity(s.node_count());
    for k in 0..s.node_count() {
        let (i, j) = (k % s.nx, k / s.nx);
        let suv = scale(0.5, add(suv_a[k], suv_b[k]));
        let nrm = cross(su[k], sv[k]);
        let nl = dot(nrm, nrm).sqrt();
        let nu = scale(1.0 / nl, nrm);
        let (e, f, g) = (dot(su[k], su[k]), dot(su[k], sv[k]), dot(sv[k], sv[k]));
        let (l, m, n) = (dot(suu[k], nu), dot(suv, nu), dot(svv[k], nu));
        let det_i = e * g - f * f;
        let gauss = (l * n - m * m) / det_i;
        if gauss >= -SADDLE_TOL {
            return Err(FieldError::NotStrictlySaddle { i, j, gauss });
        }
        let mean = (e * n + g * l - 2.0 * f * m) / (2.0 * det_i);
        let root = (mean * mean - gauss).sqrt();
        let kappa = [mean + root, mean - root];
        let metric = |x: [f64; 2]| (e * x[0] * x[0] + 2.0 * f * x[0] * x[1] + g * x[1] * x[1]).sqrt();
        let unit = |x: [f64; 2]| {
            let r = metric(x);
            [x[0] / r, x[1] / r]
        };
        let longer = |p: [f64; 2], q: [f64; 2]| if p[0].hypot(p[1]) >= q[0].hypot(q[1]) { p } else { q };
        let eig = |kap: f64| {
            unit(longer(
                [m - kap * f, -(l - kap * e)],
                [n - kap * g, -(m - kap * f)],
            ))
        };
        let es = [eig(kappa[0]), eig(kappa[1])];
        // null directions of the second fundamental form
        let disc = (m * m - l * n).sqrt();
        let asym = [1.0, -1.0].map(|sg: f64| longer([n, -m + sg * disc], [-m - sg * disc, l]));
        let off_axis = |x: [f64; 2], axis: usize| x[1 - axis].abs() / x[0].hypot(x[1]);
        let aligned = (off_axis(asym[0], 0) <= AXIS_TOL && off_axis(asym[1], 1) <= AXIS_TOL)
            || (off_axis(asym[1], 0) <= AXIS_TOL && off_axis(asym[0], 1) <= AXIS_TOL);
        let a = if aligned {
            [[1.0, 0.0], [0.0, 1.0]]
        } else {
            // order by closeness to the first axis
            let (p, q) = if off_axis(asym[0], 0) <= off_axis(asym[1], 0) {
                (asym[0], asym[1])
            } else {
                (asym[1], asym[0])
            };
            [unit(p), unit(q)]
        };
        out.push(CurvatureFrame {
            kappa,
            e: es,
            a,
            aligned,
            normal: nu,
        });
    }
    // eigenvectors come with arbitrary signs; orient them like the centre's
    let centre = out[s.index(s.nx / 2, s.ny / 2)].clone();
    for f in &mut out {
        for (x, r) in f.e.iter_mut().chain(f.a.iter_mut()).zip(centre.e.iter().chain(&centre.a)) {
            if x[0] * r[0] + x[1] * r[1] < 0.0 {
                *x = [-x[0], -x[1]];
            }
        }
    }
    Ok(out)
}

/// Parameter-plane vector fields on the grid. Fields from
/// [`solve_field_system`] are `v_1, v_2` along principal directions and
/// `v_3 = lambda_1 a_1`, `v_4 = lambda_2 a_2`, with `w = (lambda_1^2, lambda_2^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldArray {
    pub fields: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub frames: Vec<CurvatureFrame>,
    #[serde(default)]
    pub lambda: Vec<[f64; 2]>,
}

impl FieldArray {
    /// The two coordinate fields.
    pub fn coordinate(nodes: usize) -> Self {
        FieldArray {
            fields: vec![vec![[1.0, 0.0]; nodes], vec![[0.0, 1.0]; nodes]],
            frames: Vec::new(),
            lambda: Vec::new(),
        }
    }

    pub fn w(&self) -> Vec<[f64; 2]> {
        self.lambda.iter().map(|l| [l[0] * l[0], l[1] * l[1]]).collect()
    }

    pub fn min_lambda(&self) -> f64 {
        self.lambda.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    fn check(&self, s: &HeightFieldPatch) -> Result<(), FieldError> {
        match self.fields.iter().find(|f| f.len() != s.node_count()) {
            Some(f) => Err(FieldError::FieldSize {
                expected: s.node_count(),
                found: f.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Trapezoidal quadrature of `sum_i |v_i s|^2`.
pub fn energy(s: &HeightFieldPatch, v: &FieldArray) -> Result<f64, FieldError> {
    s.validate()?;
    v.check(s)?;
    let (su, sv) = grad3(s, &s.values);
    let mut total = 0.0;
    for k in 0..s.node_count() {
        let (i, j) = (k % s.nx, k / s.nx);
        let wx = if i == 0 || i + 1 == s.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j + 1 == s.ny { 0.5 } else { 1.0 };
        let local: f64 = v
            .fields
            .iter()
            .map(|f| {
                let d = add(scale(f[k][0], su[k]), scale(f[k][1], sv[k]));
                dot(d, d)
            })
            .sum();
        total += wx * wy * local;
    }
    Ok(total * s.h * s.h)
}

/// `Delta_v s` on the interior nodes, row by row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteriorGrid {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<[f64; 3]>,
}

impl InteriorGrid {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| dot(*v, *v).sqrt()).fold(0.0, f64::max)
    }
}

fn laplacian_all(s: &HeightFieldPatch, v: &FieldArray) -> Vec<V3> {
    let mut total = vec![[0.0; 3]; s.node_count()];
    for f in &v.fields {
        let first = along(s, f, &s.values);
        let second = along(s, f, &first);
        for (t, x) in total.iter_mut().zip(second) {
            *t = add(*t, x);
        }
    }
    total
}

/// Nested directional derivatives `sum_i v_i(v_i s)`.
pub fn laplacian(s: &HeightFieldPatch, v: &FieldArray) -> Result<InteriorGrid, FieldError> {
    s.validate()?;
    v.check(s)?;
    let all = laplacian_all(s, v);
    Ok(InteriorGrid {
        nx: s.nx - 2,
        ny: s.ny - 2,
        values: (0..s.node_count()).filter(|&k| s.is_interior(k)).map(|k| all[k]).collect(),
    })
}

/// Largest normal parts of `v_3(v_3 s)` and `v_4(v_4 s)` on interior nodes.
pub fn asymptotic_normal_parts(s: &HeightFieldPatch, v: &FieldArray) -> Result<[f64; 2], FieldError> {
    v.check(s)?;
    if v.fields.len() < 4 || v.frames.len() != s.node_count() {
        return Ok([0.0; 2]);
    }
    let mut out = [0.0f64; 2];
    for (slot, f) in v.fields[2..4].iter().enumerate() {
        let second = along(s, f, &along(s, f, &s.values));
        for k in (0..s.node_count()).filter(|&k| s.is_interior(k)) {
            out[slot] = out[slot].max(dot(second[k], v.frames[k].normal).abs());
        }
    }
    Ok(out)
}

/// Finds `lambda_1, lambda_2` with `Delta_v s = 0` for `v_1 = e_1/sqrt|k_1|`,
/// `v_2 = e_2/sqrt|k_2|`, `v_3 = lambda_1 d_u`, `v_4 = lambda_2 d_v`, on a
/// patch whose grid axes are asymptotic.
///
/// With `a_1 = d_u`, `a_2 = d_v` the equation reads
/// `T + w_1 s_uu + w_2 s_vv + (w_1)_u s_u / 2 + (w_2)_v s_v / 2 = 0`
/// with `T = v_1(v_1 s) + v_2(v_2 s)` tangent, so its tangential part fixes
/// `h(u, v, w) = ((w_1)_u, (w_2)_v)` by least squares. In `t = (u+v)/2`,
/// `z = (u-v)/2` this is `w_t + diag(1,-1) w_z = 2h`: `w_1` travels along
/// the rows and `w_2` along the columns. The march starts from `w = (1, 1)`
/// on the anti-diagonal `t = 0` and steps one diagonal at a time in both
/// directions (time step half the lattice spacing in `z`), each node taking
/// its upwind neighbour's value and a trapezoidal source.
pub fn solve_field_system(s: &HeightFieldPatch) -> Result<FieldArray, FieldError> {
    s.validate()?;
    if s.nx != s.ny {
        return Err(FieldError::Cfl { nx: s.nx, ny: s.ny });
    }
    let frames = curvature_frame(s)?;
    if let Some(k) = frames.iter().position(|f| !f.aligned) {
        return Err(FieldError::NotAsymptoticGrid { i: k % s.nx, j: k / s.nx });
    }
    let nodes = s.node_count();
    let v1: Vec<[f64; 2]> = frames
        .iter()
        .map(|f| {
            let c = 1.0 / f.kappa[0].abs().sqrt();
            [c * f.e[0][0], c * f.e[0][1]]
        })
        .collect();
    let v2: Vec<[f64; 2]> = frames
        .iter()
        .map(|f| {
            let c = 1.0 / f.kappa[1].abs().sqrt();
            [c * f.e[1][0], c * f.e[1][1]]
        })
        .collect();
    let t: Vec<V3> = {
        let a = along(s, &v1, &along(s, &v1, &s.values));
        let b = along(s, &v2, &along(s, &v2, &s.values));
        a.into_iter().zip(b).map(|(x, y)| add(x, y)).collect()
    };
    let (su, sv) = grad3(s, &s.values);
    let ex = vec![[1.0, 0.0]; nodes];
    let ey = vec![[0.0, 1.0]; nodes];
    let a1 = along(s, &ex, &along(s, &ex, &s.values));
    let a2 = along(s, &ey, &along(s, &ey, &s.values));
    let source = |k: usize, w: [f64; 2]| -> [f64; 2] {
        let r = add(t[k], add(scale(w[0], a1[k]), scale(w[1], a2[k])));
        // least squares for [s_u/2, s_v/2] (p, q) = -r
        let (g11, g12, g22) = (dot(su[k], su[k]) / 4.0, dot(su[k], sv[k]) / 4.0, dot(sv[k], sv[k]) / 4.0);
        let (b1, b2) = (-dot(su[k], r) / 2.0, -dot(sv[k], r) / 2.0);
        let det = g11 * g22 - g12 * g12;
        [(g22 * b1 - g12 * b2) / det, (g11 * b2 - g12 * b1) / det]
    };
    let n = s.nx;
    let h = s.h;
    let mut w = vec![[f64::NAN; 2]; nodes];
    let start = n - 1;
    for i in 0..n {
        w[s.index(i, start - i)] = [1.0, 1.0];
    }
    let step = |level: usize, forward: bool, w: &mut Vec<[f64; 2]>| -> Result<(), FieldError> {
        for i in 0..n {
            let Some(j) = level.checked_sub(i).filter(|&j| j < n) else {
                continue;
            };
            let k = s.index(i, j);
            let (k1, k2, sg) = if forward {
                (s.index(i - 1, j), s.index(i, j - 1), 1.0)
            } else {
                (s.index(i + 1, j), s.index(i, j + 1), -1.0)
            };
            let (p1, q2) = (source(k1, w[k1])[0], source(k2, w[k2])[1]);
            let guess = [w[k1][0] + sg * h * p1, w[k2][1] + sg * h * q2];
            let here = source(k, guess);
            let value = [
                w[k1][0] + sg * 0.5 * h * (p1 + here[0]),
                w[k2][1] + sg * 0.5 * h * (q2 + here[1]),
            ];
            if !(value[0] > 0.0 && value[1] > 0.0) {
                return Err(FieldError::Positivity { i, j, w: value });
            }
            w[k] = value;
        }
        Ok(())
    };
    for level in start + 1..=2 * (n - 1) {
        step(level, true, &mut w)?;
    }
    for level in (0..start).rev() {
        step(level, false, &mut w)?;
    }
    let lambda: Vec<[f64; 2]> = w.iter().map(|x| [x[0].sqrt(), x[1].sqrt()]).collect();
    let v3 = lambda.iter().map(|l| [l[0], 0.0]).collect();
    let v4 = lambda.iter().map(|l| [0.0, l[1]]).collect();
    Ok(FieldArray {
        fields: vec![v1, v2, v3, v4],
        frames,
        lambda,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub residual: f64,
    pub min_lambda: f64,
    /// `log2` of the residual ratio to the previous row.
    pub order: Option<f64>,
}

/// Solves on each patch and tabulates `max |Delta_v s|` on interior nodes.
pub fn convergence_study(patches: &[HeightFieldPatch]) -> Result<Vec<ConvergenceRow>, FieldError> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for s in patches {
        let v = solve_field_system(s)?;
        let residual = laplacian(s, &v)?.max_norm();
        let order = rows.last().map(|r| (r.residual / residual).ln() / (r.h / s.h).ln());
        rows.push(ConvergenceRow {
            h: s.h,
            residual,
            min_lambda: v.min_lambda(),
            order,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationTrial {
    pub amplitude: f64,
    pub energy: f64,
    /// `E_v(s + phi) - E_v(s)`.
    pub gain: f64,
    /// Odd part `(E_v(s + phi) - E_v(s - phi)) / 2` of the gain: the first
    /// variation, which vanishes up to discretization when `Delta_v s = 0`.
    pub linear: f64,
    /// Largest `E_v(s_t) - (1-t) E_v(s_0) - t E_v(s_1)` over the sampled `t`.
    pub convexity_excess: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub base_energy: f64,
    pub trials: Vec<PerturbationTrial>,
    pub min_gain: f64,
    pub max_convexity_excess: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Convexity is checked at these `t`.
pub const CONVEXITY_SAMPLES: [f64; 3] = [0.25, 0.5, 0.75];

/// A pyramid bump of height one on the square of half-width `r` about
/// `(ci, cj)` (in grid units), zero outside.
fn bump(s: &HeightFieldPatch, ci: f64, cj: f64, r: f64) -> Vec<f64> {
    (0..s.node_count())
        .map(|k| {
            let (i, j) = ((k % s.nx) as f64, (k / s.nx) as f64);
            (1.0 - (i - ci).abs().max((j - cj).abs()) / r).max(0.0)
        })
        .collect()
}

/// Random Lipschitz perturbations vanishing on the boundary: each is a sum
/// of up to three pyramid bumps inside the patch with random vector
/// heights. Reports the energy change and the convexity inequality along
/// the segment to the perturbed map.
pub fn perturbation_evidence(
    s: &HeightFieldPatch,
    v: &FieldArray,
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport, FieldError> {
    let tol = 1e-9;
    let base = energy(s, v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = (s.nx as f64, s.ny as f64);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let amplitude = rng.gen_range(0.01..0.2);
        let mut phi = vec![[0.0; 3]; s.node_count()];
        for _ in 0..rng.gen_range(1..=3) {
            let ci = rng.gen_range(1.0..nx - 2.0);
            let cj = rng.gen_range(1.0..ny - 2.0);
            let room = ci.min(cj).min(nx - 1.0 - ci).min(ny - 1.0 - cj);
            let r = rng.gen_range(1.0..=room.max(1.0)).min(room);
            let dir = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            for (p, b) in phi.iter_mut().zip(bump(s, ci, cj, r)) {
                *p = add(*p, scale(amplitude * b, dir));
            }
        }
        let moved = |t: f64| HeightFieldPatch {
            values: s.values.iter().zip(&phi).map(|(&x, &p)| add(x, scale(t, p))).collect(),
            ..s.clone()
        };
        let e1 = energy(&moved(1.0), v)?;
        let back = energy(&moved(-1.0), v)?;
        let mut excess = f64::NEG_INFINITY;
        for t in CONVEXITY_SAMPLES {
            let et = energy(&moved(t), v)?;
            excess = excess.max(et - (1.0 - t) * base - t * e1);
        }
        out.push(PerturbationTrial {
            amplitude,
            energy: e1,
            gain: e1 - base,
            linear: 0.5 * (e1 - back),
            convexity_excess: excess,
        });
    }
    let min_gain = out.iter().map(|t| t.gain).fold(f64::INFINITY, f64::min);
    let max_excess = out.iter().map(|t| t.convexity_excess).fold(f64::NEG_INFINITY, f64::max);
    Ok(PerturbationReport {
        base_energy: base,
        pass: out.iter().all(|t| t.gain >= -tol && t.convexity_excess <= tol * (1.0 + t.energy.max(base))),
        trials: out,
        min_gain,
        max_convexity_excess: max_excess,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> HeightFieldPatch {
        HeightFieldPatch::from_fn(n, n, 1.0 / (n - 1) as f64, [0.0, 0.0], f)
    }

    #[test]
    fn energy_of_simple_maps() {
        let c = square(9, |_, _| [1.0, 2.0, 3.0]);
        assert_eq!(energy(&c, &FieldArray::coordinate(81)).unwrap(), 0.0);
        let l = square(9, |x, y| [x, y, 0.0]);
        let e = energy(&l, &FieldArray::coordinate(81)).unwrap();
        assert!((e - 2.0 * l.area()).abs() < 1e-12);
    }

    #[test]
    fn energy_translation_and_scaling() {
        let s = hyperbolic_paraboloid(9, 0.5);
        let v = FieldArray::coordinate(81);
        let e = energy(&s, &v).unwrap();
        let moved = s.map_values(|p| [p[0] + 1.0, p[1] - 2.0, p[2] + 0.5]);
        assert!((energy(&moved, &v).unwrap() - e).abs() < 1e-12);
        let big = s.map_values(|p| scale(3.0, p));
        assert!((energy(&big, &v).unwrap() - 9.0 * e).abs() < 1e-10);
    }

    #[test]
    fn energy_converges_at_second_order() {
        // z = x y over [0,1]^2 with coordinate fields: E = 2 + 2/3 exactly;
        // the oracle is the Richardson extrapolation of two grids
        let e = |n: usize| energy(&square(n, |x, y| [x, y, x * y]), &FieldArray::coordinate(n * n)).unwrap();
        let (e1, e2, e3) = (e(9), e(17), e(33));
        let rich = (4.0 * e2 - e1) / 3.0;
        assert!((rich - 8.0 / 3.0).abs() < 1e-10);
        let order = ((e1 - rich) / (e2 - rich)).log2();
        assert!((1.8..2.2).contains(&order), "{order}");
        assert!((e3 - rich).abs() <= (e2 - rich).abs() / 3.0);
    }

    #[test]
    fn laplacian_simple_cases() {
        let l = square(6, |x, y| [2.0 * x - y, x + 3.0 * y, 1.0]);
        let lap = laplacian(&l, &FieldArray::coordinate(36)).unwrap();
        assert!(lap.max_norm() < 1e-12);
        let q = square(6, |x, y| [x, y, x * x]);
        let dx = FieldArray {
            fields: vec![vec![[1.0, 0.0]; 36]],
            frames: Vec::new(),
            lambda: Vec::new(),
        };
        for v in laplacian(&q, &dx).unwrap().values {
            assert!((v[0]).abs() < 1e-9 && v[1].abs() < 1e-9 && (v[2] - 2.0).abs() < 1e-9);
        }
        // quadratic maps: exact at every grid size
        for n in [5, 9, 17] {
            let q = square(n, |x, y| [x * y, x * x - y, 3.0 * y * y]);
            let lap = laplacian(&q, &FieldArray::coordinate(n * n)).unwrap();
            for v in lap.values {
                assert!((v[0]).abs() < 1e-8 && (v[1] - 2.0).abs() < 1e-8 && (v[2] - 6.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn frame_of_saddle_at_origin() {
        // z = x^2 - y^2 over a small square centred at 0: exact quadratic
        for n in [5, 9] {
            let h = 0.1 / (n - 1) as f64;
            let s = HeightFieldPatch::from_fn(n, n, h, [-0.05, -0.05], |x, y| [x, y, x * x - y * y]);
            let f = curvature_frame(&s).unwrap();
            let c = &f[s.index(n / 2, n / 2)];
            assert!((c.kappa[0] - 2.0).abs() < 1e-8 && (c.kappa[1] + 2.0).abs() < 1e-8);
            for a in c.a {
                assert!((a[0].abs() - a[1].abs()).abs() < 1e-8, "{a:?}");
            }
            assert!(!c.aligned);
            assert!((c.e[0][0].abs() - 1.0).abs() < 1e-8 && (c.e[1][1].abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn frame_curvature_converges() {
        // a cubic term makes the difference quotients inexact; the Gauss
        // curvature of a graph is (f_xx f_yy - f_xy^2) / (1 + |grad f|^2)^2
        let err = |n: usize| {
            let h = 0.2 / (n - 1) as f64;
            let s = HeightFieldPatch::from_fn(n, n, h, [0.3, 0.1], |x, y| [x, y, x * x - y * y + x * x * x]);
            let f = curvature_frame(&s).unwrap();
            let c = &f[s.index(n / 2, n / 2)];
            let (x, y) = (0.4, 0.2);
            let (fx, fy, fxx, fyy) = (2.0 * x + 3.0 * x * x, -2.0 * y, 2.0 + 6.0 * x, -2.0);
            let w = 1.0 + fx * fx + fy * fy;
            let k = fxx * fyy / (w * w);
            (c.kappa[0] * c.kappa[1] - k).abs()
        };
        let (e1, e2) = (err(5), err(9));
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn not_strictly_saddle_is_rejected() {
        let plane = square(6, |x, y| [x, y, 0.3 * x - y]);
        assert!(matches!(curvature_frame(&plane), Err(FieldError::NotStrictlySaddle { .. })));
        let sphere = square(6, |x, y| [x, y, (4.0 - x * x - y * y).sqrt()]);
        assert!(matches!(curvature_frame(&sphere), Err(FieldError::NotStrictlySaddle { .. })));
    }

    #[test]
    fn field_system_on_paraboloid() {
        let s = hyperbolic_paraboloid(17, 1.0);
        let v = solve_field_system(&s).unwrap();
        assert!(v.min_lambda() > 0.0);
        assert_eq!(v.fields.len(), 4);
        let normal = asymptotic_normal_parts(&s, &v).unwrap();
        assert!(normal[0] < 1e-9 && normal[1] < 1e-9);
        // v_1 is e_1 / sqrt|k_1|
        let f = &v.frames[40];
        let c = 1.0 / f.kappa[0].abs().sqrt();
        assert!((v.fields[0][40][0] - c * f.e[0][0]).abs() < 1e-12);
    }

    #[test]
    fn field_system_rejects_bad_grids() {
        let s = HeightFieldPatch::from_fn(9, 7, 0.1, [-0.4, -0.3], |u, v| [u + v, u - v, 4.0 * u * v]);
        assert_eq!(solve_field_system(&s), Err(FieldError::Cfl { nx: 9, ny: 7 }));
        let skew = HeightFieldPatch::from_fn(9, 9, 0.05, [-0.2, -0.2], |x, y| [x, y, x * x - y * y]);
        assert!(matches!(solve_field_system(&skew), Err(FieldError::NotAsymptoticGrid { .. })));
    }

    #[test]
    fn zero_perturbation_changes_nothing() {
        let s = hyperbolic_paraboloid(9, 0.5);
        let v = solve_field_system(&s).unwrap();
        let r = perturbation_evidence(&s, &v, 0, 0).unwrap();
        assert!(r.pass && r.trials.is_empty());
        assert_eq!(energy(&s, &v).unwrap(), r.base_energy);
    }
}
