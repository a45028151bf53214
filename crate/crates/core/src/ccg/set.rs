use serde::{Deserialize, Serialize};

use super::{CcgError, GeneratorFn};
use crate::numerics::{cholesky, Mat};

/// Constrained convex generator set
/// `{ G ξ + c : A ξ = b, g_i(ξ_i) ≤ 0 for every generator block i }`.
///
/// The generator blocks partition `ξ` in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CcgRepr", into = "CcgRepr")]
pub struct Ccg {
    g: Mat,
    c: Vec<f64>,
    a: Mat,
    b: Vec<f64>,
    gens: Vec<GeneratorFn>,
}

#[derive(Serialize, Deserialize)]
struct CcgRepr {
    g: Mat,
    c: Vec<f64>,
    a: Mat,
    b: Vec<f64>,
    gens: Vec<GeneratorFn>,
}

impl TryFrom<CcgRepr> for Ccg {
    type Error = CcgError;

    fn try_from(r: CcgRepr) -> Result<Self, Self::Error> {
        Ccg::new(r.g, r.c, r.a, r.b, r.gens)
    }
}

impl From<Ccg> for CcgRepr {
    fn from(s: Ccg) -> Self {
        CcgRepr {
            g: s.g,
            c: s.c,
            a: s.a,
            b: s.b,
            gens: s.gens,
        }
    }
}

fn mismatch(msg: String) -> CcgError {
    CcgError::DimensionMismatch(msg)
}

impl Ccg {
    pub fn new(
        g: Mat,
        c: Vec<f64>,
        a: Mat,
        b: Vec<f64>,
        gens: Vec<GeneratorFn>,
    ) -> Result<Self, CcgError> {
        let xi: usize = gens.iter().map(GeneratorFn::dim).sum();
        if g.rows() != c.len() {
            return Err(mismatch(format!("G has {} rows but c has length {}", g.rows(), c.len())));
        }
        if g.cols() != xi {
            return Err(mismatch(format!(
                "G has {} columns but generators cover {xi} coordinates",
                g.cols()
            )));
        }
        if a.cols() != xi {
            return Err(mismatch(format!(
                "A has {} columns but generators cover {xi} coordinates",
                a.cols()
            )));
        }
        if a.rows() != b.len() {
            return Err(mismatch(format!("A has {} rows but b has length {}", a.rows(), b.len())));
        }
        for gen in &gens {
            gen.validate().map_err(CcgError::InvalidGenerator)?;
        }
        if !g.is_finite() || !a.is_finite() || c.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(CcgError::InvalidGenerator("non-finite set data".into()));
        }
        Ok(Self { g, c, a, b, gens })
    }

    /// The singleton `{c}`.
    pub fn point(c: &[f64]) -> Self {
        Self {
            g: Mat::zeros(c.len(), 0),
            c: c.to_vec(),
            a: Mat::zeros(0, 0),
            b: Vec::new(),
            gens: Vec::new(),
        }
    }

    /// Euclidean ball; a zero radius gives the singleton.
    pub fn ball(center: &[f64], radius: f64) -> Result<Self, CcgError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(CcgError::InvalidGenerator(format!("ball radius {radius}")));
        }
        if radius == 0.0 {
            return Ok(Self::point(center));
        }
        let n = center.len();
        Self::new(
            Mat::identity(n).scale(radius),
            center.to_vec(),
            Mat::zeros(0, n),
            Vec::new(),
            vec![GeneratorFn::ball(n)],
        )
    }

    /// `{ c + L ξ : ‖ξ‖ ≤ 1 }` with `L Lᵀ = shape`, i.e. the ellipsoid
    /// `(x − c)ᵀ shape⁻¹ (x − c) ≤ 1`. `shape` must be positive definite.
    pub fn ellipsoid(center: &[f64], shape: &Mat) -> Result<Self, CcgError> {
        let n = center.len();
        if shape.shape() != (n, n) {
            return Err(mismatch(format!(
                "ellipsoid shape {:?} for center of length {n}",
                shape.shape()
            )));
        }
        let l = cholesky(shape)?;
        Self::new(l, center.to_vec(), Mat::zeros(0, n), Vec::new(), vec![GeneratorFn::ball(n)])
    }

    /// Smooth box `{ c + diag(h) ξ : Σ ξ^{2m} + ε‖ξ‖² ≤ 1 }`, contained in the
    /// sharp box with half widths `h`.
    pub fn smooth_box(
        center: &[f64],
        half_widths: &[f64],
        power: u32,
        reg: f64,
    ) -> Result<Self, CcgError> {
        Self::scaled_smooth_box(center, half_widths, power, reg, 1.0)
    }

    /// Smooth box scaled so that it contains the sharp box with half widths
    /// `h` (its corners lie on the boundary).
    pub fn smooth_box_enclosing(
        center: &[f64],
        half_widths: &[f64],
        power: u32,
        reg: f64,
    ) -> Result<Self, CcgError> {
        let gen = GeneratorFn::smooth_box(half_widths.len(), power, reg);
        gen.validate().map_err(CcgError::InvalidGenerator)?;
        Self::scaled_smooth_box(center, half_widths, power, reg, gen.box_enclosing_scale())
    }

    fn scaled_smooth_box(
        center: &[f64],
        half_widths: &[f64],
        power: u32,
        reg: f64,
        scale: f64,
    ) -> Result<Self, CcgError> {
        let n = center.len();
        if half_widths.len() != n {
            return Err(mismatch(format!("{} half widths for dimension {n}", half_widths.len())));
        }
        if half_widths.iter().any(|h| !(*h > 0.0)) {
            return Err(CcgError::InvalidGenerator("half widths must be positive".into()));
        }
        let d: Vec<f64> = half_widths.iter().map(|h| h * scale).collect();
        Self::new(
            Mat::from_diag(&d),
            center.to_vec(),
            Mat::zeros(0, n),
            Vec::new(),
            vec![GeneratorFn::smooth_box(n, power, reg)],
        )
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn gen_dim(&self) -> usize {
        self.g.cols()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn g(&self) -> &Mat {
        &self.g
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn gens(&self) -> &[GeneratorFn] {
        &self.gens
    }

    /// `R Z + t = (R G, R c + t, A, b)`.
    pub fn affine_map(&self, r: &Mat, t: &[f64]) -> Result<Self, CcgError> {
        if r.cols() != self.dim() || t.len() != r.rows() {
            return Err(mismatch(format!(
                "affine map {:?} + {} applied to dimension {}",
                r.shape(),
                t.len(),
                self.dim()
            )));
        }
        let mut c = r.mulv(&self.c);
        for (ci, ti) in c.iter_mut().zip(t) {
            *ci += ti;
        }
        Ok(Self {
            g: r.mul(&self.g),
            c,
            a: self.a.clone(),
            b: self.b.clone(),
            gens: self.gens.clone(),
        })
    }

    /// `s Z` for a scalar `s`.
    pub fn scale(&self, s: f64) -> Self {
        let n = self.dim();
        self.affine_map(&Mat::identity(n).scale(s), &vec![0.0; n])
            .expect("square map of matching size")
    }

    /// `Z ⊕ W = ([G_z G_w], c_z + c_w, blkdiag(A_z, A_w), [b_z; b_w])`.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self, CcgError> {
        if self.dim() != other.dim() {
            return Err(mismatch(format!(
                "Minkowski sum of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        let mut gens = self.gens.clone();
        gens.extend_from_slice(&other.gens);
        Ok(Self {
            g: self.g.hstack(&other.g)?,
            c: self.c.iter().zip(&other.c).map(|(x, y)| x + y).collect(),
            a: self.a.block_diag(&other.a),
            b,
            gens,
        })
    }

    /// `Z ∩_R W = { z ∈ Z : R z ∈ W }`.
    pub fn generalized_intersection(&self, other: &Self, r: &Mat) -> Result<Self, CcgError> {
        if r.shape() != (other.dim(), self.dim()) {
            return Err(mismatch(format!(
                "intersection map {:?} between dimensions {} and {}",
                r.shape(),
                self.dim(),
                other.dim()
            )));
        }
        let (nz, nw) = (self.gen_dim(), other.gen_dim());
        let g = self.g.hstack(&Mat::zeros(self.dim(), nw))?;
        let rg = r.mul(&self.g);
        let mut a = Mat::zeros(self.num_constraints() + other.num_constraints() + other.dim(), nz + nw);
        a.set_block(0, 0, &self.a);
        a.set_block(self.num_constraints(), nz, &other.a);
        let r0 = self.num_constraints() + other.num_constraints();
        a.set_block(r0, 0, &rg);
        a.set_block(r0, nz, &other.g.scale(-1.0));
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        let rc = r.mulv(&self.c);
        b.extend(other.c.iter().zip(&rc).map(|(cw, rcz)| cw - rcz));
        let mut gens = self.gens.clone();
        gens.extend_from_slice(&other.gens);
        Ok(Self {
            g,
            c: self.c.clone(),
            a,
            b,
            gens,
        })
    }

    /// Plain intersection (`R = I`).
    pub fn intersection(&self, other: &Self) -> Result<Self, CcgError> {
        self.generalized_intersection(other, &Mat::identity(self.dim()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CcgError> {
        serde_json::from_str(s).map_err(|e| CcgError::Parse(e.to_string()))
    }
}

/// Confidence ellipsoid `{ x : (x − c)ᵀ Σ⁻¹ (x − c) ≤ 1 }`, with `Σ` the
/// already scaled shape matrix. The generator is the Cholesky factor of `Σ`.
pub fn make_ellipsoid(center: &[f64], shape: &Mat) -> Result<Ccg, CcgError> {
    Ccg::ellipsoid(center, shape)
}
