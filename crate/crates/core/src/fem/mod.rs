//! P1 finite elements: assembly of mass, stiffness, weighted-mass,
//! weighted-stiffness and convection matrices, load vectors, and the L²
//! projection onto the discrete space.
//!
//! Variable coefficients are integrated with the three-point edge-midpoint
//! rule (weights `area/3`, exact for quadratics). Quadrature point `q` of a
//! triangle is the midpoint of the edge opposite local vertex `q`, so the
//! basis function of vertex `i` takes the value `0` at point `i` and `1/2`
//! at the other two.

mod solver;
mod sparse;

pub use solver::{solve_sparse, solve_sparse_with, SolverHint, SolverOptions};
pub use sparse::{SparseMatrix, SparsityPattern};

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, Mesh};

/// Values of a field at the three quadrature points of every element.
pub type QuadField = Vec<[f64; 3]>;

/// Nodal coefficients of a P1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction(Vec<f64>);

impl FeFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Deref for FeFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FeFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FeFunction {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The P1 space on a mesh, with cached geometry and the constant-coefficient
/// mass and stiffness matrices.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Mesh,
    geometry: Vec<ElementGeometry>,
    pattern: Arc<SparsityPattern>,
    /// Storage slot of local entry `(a, b)` at index `3a + b`.
    slots: Vec<[usize; 9]>,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    area: f64,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Self {
        let n = mesh.num_vertices();
        let mut rows = vec![Vec::new(); n];
        for t in mesh.triangles() {
            for &a in t {
                rows[a].extend_from_slice(t);
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        let slots = mesh
            .triangles()
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = pattern.slot(t[a], t[b]).expect("element pair in pattern");
                    }
                }
                s
            })
            .collect();
        let geometry: Vec<_> = (0..mesh.num_triangles())
            .map(|e| mesh.element_geometry(e))
            .collect();
        let area = geometry.iter().map(|g| g.area).sum();
        let mut space = Self {
            mesh,
            geometry,
            pattern: Arc::clone(&pattern),
            slots,
            mass: SparseMatrix::zeros(Arc::clone(&pattern), true),
            stiffness: SparseMatrix::zeros(pattern, true),
            area,
        };
        space.mass = space.assemble_mass();
        space.stiffness = space.assemble_stiffness();
        space
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.len()
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    /// |Ω|.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Cached consistent mass matrix.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// Cached stiffness matrix.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn zero_matrix(&self, symmetric: bool) -> SparseMatrix {
        SparseMatrix::zeros(Arc::clone(&self.pattern), symmetric)
    }

    fn scatter(&self, m: &mut SparseMatrix, e: usize, local: &[[f64; 3]; 3]) {
        for a in 0..3 {
            for b in 0..3 {
                m.add_at_slot(self.slots[e][3 * a + b], local[a][b]);
            }
        }
    }

    /// `M_ij = ∫ φ_i φ_j`, element matrices in closed form.
    pub fn assemble_mass(&self) -> SparseMatrix {
        let mut m = self.zero_matrix(true);
        for (e, g) in self.geometry.iter().enumerate() {
            let d = g.area / 6.0;
            let o = g.area / 12.0;
            self.scatter(&mut m, e, &[[d, o, o], [o, d, o], [o, o, d]]);
        }
        m
    }

    /// `K_ij = ∫ ∇φ_i·∇φ_j`.
    pub fn assemble_stiffness(&self) -> SparseMatrix {
        self.stiffness_with(|e| self.geometry[e].area)
    }

    fn stiffness_with(&self, scale: impl Fn(usize) -> f64) -> SparseMatrix {
        let mut m = self.zero_matrix(true);
        for (e, g) in self.geometry.iter().enumerate() {
            let s = scale(e);
            let mut local = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] = s * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
                }
            }
            self.scatter(&mut m, e, &local);
        }
        m
    }

    /// Coordinates of the quadrature points of element `e`.
    pub fn quad_points(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.mesh.triangles()[e];
        let v = self.mesh.vertices();
        std::array::from_fn(|q| {
            let (a, b) = (v[t[(q + 1) % 3]], v[t[(q + 2) % 3]]);
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        })
    }

    /// Interpolates a nodal field to the quadrature points.
    pub fn to_quad(&self, field: &[f64]) -> QuadField {
        self.mesh
            .triangles()
            .iter()
            .map(|t| std::array::from_fn(|q| 0.5 * (field[t[(q + 1) % 3]] + field[t[(q + 2) % 3]])))
            .collect()
    }

    /// Evaluates `f(element, point, x)` at every quadrature point.
    pub fn quad_eval(&self, mut f: impl FnMut(usize, usize, [f64; 2]) -> f64) -> QuadField {
        (0..self.num_elements())
            .map(|e| {
                let pts = self.quad_points(e);
                std::array::from_fn(|q| f(e, q, pts[q]))
            })
            .collect()
    }

    fn check_quad(&self, w: &[[f64; 3]]) -> Result<()> {
        if w.len() != self.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "quadrature field has {} elements, mesh has {}",
                w.len(),
                self.num_elements()
            )));
        }
        for (e, vals) in w.iter().enumerate() {
            for (q, &v) in vals.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numeric {
                        element: e,
                        point: q,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    /// `W_ij = Σ_q (area/3) w_q φ_i(x_q) φ_j(x_q)` for a weight given at
    /// quadrature points.
    pub fn weighted_mass(&self, w: &[[f64; 3]]) -> Result<SparseMatrix> {
        self.check_quad(w)?;
        let mut m = self.zero_matrix(true);
        for (e, g) in self.geometry.iter().enumerate() {
            let c = g.area / 12.0;
            let wq = w[e];
            let mut local = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] = if a == b {
                        c * (wq[(a + 1) % 3] + wq[(a + 2) % 3])
                    } else {
                        c * wq[3 - a - b]
                    };
                }
            }
            self.scatter(&mut m, e, &local);
        }
        Ok(m)
    }

    /// Weighted mass matrix for a weight callback `weight(element, point, x)`.
    pub fn assemble_weighted_mass(
        &self,
        weight: impl FnMut(usize, usize, [f64; 2]) -> f64,
    ) -> Result<SparseMatrix> {
        self.weighted_mass(&self.quad_eval(weight))
    }

    /// `K^w_ij = ∫ w ∇φ_i·∇φ_j` with `w` integrated by the midpoint rule.
    pub fn weighted_stiffness(&self, w: &[[f64; 3]]) -> Result<SparseMatrix> {
        self.check_quad(w)?;
        Ok(self.stiffness_with(|e| self.geometry[e].area / 3.0 * (w[e][0] + w[e][1] + w[e][2])))
    }

    /// `C_ij = Σ_e ∫_e φ_j (b_e·∇φ_i)` for an element-wise constant field `b`.
    ///
    /// Rows are test functions. For nodal vectors `p`, `u`,
    /// `pᵀ C u = ∫ u_h (b·∇p_h)`.
    pub fn assemble_convection(&self, field: &[[f64; 2]]) -> Result<SparseMatrix> {
        if field.len() != self.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "vector field has {} elements, mesh has {}",
                field.len(),
                self.num_elements()
            )));
        }
        let mut m = self.zero_matrix(false);
        for (e, g) in self.geometry.iter().enumerate() {
            let b = field[e];
            for (k, &v) in b.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numeric {
                        element: e,
                        point: k,
                        value: v,
                    });
                }
            }
            // Σ_q (area/3) φ_j(x_q) = area/3 for every j
            let c = g.area / 3.0;
            let mut local = [[0.0; 3]; 3];
            for (a, row) in local.iter_mut().enumerate() {
                let r = c * (b[0] * g.grads[a][0] + b[1] * g.grads[a][1]);
                *row = [r; 3];
            }
            self.scatter(&mut m, e, &local);
        }
        Ok(m)
    }

    /// Element-wise constant gradient of a nodal field.
    pub fn gradient(&self, field: &[f64]) -> Vec<[f64; 2]> {
        self.mesh
            .triangles()
            .iter()
            .zip(&self.geometry)
            .map(|(t, g)| {
                let mut d = [0.0; 2];
                for a in 0..3 {
                    d[0] += field[t[a]] * g.grads[a][0];
                    d[1] += field[t[a]] * g.grads[a][1];
                }
                d
            })
            .collect()
    }

    /// `b_i = Σ_q (area/3) f_q φ_i(x_q)`.
    pub fn load(&self, f: &[[f64; 3]]) -> Result<Vec<f64>> {
        self.check_quad(f)?;
        let mut b = vec![0.0; self.dim()];
        for ((t, g), fq) in self.mesh.triangles().iter().zip(&self.geometry).zip(f) {
            let c = g.area / 6.0;
            for a in 0..3 {
                b[t[a]] += c * (fq[(a + 1) % 3] + fq[(a + 2) % 3]);
            }
        }
        Ok(b)
    }

    /// `Σ_e Σ_q (area/3) f_q`.
    pub fn integrate(&self, f: &[[f64; 3]]) -> f64 {
        self.geometry
            .iter()
            .zip(f)
            .map(|(g, fq)| g.area / 3.0 * (fq[0] + fq[1] + fq[2]))
            .sum()
    }

    /// Solves `M q = b` to the solver contract.
    pub fn solve_mass(&self, b: &[f64]) -> Result<FeFunction> {
        let opts = SolverOptions {
            rtol: 1e-12,
            max_iter: None,
        };
        let q = solve_sparse_with(&self.mass, b, SolverHint::Spd, &opts, None)?;
        Ok(FeFunction(q))
    }

    /// L² projection of a quadrature-level field.
    pub fn project_quad(&self, f: &[[f64; 3]]) -> Result<FeFunction> {
        self.solve_mass(&self.load(f)?)
    }

    /// L² projection `Q^h f`: `(Q^h f, m) = (f, m)` for all `m` in the space.
    pub fn l2_project(&self, f: impl Fn([f64; 2]) -> f64) -> Result<FeFunction> {
        self.project_quad(&self.quad_eval(|_, _, x| f(x)))
    }

    /// Nodal interpolation.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> FeFunction {
        FeFunction(self.mesh.vertices().iter().map(|&x| f(x)).collect())
    }

    /// `∫ f_h` for a nodal field, equal to `1ᵀ M f`.
    pub fn integral(&self, f: &[f64]) -> f64 {
        self.integrate(&self.to_quad(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_unit_square;

    fn reference_space() -> FemSpace {
        FemSpace::new(Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap())
    }

    fn dense(m: &SparseMatrix) -> Vec<Vec<f64>> {
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
    }

    #[test]
    fn reference_mass_and_stiffness() {
        let s = reference_space();
        let m = dense(s.mass());
        let k = dense(s.stiffness());
        let em = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        let ek = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - 0.5 / 12.0 * em[i][j]).abs() < 1e-14);
                assert!((k[i][j] - 0.5 * ek[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let s = FemSpace::new(generate_unit_square(2, 2).unwrap());
        let ones = vec![1.0; s.dim()];
        assert!((s.mass().bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
        assert!(s.mass().is_symmetric() && s.mass().is_numerically_symmetric(1e-14));
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let s = FemSpace::new(generate_unit_square(5, 7).unwrap());
        let k1 = s.stiffness().mul(&vec![1.0; s.dim()]);
        assert!(k1.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn weighted_mass_consistency() {
        let s = FemSpace::new(generate_unit_square(3, 4).unwrap());
        let w1 = s.assemble_weighted_mass(|_, _, _| 1.0).unwrap();
        let w3 = s.assemble_weighted_mass(|_, _, _| 3.0).unwrap();
        for (k, &m) in s.mass().values().iter().enumerate() {
            assert!((w1.values()[k] - m).abs() < 1e-12);
            assert!((w3.values()[k] - 3.0 * m).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_mass_x_on_reference() {
        let s = reference_space();
        let w = s.assemble_weighted_mass(|_, _, x| x[0]).unwrap();
        let total: f64 = w.values().iter().sum();
        assert!((total - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_mass_rejects_nan() {
        let s = reference_space();
        let err = s
            .assemble_weighted_mass(|_, q, _| if q == 2 { f64::NAN } else { 1.0 })
            .unwrap_err();
        assert!(matches!(err, Error::Numeric { element: 0, point: 2, .. }));
    }

    #[test]
    fn convection_zero_and_constant_field() {
        let s = FemSpace::new(generate_unit_square(4, 3).unwrap());
        let zero = s.assemble_convection(&vec![[0.0, 0.0]; s.num_elements()]).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let c = s.assemble_convection(&vec![[0.7, -1.3]; s.num_elements()]).unwrap();
        let c1 = c.mul(&vec![1.0; s.dim()]);
        assert!(c1.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn convection_reference_column() {
        // field (1, 0), u = λ₁ = x on the reference triangle:
        // ∫ λ₁ ∂x φ_i = (∂x φ_i)·∫ x = (∂x φ_i)/6
        let s = reference_space();
        let c = s.assemble_convection(&[[1.0, 0.0]]).unwrap();
        let col = c.mul(&[0.0, 1.0, 0.0]);
        let expected = [-1.0 / 6.0, 1.0 / 6.0, 0.0];
        for i in 0..3 {
            assert!((col[i] - expected[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_reproduces_linears() {
        let s = FemSpace::new(generate_unit_square(6, 6).unwrap());
        let one = s.l2_project(|_| 1.0).unwrap();
        assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let x = s.l2_project(|p| p[0]).unwrap();
        for (v, p) in x.iter().zip(s.mesh().vertices()) {
            assert!((v - p[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_of_linear_field() {
        let s = FemSpace::new(generate_unit_square(3, 3).unwrap());
        let f = s.interpolate(|p| 2.0 * p[0] - 0.5 * p[1]);
        for g in s.gradient(&f) {
            assert!((g[0] - 2.0).abs() < 1e-13 && (g[1] + 0.5).abs() < 1e-13);
        }
    }
}
