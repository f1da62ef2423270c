//! Linear action-space mapping between a reduced and a full action space,
//! and the layer surgery that widens a network's action interface without
//! changing what it computes.
//!
//! Actions are row vectors. A full action `a` (length `m`) projects to the
//! reduced space as `a · F` and a reduced action `r` (length `l`) lifts back
//! as `r · pinv(F)`. Because `F` has full column rank, `pinv(F) · F = I_l`,
//! so lifting then projecting is the identity on the reduced space.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Condition numbers of `FᵀF` above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Moore-Penrose pseudoinverse of a full-column-rank matrix via the normal
/// equations `(MᵀM)⁻¹Mᵀ`.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    if m.rows() < m.cols() || m.cols() == 0 {
        return Err(Error::RankDeficient);
    }
    let mt = m.transpose();
    let gram = mt.matmul(m)?;
    let gram_inv = gram.inverse()?;
    let cond = gram.norm_1() * gram_inv.norm_1();
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    gram_inv.matmul(&mt)
}

/// The mapping matrix `F` (shape `m×l`, `m > l`) together with its
/// precomputed pseudoinverse (shape `l×m`).
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    f: Matrix,
    f_pinv: Matrix,
}

impl MappingMatrix {
    pub fn new(f: Matrix) -> Result<Self> {
        let (m, l) = f.shape();
        if l == 0 || m <= l {
            return Err(Error::NotTall { rows: m, cols: l });
        }
        let f_pinv = pseudoinverse(&f)?;
        Ok(MappingMatrix { f, f_pinv })
    }

    /// The 6→3 mapping used by the assembly task: `(Δx, Δy)` average into
    /// `Δp`, `Δz` passes through, `(Δα, Δβ, Δγ)` average into `Δo`.
    pub fn canonical() -> Self {
        let half = 0.5;
        let third = 1.0 / 3.0;
        let f = Matrix::from_rows(&[
            &[half, 0.0, 0.0],
            &[half, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, third],
            &[0.0, 0.0, third],
            &[0.0, 0.0, third],
        ]);
        MappingMatrix::new(f).expect("canonical mapping is well conditioned")
    }

    /// Composes `self` (reduced `l` ← middle `m`) with `outer`
    /// (middle `m` ← full `n`), giving the direct mapping `l` ← `n`.
    pub fn then(&self, outer: &MappingMatrix) -> Result<MappingMatrix> {
        if outer.reduced_dim() != self.full_dim() {
            return Err(Error::shape(
                "MappingMatrix::then",
                self.full_dim(),
                outer.reduced_dim(),
            ));
        }
        MappingMatrix::new(outer.f.matmul(&self.f)?)
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn f_pinv(&self) -> &Matrix {
        &self.f_pinv
    }

    /// `m`, the full action dimension.
    pub fn full_dim(&self) -> usize {
        self.f.rows()
    }

    /// `l`, the reduced action dimension.
    pub fn reduced_dim(&self) -> usize {
        self.f.cols()
    }

    /// Full action → reduced action (`a · F`).
    pub fn project(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.full_dim() {
            return Err(Error::shape("project", self.full_dim(), a.len()));
        }
        self.f.vecmul(a)
    }

    /// Reduced action → full action (`a_rd · pinv(F)`).
    pub fn lift(&self, a_rd: &[f64]) -> Result<Vec<f64>> {
        if a_rd.len() != self.reduced_dim() {
            return Err(Error::shape("lift", self.reduced_dim(), a_rd.len()));
        }
        self.f_pinv.vecmul(a_rd)
    }

    /// Remaps a stored reduced action (replay record, noise state) into the
    /// full space. Same algebra as [`lift`](Self::lift).
    pub fn remap_action_record(&self, a_rd: &[f64]) -> Result<Vec<f64>> {
        self.lift(a_rd)
    }

    /// Widens an actor output layer `h·W + b` from `l` to `m` outputs so
    /// that the new output equals the old output lifted by `pinv(F)`.
    ///
    /// The bias is transformed along with the weights; without it the
    /// projected output would differ whenever `b ≠ 0`.
    pub fn extend_actor_output_layer(&self, w: &Matrix, b: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        let l = self.reduced_dim();
        if w.cols() != l {
            return Err(Error::shape("extend_actor_output_layer (weights)", l, w.cols()));
        }
        if b.len() != l {
            return Err(Error::shape("extend_actor_output_layer (bias)", l, b.len()));
        }
        Ok((w.matmul(&self.f_pinv)?, self.f_pinv.vecmul(b)?))
    }

    /// Widens a critic's action-input weight block (`l×h`) to `m×h` as `F·W`,
    /// so the critic scores any full action exactly as the old critic scored
    /// its projection. The layer bias is unaffected.
    pub fn extend_critic_action_input_layer(&self, w: &Matrix) -> Result<Matrix> {
        let l = self.reduced_dim();
        if w.rows() != l {
            return Err(Error::shape("extend_critic_action_input_layer", l, w.rows()));
        }
        self.f.matmul(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn canonical_pinv_duplicates_tied_components() {
        let map = MappingMatrix::canonical();
        let expected = Matrix::from_rows(&[
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        ]);
        assert_eq!(map.f_pinv(), &expected);
        let left = map.f_pinv().matmul(map.f()).unwrap();
        assert!(left.max_abs_diff(&Matrix::identity(3)) <= 1e-12);
    }

    #[test]
    fn canonical_column_norms() {
        let map = MappingMatrix::canonical();
        let gram = map.f().transpose().matmul(map.f()).unwrap();
        let expected = Matrix::from_rows(&[&[0.5, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0 / 3.0]]);
        assert!(gram.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn pseudoinverse_small_cases() {
        let id = Matrix::identity(3);
        assert!(pseudoinverse(&id).unwrap().max_abs_diff(&id) < 1e-15);

        let col = Matrix::from_rows(&[&[2.0], &[0.0]]);
        let p = pseudoinverse(&col).unwrap();
        assert_eq!(p.shape(), (1, 2));
        assert_close(p.as_slice(), &[0.5, 0.0], 1e-15);
    }

    #[test]
    fn pseudoinverse_rejects_rank_deficient_and_ill_conditioned() {
        let dup = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert!(pseudoinverse(&dup).is_err());

        let near = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-6], &[0.0, 0.0]]);
        assert!(matches!(pseudoinverse(&near), Err(Error::IllConditioned(_))));

        let wide = Matrix::from_rows(&[&[1.0, 0.0, 0.0]]);
        assert!(pseudoinverse(&wide).is_err());
    }

    #[test]
    fn penrose_conditions_hold_for_generic_tall_matrix() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.25], &[-2.0, 1.5]]);
        let p = pseudoinverse(&m).unwrap();
        let mpm = m.matmul(&p).unwrap().matmul(&m).unwrap();
        assert!(mpm.max_abs_diff(&m) < 1e-10);
        let pmp = p.matmul(&m).unwrap().matmul(&p).unwrap();
        assert!(pmp.max_abs_diff(&p) < 1e-10);
        let mp = m.matmul(&p).unwrap();
        assert!(mp.max_abs_diff(&mp.transpose()) < 1e-10);
        let pm = p.matmul(&m).unwrap();
        assert!(pm.max_abs_diff(&pm.transpose()) < 1e-10);
    }

    #[test]
    fn mapping_must_be_tall() {
        assert!(matches!(
            MappingMatrix::new(Matrix::identity(3)),
            Err(Error::NotTall { .. })
        ));
    }

    #[test]
    fn project_and_lift_examples() {
        let map = MappingMatrix::canonical();
        assert_close(
            &map.project(&[0.8, 0.4, 1.0, 0.3, 0.3, 0.3]).unwrap(),
            &[0.6, 1.0, 0.3],
            1e-15,
        );
        assert_eq!(map.project(&[0.0; 6]).unwrap(), vec![0.0; 3]);
        assert_eq!(map.lift(&[0.6, 1.0, 0.3]).unwrap(), vec![0.6, 0.6, 1.0, 0.3, 0.3, 0.3]);
        assert_eq!(map.lift(&[0.0; 3]).unwrap(), vec![0.0; 6]);
        assert_close(
            &map.project(&map.lift(&[0.1, -0.5, 0.8]).unwrap()).unwrap(),
            &[0.1, -0.5, 0.8],
            1e-15,
        );
        assert!(map.project(&[0.0; 3]).is_err());
        assert!(map.lift(&[0.0; 6]).is_err());
    }

    #[test]
    fn remap_record_example() {
        let map = MappingMatrix::canonical();
        assert_eq!(
            map.remap_action_record(&[0.2, 0.0, -0.1]).unwrap(),
            vec![0.2, 0.2, 0.0, -0.1, -0.1, -0.1]
        );
    }

    #[test]
    fn actor_surgery_examples() {
        let map = MappingMatrix::canonical();
        let (w, b) = map
            .extend_actor_output_layer(&Matrix::zeros(32, 3), &[0.6, 1.0, 0.3])
            .unwrap();
        assert_eq!(w, Matrix::zeros(32, 6));
        assert_eq!(b, vec![0.6, 0.6, 1.0, 0.3, 0.3, 0.3]);

        let (w, b) = map
            .extend_actor_output_layer(&Matrix::from_rows(&[&[1.0, 2.0, 3.0]]), &[0.0; 3])
            .unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 2.0, 3.0, 3.0, 3.0]);
        assert_eq!(b, vec![0.0; 6]);

        assert!(map.extend_actor_output_layer(&Matrix::zeros(4, 6), &[0.0; 6]).is_err());
        assert!(map.extend_actor_output_layer(&Matrix::zeros(4, 3), &[0.0; 2]).is_err());
    }

    #[test]
    fn critic_surgery_examples() {
        let map = MappingMatrix::canonical();
        let w = map.extend_critic_action_input_layer(&Matrix::identity(3)).unwrap();
        assert_eq!(&w, map.f());

        let col = Matrix::from_rows(&[&[1.0], &[2.0], &[3.0]]);
        let w = map.extend_critic_action_input_layer(&col).unwrap();
        assert_close(w.as_slice(), &[0.5, 0.5, 2.0, 1.0, 1.0, 1.0], 1e-15);

        assert!(map.extend_critic_action_input_layer(&Matrix::zeros(6, 2)).is_err());
    }

    #[test]
    fn composed_mappings_chain_dimensions() {
        // 2 <- 3 <- 6
        let inner = MappingMatrix::new(Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.5], &[0.0, 0.5]])).unwrap();
        let outer = MappingMatrix::canonical();
        let chain = inner.then(&outer).unwrap();
        assert_eq!(chain.f().shape(), (6, 2));
        let a = [0.3, 0.1, -0.4, 0.2, 0.5, -0.1];
        let direct = chain.project(&a).unwrap();
        let stepwise = inner.project(&outer.project(&a).unwrap()).unwrap();
        assert_close(&direct, &stepwise, 1e-14);
        assert!(outer.then(&inner).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, 3)
    }

    fn vec6() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, 6)
    }

    proptest! {
        #[test]
        fn lift_then_project_is_identity(x in vec3()) {
            let map = MappingMatrix::canonical();
            let back = map.project(&map.lift(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn lift_project_lift_is_idempotent(x in vec3()) {
            let map = MappingMatrix::canonical();
            let once = map.lift(&x).unwrap();
            let twice = map.lift(&map.project(&once).unwrap()).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn project_is_linear(x in vec6(), y in vec6(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
            let map = MappingMatrix::canonical();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| s * a + t * b).collect();
            let lhs = map.project(&combo).unwrap();
            let px = map.project(&x).unwrap();
            let py = map.project(&y).unwrap();
            for i in 0..3 {
                prop_assert!((lhs[i] - (s * px[i] + t * py[i])).abs() <= 1e-10);
            }
        }

        #[test]
        fn lift_is_linear(x in vec3(), y in vec3(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
            let map = MappingMatrix::canonical();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| s * a + t * b).collect();
            let lhs = map.lift(&combo).unwrap();
            let lx = map.lift(&x).unwrap();
            let ly = map.lift(&y).unwrap();
            for i in 0..6 {
                prop_assert!((lhs[i] - (s * lx[i] + t * ly[i])).abs() <= 1e-10);
            }
        }
    }
}
