//! Online ridge alignment from the attacker's embedding space to the
//! victim's.
//!
//! Only the sufficient statistics `EᵀE` and `EᵀẼ` are kept, so memory is
//! `O(d_local · (d_local + d_victim))` no matter how many pairs arrive. The
//! map is refit after every batch as `W = (EᵀE + λI)⁻¹ EᵀẼ` through a
//! Cholesky solve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{cosine, Embedding};

/// Scale applied to the in-sample agreement at the first iteration, where no
/// earlier matrix exists to validate against.
pub const FIRST_STEP_CONF_FACTOR: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct AlignState {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    n_pairs: usize,
    lambda: f64,
    w: Option<DMatrix<f64>>,
    conf_history: Vec<f64>,
}

impl AlignState {
    pub fn new(d_local: usize, d_victim: usize, lambda: f64) -> Self {
        Self {
            gram: DMatrix::zeros(d_local, d_local),
            cross: DMatrix::zeros(d_local, d_victim),
            n_pairs: 0,
            lambda,
            w: None,
            conf_history: Vec::new(),
        }
    }

    pub fn d_local(&self) -> usize {
        self.gram.nrows()
    }

    pub fn d_victim(&self) -> usize {
        self.cross.ncols()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn w(&self) -> Option<&DMatrix<f64>> {
        self.w.as_ref()
    }

    pub fn conf_history(&self) -> &[f64] {
        &self.conf_history
    }

    /// Adds `(local, victim)` pairs to the running statistics.
    pub fn ingest(&mut self, locals: &[Embedding], victims: &[Embedding]) -> Result<()> {
        if locals.len() != victims.len() {
            return Err(Error::DimensionMismatch { expected: locals.len(), got: victims.len() });
        }
        if locals.is_empty() {
            return Err(Error::Empty("alignment batch"));
        }
        let e = stack(locals, self.d_local())?;
        let v = stack(victims, self.d_victim())?;
        let et = e.transpose();
        self.gram += &et * &e;
        self.cross += &et * &v;
        self.n_pairs += locals.len();
        Ok(())
    }

    /// Refits `W` from everything ingested so far.
    pub fn solve(&mut self) -> Result<&DMatrix<f64>> {
        if self.n_pairs == 0 {
            return Err(Error::Empty("alignment pairs"));
        }
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.lambda;
        }
        let chol = a.cholesky().ok_or(Error::Singular(self.lambda))?;
        let w = chol.solve(&self.cross);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular(self.lambda));
        }
        Ok(self.w.insert(w))
    }

    /// Maps a local embedding into the victim space with the current `W`.
    pub fn project(&self, e: &Embedding) -> Result<Embedding> {
        Ok(self.project_batch(std::slice::from_ref(e))?.remove(0))
    }

    pub fn project_batch(&self, es: &[Embedding]) -> Result<Vec<Embedding>> {
        let w = self.w.as_ref().ok_or(Error::Unsolved)?;
        project_with(w, es)
    }

    /// One alignment round: scores the freshly queried pairs against the
    /// previous matrix, then ingests them and refits.
    ///
    /// When no previous matrix exists (first iteration) the confidence is
    /// the in-sample agreement of the new fit scaled by
    /// [`FIRST_STEP_CONF_FACTOR`]. Returns the confidence, which is also
    /// appended to the history.
    pub fn update(&mut self, locals: &[Embedding], victims: &[Embedding]) -> Result<f64> {
        let previous = self.w.clone();
        let mut staged = self.clone();
        staged.ingest(locals, victims)?;
        staged.solve()?;
        let conf = match &previous {
            Some(w_prev) => confidence(locals, victims, w_prev, 2)?,
            None => confidence(locals, victims, staged.w.as_ref().expect("solved"), 1)?,
        };
        *self = staged;
        self.conf_history.push(conf);
        Ok(conf)
    }

    /// Repeats the last confidence when a round had nothing new to verify.
    pub fn carry_forward(&mut self) {
        let last = self.conf_history.last().copied().unwrap_or(0.0);
        self.conf_history.push(last);
    }

    /// Value of the ridge objective `Σ‖eW − ẽ‖² + λ‖W‖²` up to the constant
    /// `Σ‖ẽ‖²`, which the statistics do not retain.
    pub fn objective_offset(&self, w: &DMatrix<f64>) -> f64 {
        // tr(WᵀGW) − 2 tr(WᵀC) + λ‖W‖²
        let gw = &self.gram * w;
        w.component_mul(&gw).sum() - 2.0 * w.component_mul(&self.cross).sum()
            + self.lambda * w.norm_squared()
    }
}

/// Mean cosine between `e·w` and the victim embedding over a queried batch;
/// scaled by [`FIRST_STEP_CONF_FACTOR`] when `iteration == 1`.
pub fn confidence(
    locals: &[Embedding],
    victims: &[Embedding],
    w: &DMatrix<f64>,
    iteration: usize,
) -> Result<f64> {
    if locals.is_empty() {
        return Err(Error::Empty("confidence batch"));
    }
    if locals.len() != victims.len() {
        return Err(Error::DimensionMismatch { expected: locals.len(), got: victims.len() });
    }
    let projected = project_with(w, locals)?;
    let mean = projected
        .iter()
        .zip(victims)
        .map(|(p, v)| cosine(p.values(), v.values()))
        .sum::<f64>()
        / locals.len() as f64;
    let conf = if iteration == 1 { FIRST_STEP_CONF_FACTOR * mean } else { mean };
    Ok(conf.clamp(-1.0, 1.0))
}

/// `es · w` for a batch of row vectors.
pub fn project_with(w: &DMatrix<f64>, es: &[Embedding]) -> Result<Vec<Embedding>> {
    if es.is_empty() {
        return Ok(Vec::new());
    }
    let e = stack(es, w.nrows())?;
    let out = e * w;
    (0..out.nrows())
        .map(|i| Embedding::new(out.row(i).iter().copied().collect()))
        .collect()
}

fn stack(es: &[Embedding], dim: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = es.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    Ok(DMatrix::from_row_iterator(
        es.len(),
        dim,
        es.iter().flat_map(|e| e.values().iter().copied()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn basis_ingest_touches_one_row() {
        let mut s = AlignState::new(3, 2, 0.1);
        s.ingest(&[Embedding::basis(3, 0)], &[emb(&[0.5, -2.0])]).unwrap();
        let mut g = DMatrix::zeros(3, 3);
        g[(0, 0)] = 1.0;
        assert_eq!(s.gram(), &g);
        assert_eq!(s.cross().row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, -2.0]);
        assert_eq!(s.cross().rows(1, 2).norm(), 0.0);
        assert_eq!(s.n_pairs(), 1);
    }

    #[test]
    fn ingests_are_additive() {
        let locals: Vec<_> = (0..6).map(|i| emb(&[i as f64, 1.0, -(i as f64) * 0.5])).collect();
        let victims: Vec<_> = (0..6).map(|i| emb(&[1.0 / (i + 1) as f64, 2.0])).collect();
        let mut split = AlignState::new(3, 2, 0.1);
        split.ingest(&locals[..2], &victims[..2]).unwrap();
        split.ingest(&locals[2..], &victims[2..]).unwrap();
        let mut whole = AlignState::new(3, 2, 0.1);
        whole.ingest(&locals, &victims).unwrap();
        assert!((split.gram() - whole.gram()).norm() < 1e-12);
        assert!((split.cross() - whole.cross()).norm() < 1e-12);
        assert_eq!(split.n_pairs(), whole.n_pairs());
    }

    #[test]
    fn ingest_rejects_mismatches() {
        let mut s = AlignState::new(2, 2, 0.1);
        assert!(s.ingest(&[emb(&[1.0, 0.0])], &[]).is_err());
        assert!(s.ingest(&[emb(&[1.0, 0.0, 0.0])], &[emb(&[1.0, 0.0])]).is_err());
        assert!(s.ingest(&[], &[]).is_err());
        assert_eq!(s.n_pairs(), 0);
    }

    #[test]
    fn identity_recovered_as_lambda_vanishes() {
        let mut s = AlignState::new(2, 2, 1e-10);
        s.ingest(&[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])], &[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])])
            .unwrap();
        let w = s.solve().unwrap();
        assert!((w - DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn hand_evaluated_diagonal_fit() {
        // (EᵀE + 0.1 I)⁻¹ EᵀẼ with E = diag(1, 2), Ẽ = diag(2, 2)
        let mut s = AlignState::new(2, 2, 0.1);
        s.ingest(&[emb(&[1.0, 0.0]), emb(&[0.0, 2.0])], &[emb(&[2.0, 0.0]), emb(&[0.0, 2.0])])
            .unwrap();
        let w = s.solve().unwrap().clone();
        assert!((w[(0, 0)] - 2.0 / 1.1).abs() < 1e-12);
        assert!((w[(1, 1)] - 4.0 / 4.1).abs() < 1e-12);
        assert!(w[(0, 1)].abs() < 1e-15 && w[(1, 0)].abs() < 1e-15);
        assert!((w[(0, 0)] - 1.8182).abs() < 1e-4 && (w[(1, 1)] - 0.9756).abs() < 1e-4);
    }

    #[test]
    fn zero_inputs_shrink_to_zero() {
        let mut s = AlignState::new(3, 2, 0.5);
        s.ingest(&[Embedding::zeros(3), Embedding::zeros(3)], &[emb(&[1.0, 2.0]), emb(&[3.0, 4.0])])
            .unwrap();
        assert_eq!(s.solve().unwrap().norm(), 0.0);
    }

    #[test]
    fn solve_requires_pairs_and_positive_lambda() {
        assert!(AlignState::new(2, 2, 0.1).solve().is_err());
        let mut s = AlignState::new(2, 1, 0.0);
        s.ingest(&[emb(&[1.0, 1.0])], &[emb(&[1.0])]).unwrap();
        assert!(matches!(s.solve(), Err(Error::Singular(_))));
    }

    #[test]
    fn projection() {
        let mut s = AlignState::new(2, 2, 0.1);
        let e = emb(&[0.3, -0.7]);
        assert!(matches!(s.project(&e), Err(Error::Unsolved)));
        s.w = Some(DMatrix::identity(2, 2));
        assert_eq!(s.project(&e).unwrap(), e);
        s.w = Some(DMatrix::zeros(2, 2));
        assert_eq!(s.project(&e).unwrap(), Embedding::zeros(2));
        assert!(s.project(&emb(&[1.0])).is_err());
    }

    #[test]
    fn confidence_extremes() {
        let w = DMatrix::identity(2, 2);
        let locals = [emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        assert!((confidence(&locals, &locals, &w, 2).unwrap() - 1.0).abs() < 1e-15);
        let orth = [emb(&[0.0, 1.0]), emb(&[1.0, 0.0])];
        assert_eq!(confidence(&locals, &orth, &w, 3).unwrap(), 0.0);
        assert!(confidence(&[], &[], &w, 2).is_err());
    }

    #[test]
    fn first_update_scales_in_sample_fit() {
        let mut s = AlignState::new(2, 2, 1e-12);
        let locals = [emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let conf = s.update(&locals, &locals).unwrap();
        assert!((conf - 0.7).abs() < 1e-9);
        // second round validates against the previous matrix
        let conf2 = s.update(&locals, &locals).unwrap();
        assert!((conf2 - 1.0).abs() < 1e-9);
        assert_eq!(s.conf_history().len(), 2);
    }

    #[test]
    fn failed_update_leaves_state_untouched() {
        let mut s = AlignState::new(2, 2, 0.1);
        s.update(&[emb(&[1.0, 0.0])], &[emb(&[1.0, 1.0])]).unwrap();
        let before = (s.gram().clone(), s.n_pairs(), s.conf_history().len());
        assert!(s.update(&[emb(&[1.0, 0.0, 0.0])], &[emb(&[1.0, 1.0])]).is_err());
        assert_eq!((s.gram().clone(), s.n_pairs(), s.conf_history().len()), before);
    }
}
