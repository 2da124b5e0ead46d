//! FastICA baseline for determined mixtures: centering, eigen-whitening and
//! the symmetric fixed-point iteration with a kurtosis or log-cosh contrast.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[channels × samples]` observations, at least two channels and more
/// samples than channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix(Array2<f64>);

impl ObservationMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (m, n) = data.dim();
        if m < 2 {
            return Err(Error::Shape(format!("need at least 2 channels, got {m}")));
        }
        if n <= m {
            return Err(Error::Shape(format!(
                "need more samples ({n}) than channels ({m})"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "observations contain non-finite values".into(),
            ));
        }
        Ok(Self(data))
    }

    /// Stacks equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("observation rows differ in length".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let data = Array2::from_shape_vec((rows.len(), n), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(data)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    /// `g(u) = u³`
    Kurtosis,
    /// log-cosh surrogate, `g(u) = tanh(u)`
    Negentropy,
}

impl Contrast {
    fn g(self, u: f64) -> (f64, f64) {
        match self {
            Contrast::Kurtosis => (u * u * u, 3.0 * u * u),
            Contrast::Negentropy => {
                let t = u.tanh();
                (t, 1.0 - t * t)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Contrast::Kurtosis => "kurtosis",
            Contrast::Negentropy => "negentropy",
        }
    }
}

/// Centered, whitened observations together with the transform that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitened {
    pub data: Array2<f64>,
    pub mean: Array1<f64>,
    /// `[m × m]`; `data = whitening · (X − mean)`
    pub whitening: Array2<f64>,
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_nalgebra(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Row covariance `X Xᵀ / n` of already-centered data.
pub fn covariance(centered: ArrayView2<f64>) -> Array2<f64> {
    centered.dot(&centered.t()) / centered.ncols() as f64
}

/// Eigenpairs sorted by descending eigenvalue.
fn sorted_eigh(matrix: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(to_nalgebra(matrix));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(matrix.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Zero mean per channel and identity covariance via `D^{-1/2} Eᵀ`.
pub fn center_whiten(x: &ObservationMatrix) -> Result<Whitened> {
    let data = x.data();
    let mean = data.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = data - &mean.view().insert_axis(Axis(1));
    let cov = covariance(centered.view());
    let (values, vectors) = sorted_eigh(&cov);
    let largest = values[0];
    let smallest = *values.last().unwrap();
    if !(largest > 0.0) || smallest <= 1e-10 * largest {
        return Err(Error::Degenerate(format!(
            "channel covariance is rank-deficient (eigenvalues {values:?})"
        )));
    }
    let m = x.channels();
    let whitening = Array2::from_shape_fn((m, m), |(i, j)| vectors[(j, i)] / values[i].sqrt());
    let z = whitening.dot(&centered);
    Ok(Whitened {
        data: z,
        mean,
        whitening,
    })
}

/// `(W Wᵀ)^{-1/2} W`
fn symmetric_decorrelation(w: &Array2<f64>) -> Array2<f64> {
    let (values, vectors) = sorted_eigh(&w.dot(&w.t()));
    let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let root = &vectors * inv_sqrt * vectors.transpose();
    from_nalgebra(&root).dot(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub mean: Array1<f64>,
    pub whitening: Array2<f64>,
    /// Orthonormal rotation applied to whitened data.
    pub unmixing: Array2<f64>,
    pub contrast: Contrast,
    pub iterations_used: usize,
    pub converged: bool,
}

impl IcaModel {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Symmetric fixed-point FastICA on whitened data.
///
/// Every sweep replaces each row by `E[z·g(wᵀz)] − E[g'(wᵀz)]·w` and then
/// decorrelates the rows jointly. Stops once every row satisfies
/// `1 − |⟨w_new, w_old⟩| < tol`; running out of iterations is reported
/// through `converged = false`.
pub fn fastica_fit(
    whitened: &Whitened,
    contrast: Contrast,
    options: &IcaOptions,
) -> Result<IcaModel> {
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::Parameter(format!("invalid ICA options {options:?}")));
    }
    let z = &whitened.data;
    let (m, n) = z.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let init = Array2::from_shape_simple_fn((m, m), || rng.sample::<f64, _>(StandardNormal));
    let mut w = symmetric_decorrelation(&init);

    let mut iterations_used = 0;
    let mut converged = false;
    for iteration in 1..=options.max_iter {
        let projections = w.dot(z);
        let mut g = Array2::zeros((m, n));
        let mut g_prime_mean = Array1::<f64>::zeros(m);
        for ((u, gv), gp) in projections
            .rows()
            .into_iter()
            .zip(g.rows_mut())
            .zip(g_prime_mean.iter_mut())
        {
            let mut acc = 0.0;
            for (&ui, out) in u.iter().zip(gv) {
                let (value, slope) = contrast.g(ui);
                *out = value;
                acc += slope;
            }
            *gp = acc / n as f64;
        }
        let mut updated = g.dot(&z.t()) / n as f64;
        for (mut row, (&gp, old)) in updated
            .rows_mut()
            .into_iter()
            .zip(g_prime_mean.iter().zip(w.rows()))
        {
            row.scaled_add(-gp, &old);
        }
        let updated = symmetric_decorrelation(&updated);

        let change = updated
            .rows()
            .into_iter()
            .zip(w.rows())
            .map(|(a, b)| 1.0 - a.dot(&b).abs())
            .fold(0.0, f64::max);
        w = updated;
        iterations_used = iteration;
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("FastICA iterate became non-finite".into()));
        }
        if change < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "FastICA ({}) did not converge in {} iterations",
            contrast.name(),
            options.max_iter
        );
    }
    Ok(IcaModel {
        mean: whitened.mean.clone(),
        whitening: whitened.whitening.clone(),
        unmixing: w,
        contrast,
        iterations_used,
        converged,
    })
}

/// `W · K · (X − mean)`
pub fn ica_separate(x: &ObservationMatrix, model: &IcaModel) -> Result<Array2<f64>> {
    if x.channels() != model.channels() {
        return Err(Error::Shape(format!(
            "model expects {} channels, observations have {}",
            model.channels(),
            x.channels()
        )));
    }
    let centered = x.data() - &model.mean.view().insert_axis(Axis(1));
    Ok(model.unmixing.dot(&model.whitening).dot(&centered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn identity_error(c: &Array2<f64>) -> f64 {
        c.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    fn uniform_sources(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-3f64.sqrt(), 3f64.sqrt());
        Array2::from_shape_simple_fn((2, n), || dist.sample(&mut rng))
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let s = uniform_sources(10_000, 1);
        let mixing = ndarray::arr2(&[[1.0, 0.5], [0.3, 2.0]]);
        let x = ObservationMatrix::new(mixing.dot(&s) + 4.0).unwrap();
        let w = center_whiten(&x).unwrap();
        assert!(identity_error(&covariance(w.data.view())) < 1e-10);
        for row in w.data.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn white_input_only_rotates() {
        let s = uniform_sources(5_000, 2);
        let centered = &s - &s.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
        // exact whitening first, then whitening again must be orthogonal
        let once = center_whiten(&ObservationMatrix::new(centered).unwrap()).unwrap();
        let twice = center_whiten(&ObservationMatrix::new(once.data.clone()).unwrap()).unwrap();
        let k = &twice.whitening;
        assert!(identity_error(&k.dot(&k.t())) < 1e-10);
        assert!(identity_error(&covariance(twice.data.view())) < 1e-10);
    }

    #[test]
    fn duplicated_rows_are_degenerate() {
        let s = uniform_sources(1_000, 3);
        let row = s.row(0).to_vec();
        let x = ObservationMatrix::from_rows(&[&row, &row]).unwrap();
        assert!(matches!(center_whiten(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn observation_shape_checks() {
        assert!(ObservationMatrix::new(Array2::zeros((1, 100))).is_err());
        assert!(ObservationMatrix::new(Array2::zeros((3, 3))).is_err());
        assert!(ObservationMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[1.0, 2.0]]).is_err());
    }

    #[test]
    fn rotation_is_orthonormal_and_deterministic() {
        let s = uniform_sources(4_000, 4);
        let x = ObservationMatrix::new(ndarray::arr2(&[[1.0, 1.0], [0.6, 1.4]]).dot(&s)).unwrap();
        let white = center_whiten(&x).unwrap();
        for contrast in [Contrast::Kurtosis, Contrast::Negentropy] {
            let options = IcaOptions {
                seed: 5,
                ..IcaOptions::default()
            };
            let a = fastica_fit(&white, contrast, &options).unwrap();
            let b = fastica_fit(&white, contrast, &options).unwrap();
            assert_eq!(a, b);
            assert!(a.converged);
            assert!(identity_error(&a.unmixing.dot(&a.unmixing.t())) < 1e-8);
            let out = ica_separate(&x, &a).unwrap();
            let centered = &out - &out.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
            assert!(identity_error(&covariance(centered.view())) < 1e-6);
        }
    }

    #[test]
    fn iteration_budget_reported() {
        let s = uniform_sources(2_000, 6);
        let x = ObservationMatrix::new(ndarray::arr2(&[[1.0, 0.9], [0.8, 1.0]]).dot(&s)).unwrap();
        let white = center_whiten(&x).unwrap();
        let options = IcaOptions {
            tol: 1e-300,
            max_iter: 3,
            seed: 1,
        };
        let model = fastica_fit(&white, Contrast::Kurtosis, &options).unwrap();
        assert!(!model.converged);
        assert_eq!(model.iterations_used, 3);
    }

    #[test]
    fn channel_mismatch() {
        let s = uniform_sources(1_000, 7);
        let x = ObservationMatrix::new(s).unwrap();
        let model = fastica_fit(
            &center_whiten(&x).unwrap(),
            Contrast::Kurtosis,
            &IcaOptions::default(),
        )
        .unwrap();
        let three = ObservationMatrix::new(Array2::from_shape_fn((3, 100), |(i, j)| {
            ((i + 1) * j) as f64
        }))
        .unwrap();
        assert!(matches!(ica_separate(&three, &model), Err(Error::Shape(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn unmixing_stays_orthonormal(
            seed in 0u64..1_000,
            a in 0.2f64..2.0,
            b in -1.0f64..1.0,
            c in -1.0f64..1.0,
            d in 0.2f64..2.0,
        ) {
            proptest::prop_assume!((a * d - b * c).abs() > 0.1);
            let s = uniform_sources(2_000, seed);
            let x = ObservationMatrix::new(ndarray::arr2(&[[a, b], [c, d]]).dot(&s)).unwrap();
            let white = center_whiten(&x).unwrap();
            proptest::prop_assert!(identity_error(&covariance(white.data.view())) < 1e-9);
            for contrast in [Contrast::Kurtosis, Contrast::Negentropy] {
                let options = IcaOptions { seed, ..IcaOptions::default() };
                let model = fastica_fit(&white, contrast, &options).unwrap();
                proptest::prop_assert!(identity_error(&model.unmixing.dot(&model.unmixing.t())) < 1e-8);
            }
        }
    }
}
