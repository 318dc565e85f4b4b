//! Retrieval losses over feature and logit matrices, with analytic gradients.
//!
//! Softmax cross-entropies use the stabilized form
//! `−log p_y = (m − x_y) + ln(1 + Σ_{j≠k} exp(x_j − m))` where `k` is the row
//! argmax and `m` its value, which stays accurate as the loss approaches zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

pub const DEFAULT_MARGIN: f64 = 0.3;
pub const DEFAULT_LOGIT_SCALE: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("batch is empty")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} has no positive sample besides the anchor")]
    NoPositive { label: i64 },
    #[error("label {label} has no negative sample in the batch")]
    NoNegative { label: i64 },
    #[error("label {label} at row {row} outside 0..{classes}")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("difficulty factor {0} outside [0, 1)")]
    InvalidGamma(f64),
    #[error("zero-norm row {row} in {which}")]
    ZeroRow { which: &'static str, row: usize },
}

/// `D_ij = √max(0, ‖x_i‖² + ‖x_j‖² − 2 x_iᵀx_j)`, symmetric with a zero diagonal.
pub fn pairwise_distances<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let n = x.rows();
    let sq: Vec<T> = (0..n).map(|i| dot(x.row(i), x.row(i))).collect();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let g = dot(x.row(i), x.row(j));
            let v = (sq[i] + sq[j] - T::lit(2.0) * g).max(T::zero()).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// `x_i / (‖x_i‖ + eps)` per row.
pub fn normalize_rows<T: Scalar>(x: &Matrix<T>, eps: T) -> Matrix<T> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let norm = dot(x.row(r), x.row(r)).sqrt();
        let denom = norm + eps;
        if denom > T::zero() {
            out.row_mut(r).iter_mut().for_each(|v| *v = *v / denom);
        }
    }
    out
}

/// Features with integer identity labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureBatch<T> {
    pub features: Matrix<T>,
    pub labels: Vec<i64>,
}

impl<T: Scalar> FeatureBatch<T> {
    pub fn new(features: Matrix<T>, labels: Vec<i64>) -> Result<Self, LossError> {
        let b = Self { features, labels };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.features.rows() == 0 {
            return Err(LossError::Empty);
        }
        if self.labels.len() != self.features.rows() {
            return Err(LossError::DimensionMismatch(format!(
                "{} labels for {} rows",
                self.labels.len(),
                self.features.rows()
            )));
        }
        if !self.features.is_finite() {
            return Err(LossError::NonFinite("features"));
        }
        Ok(())
    }
}

/// Image and text class logits with class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitBatch<T> {
    pub image_logits: Matrix<T>,
    pub text_logits: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LogitBatch<T> {
    pub fn validate(&self) -> Result<(), LossError> {
        let (n, c) = (self.image_logits.rows(), self.image_logits.cols());
        if n == 0 {
            return Err(LossError::Empty);
        }
        if c == 0 {
            return Err(LossError::DimensionMismatch("zero classes".into()));
        }
        if (self.text_logits.rows(), self.text_logits.cols()) != (n, c) || self.labels.len() != n {
            return Err(LossError::DimensionMismatch(format!(
                "image logits {n}x{c}, text logits {}x{}, {} labels",
                self.text_logits.rows(),
                self.text_logits.cols(),
                self.labels.len()
            )));
        }
        if !(self.image_logits.is_finite() && self.text_logits.is_finite()) {
            return Err(LossError::NonFinite("logits"));
        }
        if let Some((row, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(LossError::LabelOutOfRange { row, label, classes: c });
        }
        Ok(())
    }
}

/// Per-anchor detail of the hard-mined triplet loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTerm<T> {
    pub positive: usize,
    pub negative: usize,
    pub dist_ap: T,
    pub dist_an: T,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutcome<T> {
    pub loss: T,
    pub terms: Vec<TripletTerm<T>>,
}

/// Hardest positive (largest same-label distance) and hardest negative
/// (smallest other-label distance) per anchor, scaled by `1 ± gamma`, hinged at
/// margin `m` and averaged over anchors. Ties go to the lowest index.
pub fn triplet_hard_loss<T: Scalar>(batch: &FeatureBatch<T>, gamma: T, margin: T) -> Result<TripletOutcome<T>, LossError> {
    batch.validate()?;
    if !(gamma >= T::zero() && gamma < T::one()) {
        return Err(LossError::InvalidGamma(gamma.as_f64()));
    }
    let d = pairwise_distances(&batch.features);
    let n = batch.labels.len();
    let y = &batch.labels;
    let mut terms = Vec::with_capacity(n);
    for a in 0..n {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            if y[j] == y[a] {
                if pos.is_none_or(|p| d[(a, j)] > d[(a, p)]) {
                    pos = Some(j);
                }
            } else if neg.is_none_or(|k| d[(a, j)] < d[(a, k)]) {
                neg = Some(j);
            }
        }
        let p = pos.ok_or(LossError::NoPositive { label: y[a] })?;
        let k = neg.ok_or(LossError::NoNegative { label: y[a] })?;
        let (dap, dan) = (d[(a, p)], d[(a, k)]);
        let value = ((T::one() + gamma) * dap - (T::one() - gamma) * dan + margin).max(T::zero());
        terms.push(TripletTerm {
            positive: p,
            negative: k,
            dist_ap: dap,
            dist_an: dan,
            value,
        });
    }
    let loss = terms.iter().map(|t| t.value).sum::<T>() / T::lit(n as f64);
    Ok(TripletOutcome { loss, terms })
}

/// Gradient of [`triplet_hard_loss`] with respect to the features, holding the
/// mined pairs fixed.
pub fn triplet_hard_grad<T: Scalar>(batch: &FeatureBatch<T>, gamma: T, margin: T) -> Result<Matrix<T>, LossError> {
    let out = triplet_hard_loss(batch, gamma, margin)?;
    let x = &batch.features;
    let n = x.rows();
    let scale = T::one() / T::lit(n as f64);
    let mut g = Matrix::zeros(n, x.cols());
    let mut add = |i: usize, j: usize, dist: T, w: T| {
        if dist <= T::zero() {
            return;
        }
        for c in 0..x.cols() {
            let u = (x[(i, c)] - x[(j, c)]) / dist * w;
            g[(i, c)] = g[(i, c)] + u;
            g[(j, c)] = g[(j, c)] - u;
        }
    };
    for (a, t) in out.terms.iter().enumerate() {
        if t.value > T::zero() {
            add(a, t.positive, t.dist_ap, (T::one() + gamma) * scale);
            add(a, t.negative, t.dist_an, -(T::one() - gamma) * scale);
        }
    }
    Ok(g)
}

/// `−log softmax(row)[target]`.
fn row_cross_entropy<T: Scalar>(row: &[T], target: usize) -> T {
    let (k, m) = row
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let rest: T = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    (m - row[target]) + rest.ln_1p()
}

fn row_softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn unit_rows<T: Scalar>(x: &Matrix<T>, which: &'static str) -> Result<(Matrix<T>, Vec<T>), LossError> {
    let mut u = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let norm = dot(x.row(r), x.row(r)).sqrt();
        if !(norm > T::zero()) {
            return Err(LossError::ZeroRow { which, row: r });
        }
        u.row_mut(r).iter_mut().for_each(|v| *v = *v / norm);
        norms.push(norm);
    }
    Ok((u, norms))
}

fn check_pair<T: Scalar>(img: &Matrix<T>, txt: &Matrix<T>) -> Result<(), LossError> {
    if img.rows() == 0 {
        return Err(LossError::Empty);
    }
    if img.rows() != txt.rows() || img.cols() != txt.cols() {
        return Err(LossError::DimensionMismatch(format!(
            "image {}x{}, text {}x{}",
            img.rows(),
            img.cols(),
            txt.rows(),
            txt.cols()
        )));
    }
    if !(img.is_finite() && txt.is_finite()) {
        return Err(LossError::NonFinite("features"));
    }
    Ok(())
}

/// Scaled cosine similarity `S(i, j) = s·cos(I_i, T_j)`.
pub fn similarity<T: Scalar>(img: &Matrix<T>, txt: &Matrix<T>, scale: T) -> Result<Matrix<T>, LossError> {
    check_pair(img, txt)?;
    let (u, _) = unit_rows(img, "image")?;
    let (v, _) = unit_rows(txt, "text")?;
    Ok(Matrix::from_fn(u.rows(), v.rows(), |i, j| scale * dot(u.row(i), v.row(j))))
}

/// Symmetric InfoNCE over image-to-text and text-to-image directions.
pub fn itc_loss<T: Scalar>(img: &Matrix<T>, txt: &Matrix<T>, scale: T) -> Result<T, LossError> {
    let s = similarity(img, txt, scale)?;
    let st = s.transpose();
    let n = s.rows();
    let total: T = (0..n)
        .map(|i| row_cross_entropy(s.row(i), i) + row_cross_entropy(st.row(i), i))
        .sum();
    Ok(total / T::lit(2.0 * n as f64))
}

/// Gradients of [`itc_loss`] with respect to the image and text features.
pub fn itc_grad<T: Scalar>(img: &Matrix<T>, txt: &Matrix<T>, scale: T) -> Result<(Matrix<T>, Matrix<T>), LossError> {
    check_pair(img, txt)?;
    let (u, un) = unit_rows(img, "image")?;
    let (v, vn) = unit_rows(txt, "text")?;
    let n = u.rows();
    let s = Matrix::from_fn(n, n, |i, j| scale * dot(u.row(i), v.row(j)));
    let inv = T::one() / T::lit(2.0 * n as f64);
    // dL/dS from both softmax directions
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let p = row_softmax(s.row(i));
        for j in 0..n {
            g[(i, j)] = g[(i, j)] + p[j] * inv;
        }
        g[(i, i)] = g[(i, i)] - inv;
    }
    let st = s.transpose();
    for j in 0..n {
        let p = row_softmax(st.row(j));
        for i in 0..n {
            g[(i, j)] = g[(i, j)] + p[i] * inv;
        }
        g[(j, j)] = g[(j, j)] - inv;
    }
    let gu = g.matmul(&v).map(|x| x * scale);
    let gv = g.transpose().matmul(&u).map(|x| x * scale);
    Ok((through_norm(&u, &un, &gu), through_norm(&v, &vn, &gv)))
}

/// Chains a gradient on unit rows back through `x / ‖x‖`.
fn through_norm<T: Scalar>(u: &Matrix<T>, norms: &[T], gu: &Matrix<T>) -> Matrix<T> {
    Matrix::from_fn(u.rows(), u.cols(), |r, c| {
        let proj = dot(u.row(r), gu.row(r));
        (gu[(r, c)] - u[(r, c)] * proj) / norms[r]
    })
}

/// Mean of the image and text classification cross-entropies.
pub fn id_loss<T: Scalar>(batch: &LogitBatch<T>) -> Result<T, LossError> {
    batch.validate()?;
    let n = batch.labels.len();
    let total: T = batch
        .labels
        .iter()
        .enumerate()
        .map(|(i, &y)| row_cross_entropy(batch.image_logits.row(i), y) + row_cross_entropy(batch.text_logits.row(i), y))
        .sum();
    Ok(total / T::lit(2.0 * n as f64))
}

/// Gradients of [`id_loss`] with respect to the image and text logits.
pub fn id_grad<T: Scalar>(batch: &LogitBatch<T>) -> Result<(Matrix<T>, Matrix<T>), LossError> {
    batch.validate()?;
    let n = batch.labels.len();
    let inv = T::one() / T::lit(2.0 * n as f64);
    let grad = |z: &Matrix<T>| {
        let mut g = Matrix::zeros(z.rows(), z.cols());
        for (i, &y) in batch.labels.iter().enumerate() {
            for (c, p) in row_softmax(z.row(i)).into_iter().enumerate() {
                g[(i, c)] = p * inv;
            }
            g[(i, y)] = g[(i, y)] - inv;
        }
        g
    };
    Ok((grad(&batch.image_logits), grad(&batch.text_logits)))
}

/// `L_ITC + L_ID`.
pub fn total_retrieval_loss<T: Scalar>(img: &Matrix<T>, txt: &Matrix<T>, scale: T, logits: &LogitBatch<T>) -> Result<T, LossError> {
    Ok(itc_loss(img, txt, scale)? + id_loss(logits)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn distances_basic() {
        let d = pairwise_distances(&m(&[&[0.0, 0.0], &[3.0, 4.0]]));
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
        assert_eq!(d[(0, 0)], 0.0);
        let same = pairwise_distances(&m(&[&[1.5, -2.0], &[1.5, -2.0]]));
        assert!(same.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_examples() {
        let x = normalize_rows(&m(&[&[3.0, 4.0], &[0.0, 0.0]]), 0.0);
        assert_eq!(x.row(0), &[0.6, 0.8]);
        assert_eq!(x.row(1), &[0.0, 0.0]);
        let eps = normalize_rows(&m(&[&[0.0, 0.0]]), 1e-12);
        assert_eq!(eps.row(0), &[0.0, 0.0]);
    }

    fn toy(margin: f64) -> f64 {
        let b = FeatureBatch::new(m(&[&[0.0], &[1.0], &[3.0], &[4.0]]), vec![0, 0, 1, 1]).unwrap();
        triplet_hard_loss(&b, 0.0, margin).unwrap().loss
    }

    #[test]
    fn triplet_toy_values() {
        assert!((toy(1.5) - 0.25).abs() < 1e-15);
        assert_eq!(toy(0.3), 0.0);
    }

    #[test]
    fn triplet_reports_missing_pairs() {
        let lonely = FeatureBatch::new(m(&[&[0.0], &[1.0], &[3.0]]), vec![0, 0, 1]).unwrap();
        assert_eq!(
            triplet_hard_loss(&lonely, 0.0, 0.3).unwrap_err(),
            LossError::NoPositive { label: 1 }
        );
        let single = FeatureBatch::new(m(&[&[0.0], &[1.0]]), vec![4, 4]).unwrap();
        assert_eq!(
            triplet_hard_loss(&single, 0.0, 0.3).unwrap_err(),
            LossError::NoNegative { label: 4 }
        );
    }

    #[test]
    fn itc_closed_forms() {
        let one = m(&[&[0.3, -0.7]]);
        assert_eq!(itc_loss(&one, &one, 50.0).unwrap(), 0.0);
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let got = itc_loss(&e, &e, 50.0).unwrap();
        let expect = (-50.0f64).exp().ln_1p();
        assert!((got - expect).abs() < 1e-12);
        assert!(got > 0.0);
    }

    #[test]
    fn id_uniform_is_log_c() {
        let b = LogitBatch {
            image_logits: Matrix::from_fn(3, 5, |_, _| 0.7),
            text_logits: Matrix::from_fn(3, 5, |_, _| -2.0),
            labels: vec![0, 4, 2],
        };
        assert!((id_loss(&b).unwrap() - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn id_saturates() {
        let b = LogitBatch {
            image_logits: m(&[&[50.0, 0.0, 0.0]]),
            text_logits: m(&[&[50.0, 0.0, 0.0]]),
            labels: vec![0],
        };
        let l = id_loss(&b).unwrap();
        assert!(l > 0.0 && l < 1e-20);
    }

    #[test]
    fn id_rejects_bad_label() {
        let b = LogitBatch {
            image_logits: m(&[&[0.0, 0.0]]),
            text_logits: m(&[&[0.0, 0.0]]),
            labels: vec![2],
        };
        assert!(matches!(id_loss(&b), Err(LossError::LabelOutOfRange { row: 0, label: 2, classes: 2 })));
    }

    #[test]
    fn itc_dimension_mismatch() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(itc_loss(&a, &b, 50.0), Err(LossError::DimensionMismatch(_))));
    }

    #[test]
    fn generic_over_f32() {
        let x = Matrix::<f32>::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_distances(&x)[(0, 1)], 5.0f32);
    }
}
