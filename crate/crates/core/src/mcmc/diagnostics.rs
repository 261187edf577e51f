//! Convergence diagnostics and sample statistics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

fn check_chains(m: usize, lens: impl Iterator<Item = usize>) -> Result<usize> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("need at least two chains, got {m}")));
    }
    let lens: Vec<usize> = lens.collect();
    let n = lens[0];
    if lens.iter().any(|&l| l != n) {
        return Err(Error::InvalidParameter("chains have different lengths".into()));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("chains need at least two samples".into()));
    }
    Ok(n)
}

/// Gelman-Rubin potential scale reduction factor,
/// `sqrt(((n-1)/n W + (1 + 1/m) B/n) / W)`.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    let n = check_chains(m, chains.iter().map(Vec::len))?;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(Error::Singular("within-chain variance is zero".into()));
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m as f64 - 1.0);
    let v = (nf - 1.0) / nf * w + (1.0 + 1.0 / m as f64) * b_over_n;
    Ok((v / w).sqrt())
}

/// Brooks-Gelman multivariate PSRF,
/// `(n-1)/n + (m+1)/m · λ_max(W⁻¹ B/n)`, for chains of `J`-vectors.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> Result<f64> {
    let m = chains.len();
    let n = check_chains(m, chains.iter().map(Vec::len))?;
    let j = chains[0][0].len();
    if j == 0 || chains.iter().flatten().any(|x| x.len() != j) {
        return Err(Error::InvalidParameter("inconsistent coefficient dimension".into()));
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(m);
    let mut w = DMatrix::<f64>::zeros(j, j);
    for c in chains {
        let mut mu = DVector::<f64>::zeros(j);
        for x in c {
            mu += DVector::from_column_slice(x);
        }
        mu /= nf;
        for x in c {
            let d = DVector::from_column_slice(x) - &mu;
            w.ger(1.0, &d, &d, 1.0);
        }
        means.push(mu);
    }
    w /= m as f64 * (nf - 1.0);
    let grand = means.iter().fold(DVector::zeros(j), |a, b| a + b) / m as f64;
    let mut b_over_n = DMatrix::<f64>::zeros(j, j);
    for mu in &means {
        let d = mu - &grand;
        b_over_n.ger(1.0, &d, &d, 1.0);
    }
    b_over_n /= m as f64 - 1.0;
    let chol = w
        .cholesky()
        .ok_or_else(|| Error::Singular("within-chain covariance is singular".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("within-chain covariance is singular".into()))?;
    let s = &linv * b_over_n * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let lmax = SymmetricEigen::new(s).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((nf - 1.0) / nf + (m as f64 + 1.0) / m as f64 * lmax)
}

/// Pointwise sample mean and unbiased variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: usize,
}

pub fn posterior_moments<S: AsRef<[f64]>>(samples: &[S]) -> Result<PosteriorMoments> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least two samples, got {n}")));
    }
    let d = samples[0].as_ref().len();
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    // Welford updates keep the variance accurate for long chains.
    for (k, s) in samples.iter().enumerate() {
        let s = s.as_ref();
        if s.len() != d {
            return Err(Error::LengthMismatch { expected: d, found: s.len() });
        }
        let kf = (k + 1) as f64;
        for i in 0..d {
            let delta = s[i] - mean[i];
            mean[i] += delta / kf;
            m2[i] += delta * (s[i] - mean[i]);
        }
    }
    let variance = m2.into_iter().map(|v| (v / (n as f64 - 1.0)).max(0.0)).collect();
    Ok(PosteriorMoments { mean, variance, count: n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_normals;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psrf_hand_example() {
        // means 2, 3; W = 1; B/n = 0.5; V = 2/3 + 1.5 * 0.5
        let r = psrf(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        let expect = ((2.0 / 3.0 + 0.75) / 1.0f64).sqrt();
        assert!((r - expect).abs() < 1e-14);
    }

    #[test]
    fn identical_chains() {
        let c = vec![0.3, -1.0, 2.0, 0.5];
        let r = psrf(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert!((r - (3.0f64 / 4.0).sqrt()).abs() < 1e-14);
        let v: Vec<Vec<f64>> = c.iter().map(|&x| vec![x, x * x]).collect();
        let r = mpsrf(&[v.clone(), v]).unwrap();
        assert!((r - 0.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(psrf(&[vec![1.0, 2.0]]).is_err());
        assert!(psrf(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(psrf(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        let c = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        assert!(mpsrf(&[c.clone(), c]).is_err());
    }

    #[test]
    fn mpsrf_with_one_coefficient_is_psrf_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|k| standard_normals(&mut rng, 200).into_iter().map(|x| x + 0.1 * k as f64).collect())
            .collect();
        let r = psrf(&chains).unwrap();
        let wrapped: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| c.iter().map(|&x| vec![x]).collect()).collect();
        let mr = mpsrf(&wrapped).unwrap();
        assert!((mr - r * r).abs() < 1e-12);
    }

    #[test]
    fn iid_chains_are_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chains: Vec<Vec<f64>> = (0..8).map(|_| standard_normals(&mut rng, 10_000)).collect();
        let r = psrf(&chains).unwrap();
        assert!(r > 0.99 && r < 1.02, "{r}");
        let multi: Vec<Vec<Vec<f64>>> = (0..8)
            .map(|_| (0..2000).map(|_| standard_normals(&mut rng, 4)).collect())
            .collect();
        let mr = mpsrf(&multi).unwrap();
        assert!((mr - 1.0).abs() < 0.05, "{mr}");
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let f = vec![1.0, -2.0, 0.5];
        let g: Vec<f64> = f.iter().map(|x| -x).collect();
        let m = posterior_moments(&[f.clone(), g]).unwrap();
        for (i, x) in f.iter().enumerate() {
            assert!(m.mean[i].abs() < 1e-15);
            assert!((m.variance[i] - 2.0 * x * x).abs() < 1e-14);
        }
        let m = posterior_moments(&[f.clone(), f.clone(), f]).unwrap();
        assert!(m.variance.iter().all(|&v| v == 0.0));
        assert!(posterior_moments(&[vec![1.0]]).is_err());
    }

    #[test]
    fn ks_tests_behave() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = standard_normals(&mut rng, 2000);
        let b = standard_normals(&mut rng, 2000);
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        let shifted: Vec<f64> = b.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &shifted).p_value < 1e-6);
        let uni: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&uni, |x| x.clamp(0.0, 1.0));
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }
}
