//! Sample statistics and two-sample t-tests.

use num_traits::Float;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and sample standard deviation (`n - 1` denominator). An empty
/// slice gives `(NaN, NaN)`; one value gives a standard deviation of 0.
pub fn mean_sd<F: Float>(xs: &[F]) -> (F, F) {
    if xs.is_empty() {
        return (F::nan(), F::nan());
    }
    let n = F::from(xs.len()).unwrap();
    let mean = xs.iter().fold(F::zero(), |a, &x| a + x) / n;
    if xs.len() == 1 {
        return (mean, F::zero());
    }
    let ss = xs.iter().fold(F::zero(), |a, &x| a + (x - mean) * (x - mean));
    (mean, (ss / (n - F::one())).sqrt())
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() || !df.is_finite() || df <= 0.0 {
        return if t.is_infinite() { 0.0 } else { f64::NAN };
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * dist.cdf(-t.abs())
}

/// Result of a two-sample t-test of `a` against `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest<F> {
    pub mean_a: F,
    pub mean_b: F,
    /// `mean_a - mean_b`.
    pub difference: F,
    pub t: F,
    pub df: F,
    /// Two-sided.
    pub p: F,
}

impl<F: Float> WelchTest<F> {
    /// Unequal-variance test. Needs at least two values per sample.
    pub fn new(a: &[F], b: &[F]) -> Option<Self> {
        if a.len() < 2 || b.len() < 2 {
            return None;
        }
        let (ma, sa) = mean_sd(a);
        let (mb, sb) = mean_sd(b);
        let na = F::from(a.len()).unwrap();
        let nb = F::from(b.len()).unwrap();
        let va = sa * sa / na;
        let vb = sb * sb / nb;
        let se = (va + vb).sqrt();
        let diff = ma - mb;
        let (t, df) = if se == F::zero() {
            let t = if diff == F::zero() { F::nan() } else { diff.signum() * F::infinity() };
            (t, na + nb - F::from(2).unwrap())
        } else {
            let df = (va + vb) * (va + vb)
                / (va * va / (na - F::one()) + vb * vb / (nb - F::one()));
            (diff / se, df)
        };
        let p = F::from(two_sided_p(t.to_f64().unwrap(), df.to_f64().unwrap())).unwrap();
        Some(Self { mean_a: ma, mean_b: mb, difference: diff, t, df, p })
    }

    /// Paired test on `a[i] - b[i]`, for samples sharing random numbers.
    pub fn paired(a: &[F], b: &[F]) -> Option<Self> {
        if a.len() != b.len() || a.len() < 2 {
            return None;
        }
        let d: Vec<F> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        let (md, sd) = mean_sd(&d);
        let n = F::from(d.len()).unwrap();
        let se = sd / n.sqrt();
        let df = n - F::one();
        let t = if se == F::zero() {
            if md == F::zero() { F::nan() } else { md.signum() * F::infinity() }
        } else {
            md / se
        };
        let p = F::from(two_sided_p(t.to_f64().unwrap(), df.to_f64().unwrap())).unwrap();
        let (ma, _) = mean_sd(a);
        let (mb, _) = mean_sd(b);
        Some(Self { mean_a: ma, mean_b: mb, difference: md, t, df, p })
    }

    /// `**` below 0.01, `*` below 0.05.
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p.to_f64().unwrap_or(f64::NAN))
    }

    /// Relative difference `(mean_a - mean_b) / mean_b`.
    pub fn relative_difference(&self) -> F {
        self.difference / self.mean_b
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Two-sided confidence interval half-width for the mean.
pub fn ci_half_width<F: Float>(xs: &[F], level: f64) -> F {
    if xs.len() < 2 {
        return F::nan();
    }
    let (_, sd) = mean_sd(xs);
    let n = xs.len() as f64;
    let q = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    sd * F::from(q / n.sqrt()).unwrap()
}
