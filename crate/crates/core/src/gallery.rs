//! Named fixtures with recorded expected outcomes, used as regression anchors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, DEFAULT_PSD_EPS};
use crate::moment::{hamburger_check, local_moment_check, OperatorSequence, SampleScheme};
use crate::pair::{kimsey_pair, kimsey_section};
use crate::recursive::{check_order2_closed_form, default_r_max, solve_recursive};
use crate::shift::{flatness_identity_check, shift_moments, subnormality_check, WeightFamily};

/// Seed of the random samples recorded with the Bisgaard fixture.
pub const BISGAARD_SEED: u64 = 1;
pub const BISGAARD_SAMPLES: usize = 1000;

/// `T_0 .. T_6` of the Bisgaard sequence: block Hankel positivity fails at
/// order 1 although every localized sequence is a moment sequence.
pub fn bisgaard_sequence() -> OperatorSequence {
    let z = HermitianMatrix::zeros(2);
    OperatorSequence::new(vec![
        HermitianMatrix::diagonal(&[4.0, 1.0]),
        HermitianMatrix::from_real_rows(&[&[0.0, 2.0], &[2.0, 0.0]]).unwrap(),
        HermitianMatrix::diagonal(&[1.0, 4.0]),
        z.clone(),
        HermitianMatrix::scaled_identity(2, 2f64.powi(24)),
        z,
        HermitianMatrix::scaled_identity(2, 2f64.powi(120)),
    ])
    .expect("fixture terms are square and of equal size")
}

pub fn bisgaard_scheme() -> SampleScheme {
    SampleScheme::CanonicalPolarized {
        extra_random: BISGAARD_SAMPLES,
        seed: BISGAARD_SEED,
    }
}

/// `T_k = diag((-n)^k e^{-n})`, `n = 1..d`, for `k = 0..=count`.
pub fn kimsey_moments(d: usize, count: usize) -> OperatorSequence {
    OperatorSequence::new(
        (0..=count)
            .map(|k| {
                let diag: Vec<f64> = (1..=d)
                    .map(|n| (-(n as f64)).powi(k as i32) * (-(n as f64)).exp())
                    .collect();
                HermitianMatrix::diagonal(&diag)
            })
            .collect(),
    )
    .expect("diagonal terms")
}

/// `T_n = W* B^n W` with `B = [[a I, b I], [b I, c I]]` and `W x = (x, x)`,
/// which is `(1, 1) B^n (1, 1)^t` times the identity.
pub fn block_shift_sequence(a: f64, b: f64, c: f64, dim: usize, count: usize) -> Result<OperatorSequence> {
    if (a - c).powi(2) + b * b == 0.0 {
        return Err(Error::DegenerateBlock);
    }
    let mut v = [1.0f64, 1.0];
    let mut terms = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        terms.push(HermitianMatrix::scaled_identity(dim, v[0] + v[1]));
        v = [a * v[0] + b * v[1], b * v[0] + c * v[1]];
    }
    OperatorSequence::new(terms)
}

/// Roots of `X^2 - (a + c) X + (ac - b^2)`, ascending.
pub fn block_shift_roots(a: f64, b: f64, c: f64) -> [f64; 2] {
    let mid = 0.5 * (a + c);
    let half = 0.5 * ((a - c).powi(2) + 4.0 * b * b).sqrt();
    [mid - half, mid + half]
}

/// Scalar Bergman shift `alpha_n = sqrt((n + 1)/(n + 2))`, norm bound 1.
pub fn bergman_shift(count: usize) -> WeightFamily {
    let a: Vec<f64> = (0..count)
        .map(|n| ((n as f64 + 1.0) / (n as f64 + 2.0)).sqrt())
        .collect();
    WeightFamily::scalar(&a)
        .and_then(|w| w.with_norm_bound(1.0))
        .expect("positive weights")
}

/// `A = [[2, 1], [1, 2]]` repeated.
pub fn flat_shift(count: usize) -> WeightFamily {
    let a = HermitianMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
    WeightFamily::flat(&a, count).expect("positive definite weight")
}

/// Scalar weights `2, 1, 1, 1, ...`.
pub fn decreasing_shift(count: usize) -> WeightFamily {
    let mut a = vec![1.0; count.max(1)];
    a[0] = 2.0;
    WeightFamily::scalar(&a).expect("positive weights")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Sequence(OperatorSequence),
    Pair(HermitianMatrix, HermitianMatrix),
    Weights(WeightFamily),
}

/// One recorded outcome: the check name, whether it passes and, for some
/// checks, a reference value with an absolute tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expectation {
    pub check: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub value_tol: f64,
}

impl Expectation {
    fn pass(check: &str, passed: bool) -> Self {
        Self {
            check: check.into(),
            passed,
            value: None,
            value_tol: 0.0,
        }
    }

    fn valued(check: &str, passed: bool, value: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            passed,
            value: Some(value),
            value_tol: tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub expected: Expectation,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Bisgaard,
    Kimsey(usize),
    BlockShift { a: f64, b: f64, c: f64 },
    Bergman,
    Flat,
    Decreasing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub payload: Payload,
    pub expected: Vec<Expectation>,
    kind: Kind,
}

pub fn bisgaard() -> Fixture {
    Fixture {
        name: "bisgaard".into(),
        payload: Payload::Sequence(bisgaard_sequence()),
        expected: vec![
            Expectation::valued("hamburger_order1", false, -1.0, 1e-10),
            Expectation::pass("local_order1", true),
            Expectation::pass("local_order2", true),
        ],
        kind: Kind::Bisgaard,
    }
}

pub fn kimsey(d: usize) -> Result<Fixture> {
    if d == 0 {
        return Err(Error::InvalidArgument("section dimension must be at least 1".into()));
    }
    let (t0, t1) = kimsey_pair(d);
    Ok(Fixture {
        name: format!("kimsey_{d}"),
        payload: Payload::Pair(t0, t1),
        expected: vec![
            Expectation::valued("pencil_alpha", true, -(d as f64), 1e-12 * d as f64),
            Expectation::pass("two_atomic", true),
            Expectation::pass("cauchy_schwarz", true),
        ],
        kind: Kind::Kimsey(d),
    })
}

pub const BLOCK_SHIFT_TERMS: usize = 8;

pub fn block_shift_example(a: f64, b: f64, c: f64, dim: usize) -> Result<Fixture> {
    let seq = block_shift_sequence(a, b, c, dim, BLOCK_SHIFT_TERMS)?;
    Ok(Fixture {
        name: format!("block_shift_{a}_{b}_{c}"),
        payload: Payload::Sequence(seq),
        expected: vec![
            Expectation::pass("solve_recursive", true),
            Expectation::pass("support_in_roots", true),
            Expectation::pass("order2_closed_form", true),
            Expectation::valued("cauchy_schwarz_gap", true, (a - c).powi(2), 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()).powi(4)),
        ],
        kind: Kind::BlockShift { a, b, c },
    })
}

pub fn bergman() -> Fixture {
    Fixture {
        name: "bergman".into(),
        payload: Payload::Weights(bergman_shift(12)),
        expected: vec![Expectation::pass("subnormal_order5", true)],
        kind: Kind::Bergman,
    }
}

pub fn flat() -> Fixture {
    Fixture {
        name: "flat".into(),
        payload: Payload::Weights(flat_shift(10)),
        expected: vec![
            Expectation::pass("subnormal_order4", true),
            Expectation::pass("flatness_identity", true),
        ],
        kind: Kind::Flat,
    }
}

pub fn decreasing() -> Fixture {
    Fixture {
        name: "decreasing".into(),
        payload: Payload::Weights(decreasing_shift(8)),
        expected: vec![
            Expectation::pass("subnormal_order1", false),
            Expectation::pass("subnormal_order2", false),
        ],
        kind: Kind::Decreasing,
    }
}

/// Every fixture with default parameters.
pub fn all() -> Vec<Fixture> {
    vec![
        bisgaard(),
        kimsey(6).expect("valid dimension"),
        block_shift_example(1.0, 1.0, 1.0, 2).expect("non-degenerate"),
        block_shift_example(3.0, 1.0, 1.0, 2).expect("non-degenerate"),
        bergman(),
        flat(),
        decreasing(),
    ]
}

impl Fixture {
    /// Reruns the analyses and compares them with the recorded outcomes.
    pub fn reproduce(&self) -> Result<Vec<Outcome>> {
        let actual = self.evaluate()?;
        Ok(self
            .expected
            .iter()
            .map(|e| {
                let (passed, value) = actual
                    .iter()
                    .find(|(name, _, _)| *name == e.check)
                    .map(|(_, p, v)| (*p, *v))
                    .unwrap_or((!e.passed, None));
                let value_ok = match (e.value, value) {
                    (Some(want), Some(got)) => (want - got).abs() <= e.value_tol,
                    (Some(_), None) => false,
                    _ => true,
                };
                Outcome {
                    expected: e.clone(),
                    passed,
                    value,
                    matches: passed == e.passed && value_ok,
                }
            })
            .collect())
    }

    pub fn reproduces(&self) -> Result<bool> {
        Ok(self.reproduce()?.iter().all(|o| o.matches))
    }

    fn evaluate(&self) -> Result<Vec<(&'static str, bool, Option<f64>)>> {
        let eps = DEFAULT_PSD_EPS;
        let mut out = Vec::new();
        match (&self.kind, &self.payload) {
            (Kind::Bisgaard, Payload::Sequence(seq)) => {
                let h = hamburger_check(seq, 1, eps)?;
                out.push(("hamburger_order1", h.is_psd, Some(h.min_eigenvalue)));
                let scheme = bisgaard_scheme();
                out.push(("local_order1", local_moment_check(seq, &scheme, 1, eps)?.passed, None));
                out.push(("local_order2", local_moment_check(seq, &scheme, 2, eps)?.passed, None));
            }
            (Kind::Kimsey(d), Payload::Pair(_, _)) => {
                let s = kimsey_section(*d)?;
                out.push(("pencil_alpha", s.verdict.passed, Some(s.bounds.alpha)));
                out.push(("two_atomic", s.verdict.child("two_atomic").is_some_and(|v| v.passed), None));
                let seq = kimsey_moments(*d, 2);
                let samples = SampleScheme::CanonicalPolarized { extra_random: 200, seed: 7 }.vectors(*d)?;
                let ok = samples.iter().all(|x| {
                    let (a, b, c) = (
                        seq.term(0).quad_form(x),
                        seq.term(1).quad_form(x),
                        seq.term(2).quad_form(x),
                    );
                    b * b <= a * c * (1.0 + 1e-12)
                });
                out.push(("cauchy_schwarz", ok, None));
            }
            (Kind::BlockShift { a, b, c }, Payload::Sequence(seq)) => {
                let roots = block_shift_roots(*a, *b, *c);
                let scheme = SampleScheme::CanonicalPolarized { extra_random: 16, seed: 3 };
                let sol = solve_recursive(seq, default_r_max(seq), &scheme)?;
                out.push(("solve_recursive", sol.is_moment_sequence.passed, None));
                let tol = 1e-8 * (1.0 + roots[1].abs().max(roots[0].abs()));
                let inside = crate::ovm::support(&sol.charge)
                    .iter()
                    .all(|s| roots.iter().any(|r| (r - s).abs() <= tol));
                out.push(("support_in_roots", inside, None));
                let o2 = check_order2_closed_form(seq.term(0), seq.term(1), roots[0], roots[1], &scheme)?;
                out.push(("order2_closed_form", o2.verdict.passed, None));
                let x = crate::linalg::basis_vector(seq.dim(), 0);
                let (t0, t1, t2) = (
                    seq.term(0).quad_form(&x),
                    seq.term(1).quad_form(&x),
                    seq.term(2).quad_form(&x),
                );
                let gap = t2 * t0 - t1 * t1;
                out.push(("cauchy_schwarz_gap", gap >= 0.0, Some(gap)));
            }
            (Kind::Bergman, Payload::Weights(w)) => {
                out.push(("subnormal_order5", subnormality_check(w, 5, &SampleScheme::canonical())?.passed, None));
            }
            (Kind::Flat, Payload::Weights(w)) => {
                out.push(("subnormal_order4", subnormality_check(w, 4, &SampleScheme::canonical())?.passed, None));
                let sm = shift_moments(w)?;
                out.push(("flatness_identity", flatness_identity_check(&sm, 0, 4)?.passed, None));
            }
            (Kind::Decreasing, Payload::Weights(w)) => {
                out.push(("subnormal_order1", subnormality_check(w, 1, &SampleScheme::canonical())?.passed, None));
                out.push(("subnormal_order2", subnormality_check(w, 2, &SampleScheme::canonical())?.passed, None));
            }
            _ => return Err(Error::InvalidArgument("fixture payload does not match its kind".into())),
        }
        Ok(out)
    }
}
