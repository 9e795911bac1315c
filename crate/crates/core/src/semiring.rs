//! Semirings parameterizing every stream, variable and kernel.
//!
//! A semiring bundles a commutative addition monoid `(+, 0)` with a
//! multiplication monoid `(*, 1)`, related by distributivity and by `0`
//! absorbing multiplication. Nothing here ever subtracts.
//!
//! Shipped instances:
//! - [`Arithmetic`]: `f64` with `+` and `*`, compared with a relative tolerance
//! - [`Integer`]: `i64` with wrapping `+` and `*`, compared exactly
//! - [`Boolean`]: `bool` with `||` and `&&`
//! - [`MinPlus`]: tropical `min`/`+` over a weight type extended with `+∞`

use std::fmt;

use crate::error::ParseValueError;

/// Relative tolerance used by [`Arithmetic`] equality.
pub const FLOAT_REL_TOL: f64 = 1e-9;
/// Absolute floor under [`FLOAT_REL_TOL`].
pub const FLOAT_ABS_TOL: f64 = 1e-12;

/// The algebraic structure every contraction is evaluated in.
///
/// Instances are values rather than marker types so that a test can build a
/// deliberately broken instance and run [`check_axioms`] against it.
pub trait Semiring: Clone + fmt::Debug + 'static {
    type Elem: Clone + fmt::Debug + PartialEq + 'static;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;

    /// Exact for discrete carriers, tolerance-based for floats.
    fn elem_eq(&self, a: &Self::Elem, b: &Self::Elem) -> bool {
        a == b
    }

    fn is_zero(&self, a: &Self::Elem) -> bool {
        self.elem_eq(a, &self.zero())
    }

    /// Short name used on the command line.
    fn name(&self) -> &'static str;

    fn is_commutative(&self) -> bool {
        true
    }

    fn parse_elem(&self, text: &str) -> Result<Self::Elem, ParseValueError>;

    fn format_elem(&self, value: &Self::Elem) -> String;

    /// Embeds a small integer, used by generators and by pattern matrices.
    #[allow(clippy::wrong_self_convention)]
    fn from_i64(&self, x: i64) -> Self::Elem;
}

/// Real arithmetic on `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Arithmetic;

impl Semiring for Arithmetic {
    type Elem = f64;

    fn zero(&self) -> f64 {
        0.0
    }

    fn one(&self) -> f64 {
        1.0
    }

    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }

    fn elem_eq(&self, a: &f64, b: &f64) -> bool {
        float_eq(*a, *b)
    }

    fn name(&self) -> &'static str {
        "f64"
    }

    fn parse_elem(&self, text: &str) -> Result<f64, ParseValueError> {
        text.parse::<f64>()
            .map_err(|_| ParseValueError::new(text, self.name()))
    }

    fn format_elem(&self, value: &f64) -> String {
        format!("{value}")
    }

    fn from_i64(&self, x: i64) -> f64 {
        x as f64
    }
}

/// Tolerance comparison shared by every float carrier.
pub fn float_eq(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if a.is_nan() || b.is_nan() || a.is_infinite() || b.is_infinite() {
        return false;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= FLOAT_ABS_TOL.max(FLOAT_REL_TOL * scale)
}

/// Exact integer arithmetic. Overflow wraps, which keeps the ring laws
/// intact (arithmetic modulo 2^64) instead of panicking mid-evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integer;

impl Semiring for Integer {
    type Elem = i64;

    fn zero(&self) -> i64 {
        0
    }

    fn one(&self) -> i64 {
        1
    }

    fn add(&self, a: &i64, b: &i64) -> i64 {
        a.wrapping_add(*b)
    }

    fn mul(&self, a: &i64, b: &i64) -> i64 {
        a.wrapping_mul(*b)
    }

    fn name(&self) -> &'static str {
        "int"
    }

    fn parse_elem(&self, text: &str) -> Result<i64, ParseValueError> {
        if let Ok(v) = text.parse::<i64>() {
            return Ok(v);
        }
        // MatrixMarket "real" files routinely write integers as `3.0`.
        match text.parse::<f64>() {
            Ok(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
            _ => Err(ParseValueError::new(text, self.name())),
        }
    }

    fn format_elem(&self, value: &i64) -> String {
        value.to_string()
    }

    fn from_i64(&self, x: i64) -> i64 {
        x
    }
}

/// Boolean semiring `(∨, ⊥)`, `(∧, ⊤)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Boolean;

impl Semiring for Boolean {
    type Elem = bool;

    fn zero(&self) -> bool {
        false
    }

    fn one(&self) -> bool {
        true
    }

    fn add(&self, a: &bool, b: &bool) -> bool {
        *a || *b
    }

    fn mul(&self, a: &bool, b: &bool) -> bool {
        *a && *b
    }

    fn name(&self) -> &'static str {
        "bool"
    }

    fn parse_elem(&self, text: &str) -> Result<bool, ParseValueError> {
        match text {
            "true" | "T" | "1" => Ok(true),
            "false" | "F" | "0" => Ok(false),
            other => match other.parse::<f64>() {
                Ok(f) => Ok(f != 0.0),
                Err(_) => Err(ParseValueError::new(text, self.name())),
            },
        }
    }

    fn format_elem(&self, value: &bool) -> String {
        if *value { "1" } else { "0" }.to_string()
    }

    fn from_i64(&self, x: i64) -> bool {
        x != 0
    }
}

/// Weight carrier for the tropical semiring.
pub trait TropicalWeight: Copy + PartialOrd + fmt::Debug + fmt::Display + 'static {
    fn plus(self, other: Self) -> Self;
    fn zero_weight() -> Self;
    fn weight_eq(self, other: Self) -> bool;
    fn parse_weight(text: &str) -> Option<Self>;
    fn from_i64(x: i64) -> Self;
}

impl TropicalWeight for i64 {
    fn plus(self, other: i64) -> i64 {
        self.saturating_add(other)
    }

    fn zero_weight() -> i64 {
        0
    }

    fn weight_eq(self, other: i64) -> bool {
        self == other
    }

    fn parse_weight(text: &str) -> Option<i64> {
        text.parse::<i64>().ok().or_else(|| {
            text.parse::<f64>()
                .ok()
                .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                .map(|f| f as i64)
        })
    }

    fn from_i64(x: i64) -> i64 {
        x
    }
}

impl TropicalWeight for f64 {
    fn plus(self, other: f64) -> f64 {
        self + other
    }

    fn zero_weight() -> f64 {
        0.0
    }

    fn weight_eq(self, other: f64) -> bool {
        float_eq(self, other)
    }

    fn parse_weight(text: &str) -> Option<f64> {
        text.parse::<f64>().ok().filter(|f| f.is_finite())
    }

    fn from_i64(x: i64) -> f64 {
        x as f64
    }
}

/// An element of `W ∪ {+∞}`. `Infinity` is a distinguished value rather than
/// a float infinity, so `∞ + x` saturates without ever producing NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tropical<W> {
    Finite(W),
    Infinity,
}

impl<W: TropicalWeight> Tropical<W> {
    pub fn finite(self) -> Option<W> {
        match self {
            Tropical::Finite(w) => Some(w),
            Tropical::Infinity => None,
        }
    }
}

impl<W: TropicalWeight> fmt::Display for Tropical<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tropical::Finite(w) => write!(f, "{w}"),
            Tropical::Infinity => write!(f, "inf"),
        }
    }
}

/// The `(min, +)` semiring: zero is `+∞`, one is `0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinPlus<W = f64>(std::marker::PhantomData<W>);

impl<W> MinPlus<W> {
    pub fn new() -> Self {
        MinPlus(std::marker::PhantomData)
    }
}

impl<W: TropicalWeight> Semiring for MinPlus<W> {
    type Elem = Tropical<W>;

    fn zero(&self) -> Tropical<W> {
        Tropical::Infinity
    }

    fn one(&self) -> Tropical<W> {
        Tropical::Finite(W::zero_weight())
    }

    fn add(&self, a: &Tropical<W>, b: &Tropical<W>) -> Tropical<W> {
        match (a, b) {
            (Tropical::Infinity, x) | (x, Tropical::Infinity) => *x,
            (Tropical::Finite(x), Tropical::Finite(y)) => {
                if y < x {
                    Tropical::Finite(*y)
                } else {
                    Tropical::Finite(*x)
                }
            }
        }
    }

    fn mul(&self, a: &Tropical<W>, b: &Tropical<W>) -> Tropical<W> {
        match (a, b) {
            (Tropical::Finite(x), Tropical::Finite(y)) => Tropical::Finite(x.plus(*y)),
            _ => Tropical::Infinity,
        }
    }

    fn elem_eq(&self, a: &Tropical<W>, b: &Tropical<W>) -> bool {
        match (a, b) {
            (Tropical::Infinity, Tropical::Infinity) => true,
            (Tropical::Finite(x), Tropical::Finite(y)) => x.weight_eq(*y),
            _ => false,
        }
    }

    fn name(&self) -> &'static str {
        "minplus"
    }

    fn parse_elem(&self, text: &str) -> Result<Tropical<W>, ParseValueError> {
        match text {
            "inf" | "+inf" | "Infinity" | "infinity" => Ok(Tropical::Infinity),
            _ => W::parse_weight(text)
                .map(Tropical::Finite)
                .ok_or_else(|| ParseValueError::new(text, "minplus")),
        }
    }

    fn format_elem(&self, value: &Tropical<W>) -> String {
        value.to_string()
    }

    fn from_i64(&self, x: i64) -> Tropical<W> {
        Tropical::Finite(W::from_i64(x))
    }
}

/// Names accepted on the command line.
pub const SEMIRING_NAMES: [&str; 4] = ["f64", "int", "bool", "minplus"];

/// Which semiring axiom a [`Violation`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axiom {
    AddAssociative,
    AddCommutative,
    AddIdentity,
    MulAssociative,
    MulIdentity,
    LeftDistributive,
    RightDistributive,
    ZeroAbsorbs,
}

/// One failed instance of an axiom, with the sample values that witnessed it.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation<T> {
    pub axiom: Axiom,
    pub witnesses: Vec<T>,
}

/// Checks every semiring law on all triples drawn from `samples`.
///
/// Returns one violation per (axiom, witness tuple) that fails; an empty
/// vector means every law held on the sample set.
pub fn check_axioms<S: Semiring>(s: &S, samples: &[S::Elem]) -> Vec<Violation<S::Elem>> {
    assert!(!samples.is_empty(), "check_axioms needs at least one sample");
    let mut report = Vec::new();
    let zero = s.zero();
    let one = s.one();
    let mut fail = |axiom, witnesses: &[&S::Elem]| {
        report.push(Violation {
            axiom,
            witnesses: witnesses.iter().map(|w| (*w).clone()).collect(),
        })
    };

    for x in samples {
        if !s.elem_eq(&s.add(x, &zero), x) || !s.elem_eq(&s.add(&zero, x), x) {
            fail(Axiom::AddIdentity, &[x]);
        }
        if !s.elem_eq(&s.mul(x, &one), x) || !s.elem_eq(&s.mul(&one, x), x) {
            fail(Axiom::MulIdentity, &[x]);
        }
        if !s.elem_eq(&s.mul(x, &zero), &zero) || !s.elem_eq(&s.mul(&zero, x), &zero) {
            fail(Axiom::ZeroAbsorbs, &[x]);
        }
        for y in samples {
            if !s.elem_eq(&s.add(x, y), &s.add(y, x)) {
                fail(Axiom::AddCommutative, &[x, y]);
            }
            for z in samples {
                if !s.elem_eq(&s.add(&s.add(x, y), z), &s.add(x, &s.add(y, z))) {
                    fail(Axiom::AddAssociative, &[x, y, z]);
                }
                if !s.elem_eq(&s.mul(&s.mul(x, y), z), &s.mul(x, &s.mul(y, z))) {
                    fail(Axiom::MulAssociative, &[x, y, z]);
                }
                let yz = s.add(y, z);
                if !s.elem_eq(&s.mul(x, &yz), &s.add(&s.mul(x, y), &s.mul(x, z))) {
                    fail(Axiom::LeftDistributive, &[x, y, z]);
                }
                if !s.elem_eq(&s.mul(&yz, x), &s.add(&s.mul(y, x), &s.mul(z, x))) {
                    fail(Axiom::RightDistributive, &[x, y, z]);
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Arithmetic with the additive identity deliberately set to one.
    #[derive(Clone, Debug)]
    struct BrokenZero;

    impl Semiring for BrokenZero {
        type Elem = f64;
        fn zero(&self) -> f64 {
            1.0
        }
        fn one(&self) -> f64 {
            1.0
        }
        fn add(&self, a: &f64, b: &f64) -> f64 {
            a + b
        }
        fn mul(&self, a: &f64, b: &f64) -> f64 {
            a * b
        }
        fn name(&self) -> &'static str {
            "broken"
        }
        fn parse_elem(&self, text: &str) -> Result<f64, ParseValueError> {
            Arithmetic.parse_elem(text)
        }
        fn format_elem(&self, value: &f64) -> String {
            value.to_string()
        }
        fn from_i64(&self, x: i64) -> f64 {
            x as f64
        }
    }

    #[test]
    fn boolean_axioms_hold_exhaustively() {
        assert!(check_axioms(&Boolean, &[false, true]).is_empty());
    }

    #[test]
    fn tropical_axioms_hold_on_small_sample() {
        let s = MinPlus::<i64>::new();
        let samples = [
            Tropical::Finite(0),
            Tropical::Finite(1),
            Tropical::Finite(5),
            Tropical::Infinity,
        ];
        assert!(check_axioms(&s, &samples).is_empty());
    }

    #[test]
    fn broken_zero_reports_absorption() {
        let report = check_axioms(&BrokenZero, &[0.0, 2.0, 3.5]);
        assert!(report.iter().any(|v| v.axiom == Axiom::ZeroAbsorbs));
        assert!(report.iter().any(|v| v.axiom == Axiom::AddIdentity));
    }

    #[test]
    fn tropical_identities() {
        let s = MinPlus::<f64>::new();
        let x = Tropical::Finite(4.25);
        assert_eq!(s.add(&x, &s.zero()), x);
        assert_eq!(s.mul(&x, &s.zero()), Tropical::Infinity);
        assert_eq!(s.mul(&x, &s.one()), x);
        assert_eq!(s.add(&Tropical::Finite(3.0), &Tropical::Finite(5.0)), Tropical::Finite(3.0));
    }

    #[test]
    fn float_tolerance() {
        assert!(Arithmetic.elem_eq(&1.0, &(1.0 + 1e-12)));
        assert!(!Arithmetic.elem_eq(&1.0, &1.001));
        assert!(Arithmetic.elem_eq(&0.0, &1e-13));
        assert!(!Arithmetic.elem_eq(&f64::INFINITY, &1e300));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(Integer.parse_elem("3.0").unwrap(), 3);
        assert!(Integer.parse_elem("3.5").is_err());
        assert!(Boolean.parse_elem("1").unwrap());
        let mp = MinPlus::<f64>::new();
        assert_eq!(mp.parse_elem("inf").unwrap(), Tropical::Infinity);
        assert_eq!(mp.format_elem(&Tropical::Finite(2.5)), "2.5");
    }
}
