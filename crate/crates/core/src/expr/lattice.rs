use std::fmt;

use serde::Serialize;

/// Sign of every entry of an expression.
///
/// A sign is only known when all entries share it; mixed or undetermined
/// entries give `Unknown`. `Zero` is both nonnegative and nonpositive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Zero,
    Nonneg,
    Nonpos,
    Unknown,
}

impl Sign {
    pub fn is_nonneg(self) -> bool {
        matches!(self, Sign::Zero | Sign::Nonneg)
    }

    pub fn is_nonpos(self) -> bool {
        matches!(self, Sign::Zero | Sign::Nonpos)
    }

    pub fn is_zero(self) -> bool {
        self == Sign::Zero
    }

    /// Least upper bound: the most specific sign covering both.
    pub fn join(self, other: Sign) -> Sign {
        match (self, other) {
            (a, b) if a == b => a,
            (Sign::Zero, s) | (s, Sign::Zero) => s,
            _ => Sign::Unknown,
        }
    }

    /// Greatest lower bound. Contradictory facts (nonneg and nonpos) meet at zero.
    pub fn meet(self, other: Sign) -> Sign {
        match (self, other) {
            (a, b) if a == b => a,
            (Sign::Unknown, s) | (s, Sign::Unknown) => s,
            _ => Sign::Zero,
        }
    }

    /// Sign of a sum of terms with these signs.
    pub fn add(self, other: Sign) -> Sign {
        self.join(other)
    }

    /// Sign of a product of terms with these signs.
    pub fn mul(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (Sign::Unknown, _) | (_, Sign::Unknown) => Sign::Unknown,
            (a, b) if a == b => Sign::Nonneg,
            _ => Sign::Nonpos,
        }
    }

    pub fn neg(self) -> Sign {
        match self {
            Sign::Nonneg => Sign::Nonpos,
            Sign::Nonpos => Sign::Nonneg,
            s => s,
        }
    }

    /// Sign of a set of values.
    pub fn of_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Sign {
        let (mut pos, mut neg, mut nan) = (false, false, false);
        for &v in values {
            if v > 0.0 {
                pos = true;
            } else if v < 0.0 {
                neg = true;
            } else if v.is_nan() {
                nan = true;
            }
        }
        match (pos, neg, nan) {
            (_, _, true) | (true, true, _) => Sign::Unknown,
            (true, false, _) => Sign::Nonneg,
            (false, true, _) => Sign::Nonpos,
            (false, false, _) => Sign::Zero,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Zero => "zero",
            Sign::Nonneg => "nonneg",
            Sign::Nonpos => "nonpos",
            Sign::Unknown => "unknown",
        })
    }
}

/// DCP curvature. `Constant` is below `Affine`, which is below both `Convex`
/// and `Concave`; `Unknown` is the top of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    Constant,
    Affine,
    Convex,
    Concave,
    Unknown,
}

impl Curvature {
    pub fn is_constant(self) -> bool {
        self == Curvature::Constant
    }

    pub fn is_affine(self) -> bool {
        matches!(self, Curvature::Constant | Curvature::Affine)
    }

    pub fn is_convex(self) -> bool {
        self.is_affine() || self == Curvature::Convex
    }

    pub fn is_concave(self) -> bool {
        self.is_affine() || self == Curvature::Concave
    }

    /// `self <= other` in the lattice order.
    pub fn le(self, other: Curvature) -> bool {
        match (self, other) {
            (a, b) if a == b => true,
            (_, Curvature::Unknown) => true,
            (Curvature::Constant, _) => true,
            (Curvature::Affine, Curvature::Convex | Curvature::Concave) => true,
            _ => false,
        }
    }

    pub fn join(self, other: Curvature) -> Curvature {
        if self.le(other) {
            other
        } else if other.le(self) {
            self
        } else {
            Curvature::Unknown
        }
    }

    /// Curvature after multiplying by a constant of the given sign.
    pub fn scale(self, sign: Sign) -> Curvature {
        match self {
            Curvature::Constant | Curvature::Affine => self,
            _ if sign.is_zero() => Curvature::Constant,
            Curvature::Convex | Curvature::Concave if sign == Sign::Nonneg => self,
            Curvature::Convex | Curvature::Concave if sign == Sign::Nonpos => self.neg(),
            _ => Curvature::Unknown,
        }
    }

    pub fn neg(self) -> Curvature {
        match self {
            Curvature::Convex => Curvature::Concave,
            Curvature::Concave => Curvature::Convex,
            c => c,
        }
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Curvature::Constant => "constant",
            Curvature::Affine => "affine",
            Curvature::Convex => "convex",
            Curvature::Concave => "concave",
            Curvature::Unknown => "unknown",
        })
    }
}

/// How an atom responds to an increase in one of its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    /// Nondecreasing where the argument is nonnegative, nonincreasing where it
    /// is nonpositive.
    SignDependent,
    None,
}

impl Monotonicity {
    /// Resolve against the argument's sign.
    pub fn resolve(self, arg: Sign) -> Monotonicity {
        match self {
            Monotonicity::SignDependent if arg.is_nonneg() => Monotonicity::Nondecreasing,
            Monotonicity::SignDependent if arg.is_nonpos() => Monotonicity::Nonincreasing,
            Monotonicity::SignDependent => Monotonicity::None,
            m => m,
        }
    }
}
