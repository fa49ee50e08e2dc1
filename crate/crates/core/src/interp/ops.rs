//! Scalar semantics shared by the interpreter and constant folding, so that
//! folded results are bit-identical to executed ones.

use crate::ir::{BinOp, DataType, Intrinsic, ScalarKind};

use super::TrapKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    I32(i32),
    U32(u32),
    F32(f32),
    Bool(bool),
}

impl Scalar {
    pub fn kind(self) -> ScalarKind {
        match self {
            Scalar::I32(_) => ScalarKind::Int32,
            Scalar::U32(_) => ScalarKind::UInt32,
            Scalar::F32(_) => ScalarKind::Float32,
            Scalar::Bool(_) => ScalarKind::Bool,
        }
    }

    pub fn zero(kind: ScalarKind) -> Scalar {
        match kind {
            ScalarKind::Int32 => Scalar::I32(0),
            ScalarKind::UInt32 => Scalar::U32(0),
            ScalarKind::Float32 => Scalar::F32(0.0),
            ScalarKind::Bool => Scalar::Bool(false),
        }
    }

    /// Value of an integer immediate of type `t` (assumed in range).
    pub fn from_int_imm(t: DataType, v: i64) -> Scalar {
        match t.kind {
            ScalarKind::Int32 => Scalar::I32(v as i32),
            ScalarKind::UInt32 => Scalar::U32(v as u32),
            ScalarKind::Float32 => Scalar::F32(v as f32),
            ScalarKind::Bool => Scalar::Bool(v != 0),
        }
    }

    pub fn as_i64(self) -> Option<i64> {
        match self {
            Scalar::I32(v) => Some(v as i64),
            Scalar::U32(v) => Some(v as i64),
            Scalar::Bool(b) => Some(b as i64),
            Scalar::F32(_) => None,
        }
    }

    pub fn as_bool(self) -> bool {
        match self {
            Scalar::Bool(b) => b,
            Scalar::I32(v) => v != 0,
            Scalar::U32(v) => v != 0,
            Scalar::F32(v) => v != 0.0,
        }
    }

    /// Equality used by the differential oracle on ints and bools; floats
    /// compare bitwise except that any two NaNs are equal.
    pub fn same(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::F32(a), Scalar::F32(b)) => {
                (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits()
            }
            _ => self == other,
        }
    }
}

fn floor_div_i64(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn floor_mod_i64(a: i64, b: i64) -> i64 {
    a - floor_div_i64(a, b) * b
}

/// Applies a binary operator to two scalars of the same kind.
pub fn binop(op: BinOp, a: Scalar, b: Scalar) -> Result<Scalar, TrapKind> {
    use Scalar::*;
    Ok(match (a, b) {
        (I32(x), I32(y)) => match op {
            BinOp::Add => I32(x.wrapping_add(y)),
            BinOp::Sub => I32(x.wrapping_sub(y)),
            BinOp::Mul => I32(x.wrapping_mul(y)),
            BinOp::FloorDiv | BinOp::FloorMod if y == 0 => return Err(TrapKind::DivByZero),
            BinOp::FloorDiv => I32(floor_div_i64(x as i64, y as i64) as i32),
            BinOp::FloorMod => I32(floor_mod_i64(x as i64, y as i64) as i32),
            BinOp::Eq => Bool(x == y),
            BinOp::Gt => Bool(x > y),
            BinOp::Lt => Bool(x < y),
            BinOp::And | BinOp::Or => unreachable!("logical op on int32"),
        },
        (U32(x), U32(y)) => match op {
            BinOp::Add => U32(x.wrapping_add(y)),
            BinOp::Sub => U32(x.wrapping_sub(y)),
            BinOp::Mul => U32(x.wrapping_mul(y)),
            BinOp::FloorDiv | BinOp::FloorMod if y == 0 => return Err(TrapKind::DivByZero),
            BinOp::FloorDiv => U32(x / y),
            BinOp::FloorMod => U32(x % y),
            BinOp::Eq => Bool(x == y),
            BinOp::Gt => Bool(x > y),
            BinOp::Lt => Bool(x < y),
            BinOp::And | BinOp::Or => unreachable!("logical op on uint32"),
        },
        (F32(x), F32(y)) => match op {
            BinOp::Add => F32(x + y),
            BinOp::Sub => F32(x - y),
            BinOp::Mul => F32(x * y),
            BinOp::FloorDiv | BinOp::FloorMod if y == 0.0 => return Err(TrapKind::DivByZero),
            BinOp::FloorDiv => F32((x / y).floor()),
            BinOp::FloorMod => F32(x - (x / y).floor() * y),
            BinOp::Eq => Bool(x == y),
            BinOp::Gt => Bool(x > y),
            BinOp::Lt => Bool(x < y),
            BinOp::And | BinOp::Or => unreachable!("logical op on float32"),
        },
        (Bool(x), Bool(y)) => match op {
            BinOp::And => Bool(x && y),
            BinOp::Or => Bool(x || y),
            BinOp::Eq => Bool(x == y),
            _ => unreachable!("{} on bool", op.name()),
        },
        _ => unreachable!("operand kinds differ: {a:?} {b:?}"),
    })
}

fn fmin(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a < b {
        a
    } else {
        b
    }
}

fn fmax(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a > b {
        a
    } else {
        b
    }
}

/// Applies an intrinsic to scalar arguments of one kind.
pub fn intrinsic(op: Intrinsic, args: &[Scalar]) -> Scalar {
    use Scalar::*;
    match (op, args) {
        (Intrinsic::Abs, [I32(x)]) => I32(x.wrapping_abs()),
        (Intrinsic::Abs, [U32(x)]) => U32(*x),
        (Intrinsic::Abs, [F32(x)]) => F32(x.abs()),
        (Intrinsic::Min, [I32(x), I32(y)]) => I32(*x.min(y)),
        (Intrinsic::Min, [U32(x), U32(y)]) => U32(*x.min(y)),
        (Intrinsic::Min, [F32(x), F32(y)]) => F32(fmin(*x, *y)),
        (Intrinsic::Max, [I32(x), I32(y)]) => I32(*x.max(y)),
        (Intrinsic::Max, [U32(x), U32(y)]) => U32(*x.max(y)),
        (Intrinsic::Max, [F32(x), F32(y)]) => F32(fmax(*x, *y)),
        (Intrinsic::Clz, [I32(x)]) => I32((*x as u32).leading_zeros() as i32),
        (Intrinsic::Clz, [U32(x)]) => U32(x.leading_zeros()),
        (Intrinsic::Popcount, [I32(x)]) => I32(x.count_ones() as i32),
        (Intrinsic::Popcount, [U32(x)]) => U32(x.count_ones()),
        (Intrinsic::Sqrt, [F32(x)]) => F32(x.sqrt()),
        (Intrinsic::Sin, [F32(x)]) => F32(x.sin()),
        (Intrinsic::Cos, [F32(x)]) => F32(x.cos()),
        (Intrinsic::Exp, [F32(x)]) => F32(x.exp()),
        (Intrinsic::Log, [F32(x)]) => F32(x.ln()),
        (Intrinsic::Floor, [F32(x)]) => F32(x.floor()),
        (Intrinsic::Ceil, [F32(x)]) => F32(x.ceil()),
        _ => unreachable!("ill-typed call {}({args:?})", op.name()),
    }
}

/// Converts between scalar kinds. Float-to-integer conversion truncates and
/// traps when the value is NaN or out of range.
pub fn cast(v: Scalar, to: ScalarKind) -> Result<Scalar, TrapKind> {
    use Scalar::*;
    Ok(match (v, to) {
        (_, ScalarKind::Bool) => Bool(v.as_bool()),
        (F32(x), ScalarKind::Float32) => F32(x),
        (F32(x), ScalarKind::Int32) => {
            let t = x.trunc();
            if x.is_nan() || !(-2147483648.0..2147483648.0).contains(&t) {
                return Err(TrapKind::OverflowChecked);
            }
            I32(t as i32)
        }
        (F32(x), ScalarKind::UInt32) => {
            let t = x.trunc();
            if x.is_nan() || !(0.0..4294967296.0).contains(&t) {
                return Err(TrapKind::OverflowChecked);
            }
            U32(t as u32)
        }
        (_, ScalarKind::Float32) => match v {
            I32(x) => F32(x as f32),
            U32(x) => F32(x as f32),
            Bool(b) => F32(b as u8 as f32),
            F32(_) => unreachable!(),
        },
        (_, ScalarKind::Int32) => I32(v.as_i64().unwrap() as i32),
        (_, ScalarKind::UInt32) => U32(v.as_i64().unwrap() as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_semantics() {
        assert_eq!(
            binop(BinOp::FloorDiv, Scalar::I32(-7), Scalar::I32(2)),
            Ok(Scalar::I32(-4))
        );
        assert_eq!(
            binop(BinOp::FloorMod, Scalar::I32(-7), Scalar::I32(2)),
            Ok(Scalar::I32(1))
        );
        assert_eq!(
            binop(BinOp::FloorMod, Scalar::I32(7), Scalar::I32(-2)),
            Ok(Scalar::I32(-1))
        );
        assert_eq!(
            binop(BinOp::FloorDiv, Scalar::I32(i32::MIN), Scalar::I32(-1)),
            Ok(Scalar::I32(i32::MIN))
        );
        assert_eq!(
            binop(BinOp::FloorMod, Scalar::I32(3), Scalar::I32(0)),
            Err(TrapKind::DivByZero)
        );
    }

    #[test]
    fn float_to_int_range_checks() {
        assert_eq!(
            cast(Scalar::F32(-1.9), ScalarKind::Int32),
            Ok(Scalar::I32(-1))
        );
        assert_eq!(
            cast(Scalar::F32(f32::NAN), ScalarKind::Int32),
            Err(TrapKind::OverflowChecked)
        );
        assert_eq!(
            cast(Scalar::F32(3e9), ScalarKind::Int32),
            Err(TrapKind::OverflowChecked)
        );
        assert_eq!(
            cast(Scalar::F32(-0.5), ScalarKind::UInt32),
            Ok(Scalar::U32(0))
        );
    }

    #[test]
    fn nan_positions_compare_equal() {
        assert!(Scalar::F32(f32::NAN).same(Scalar::F32(-f32::NAN)));
        assert!(!Scalar::F32(0.0).same(Scalar::F32(f32::NAN)));
    }
}
