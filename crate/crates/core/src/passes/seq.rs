use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PassId;

pub const MAX_PASSES: usize = 12;
pub const MAX_OPT_LEVEL: u8 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PassSequence {
    pub passes: Vec<PassId>,
    pub opt_level: u8,
}

impl PassSequence {
    pub fn new(passes: Vec<PassId>, opt_level: u8) -> Self {
        PassSequence { passes, opt_level }
    }

    pub fn is_valid(&self) -> bool {
        self.passes.len() <= MAX_PASSES && self.opt_level <= MAX_OPT_LEVEL
    }

    pub fn with_opt_level(&self, opt_level: u8) -> Self {
        PassSequence {
            passes: self.passes.clone(),
            opt_level,
        }
    }

    /// `passes.txt` form: one pass name per line, then `opt_level=N`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.passes {
            s.push_str(p.name());
            s.push('\n');
        }
        s.push_str(&format!("opt_level={}\n", self.opt_level));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut passes = Vec::new();
        let mut opt_level = None;
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            if let Some(v) = line.strip_prefix("opt_level=") {
                let level: u8 = v.parse().map_err(|_| format!("bad opt level '{v}'"))?;
                opt_level = Some(level);
            } else {
                passes
                    .push(PassId::from_name(line).ok_or_else(|| format!("unknown pass '{line}'"))?);
            }
        }
        let seq = PassSequence {
            passes,
            opt_level: opt_level.unwrap_or(MAX_OPT_LEVEL),
        };
        if seq.is_valid() {
            Ok(seq)
        } else {
            Err("pass sequence out of bounds".into())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PassEdit {
    Insert,
    Delete,
    Swap,
    Replace,
    Resample,
}

impl PassEdit {
    pub const ALL: [PassEdit; 5] = [
        PassEdit::Insert,
        PassEdit::Delete,
        PassEdit::Swap,
        PassEdit::Replace,
        PassEdit::Resample,
    ];
}

fn random_pass(rng: &mut impl Rng) -> PassId {
    *PassId::ALL.choose(rng).unwrap()
}

/// A sequence of uniformly random length in `len` (clamped to the cap).
pub fn random_pass_seq(
    rng: &mut impl Rng,
    len: std::ops::RangeInclusive<usize>,
    opt_level: u8,
) -> PassSequence {
    let n = rng.gen_range(len).min(MAX_PASSES);
    PassSequence {
        passes: (0..n).map(|_| random_pass(rng)).collect(),
        opt_level,
    }
}

/// One uniformly chosen edit of the pass list. The opt level is kept.
pub fn mutate_pass_seq(seq: &PassSequence, rng: &mut impl Rng) -> PassSequence {
    let edit = *PassEdit::ALL.choose(rng).unwrap();
    mutate_pass_seq_with(seq, edit, rng).0
}

/// Applies `edit`, re-rolling it when it cannot apply: delete, swap and
/// replace on an empty list become insert, and insert on a full list is
/// re-drawn among the non-growing edits. Returns the edit actually applied.
pub fn mutate_pass_seq_with(
    seq: &PassSequence,
    edit: PassEdit,
    rng: &mut impl Rng,
) -> (PassSequence, PassEdit) {
    let mut out = seq.clone();
    let len = out.passes.len();
    let edit = match edit {
        PassEdit::Insert if len >= MAX_PASSES => *[
            PassEdit::Delete,
            PassEdit::Swap,
            PassEdit::Replace,
            PassEdit::Resample,
        ]
        .choose(rng)
        .unwrap(),
        PassEdit::Delete | PassEdit::Swap | PassEdit::Replace if len == 0 => PassEdit::Insert,
        e => e,
    };
    match edit {
        PassEdit::Insert => {
            let at = rng.gen_range(0..=len);
            out.passes.insert(at, random_pass(rng));
        }
        PassEdit::Delete => {
            let at = rng.gen_range(0..len);
            out.passes.remove(at);
        }
        PassEdit::Swap => {
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(0..len);
            out.passes.swap(a, b);
        }
        PassEdit::Replace => {
            let at = rng.gen_range(0..len);
            out.passes[at] = random_pass(rng);
        }
        PassEdit::Resample => {
            out = random_pass_seq(rng, 0..=MAX_PASSES, seq.opt_level);
        }
    }
    (out, edit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insert_into_empty_and_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let empty = PassSequence::new(vec![], 4);
        let (one, e) = mutate_pass_seq_with(&empty, PassEdit::Insert, &mut rng);
        assert_eq!((one.passes.len(), e), (1, PassEdit::Insert));
        let full = PassSequence::new(vec![PassId::Simplify; MAX_PASSES], 4);
        for _ in 0..50 {
            let (out, e) = mutate_pass_seq_with(&full, PassEdit::Insert, &mut rng);
            assert_ne!(e, PassEdit::Insert);
            assert!(out.passes.len() <= MAX_PASSES);
        }
    }

    #[test]
    fn delete_on_empty_degrades_to_insert() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, e) =
            mutate_pass_seq_with(&PassSequence::new(vec![], 0), PassEdit::Delete, &mut rng);
        assert_eq!(e, PassEdit::Insert);
        assert_eq!(out.passes.len(), 1);
        assert_eq!(out.opt_level, 0);
    }

    #[test]
    fn text_round_trip() {
        let s = PassSequence::new(vec![PassId::UnrollLoop, PassId::LetInline], 4);
        assert_eq!(s.to_text(), "unroll_loop\nlet_inline\nopt_level=4\n");
        assert_eq!(PassSequence::from_text(&s.to_text()), Ok(s));
        assert!(PassSequence::from_text("frobnicate\n").is_err());
    }
}
