//! Initial seed programs.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ir::visit::node_count;
use crate::ir::{is_valid, parse, PrimFunc};
use crate::mutate::Mutator;

macro_rules! seeds {
    ($($name:literal),* $(,)?) => {
        /// File names of the curated seeds.
        pub const DEFAULT_SEED_NAMES: &[&str] = &[$($name),*];
        const DEFAULT_SEED_TEXT: &[&str] = &[$(include_str!(concat!("../../seeds/", $name))),*];
    };
}

seeds!(
    "01_vector_add.tir",
    "02_saxpy_vectorized.tir",
    "03_matmul.tir",
    "04_unrolled_inner.tir",
    "05_vthread_copy.tir",
    "06_let_chain.tir",
    "07_guarded_store.tir",
    "08_data_dependent_branch.tir",
    "09_while_counter.tir",
    "10_float_reduction.tir",
    "11_modular_index.tir",
    "12_stencil.tir",
    "13_bool_mask.tir",
    "14_uint_bits.tir",
    "15_staged_copy.tir",
    "16_vector_math.tir",
    "17_casts.tir",
    "18_overwritten_store.tir",
    "19_transpose.tir",
    "20_clamp.tir",
    "21_vector_division.tir",
);

/// The curated seeds, parsed.
pub fn default_seeds() -> Vec<PrimFunc> {
    DEFAULT_SEED_TEXT
        .iter()
        .zip(DEFAULT_SEED_NAMES)
        .map(|(text, name)| parse(text).unwrap_or_else(|e| panic!("seed {name}: {e}")))
        .collect()
}

/// Every `.tir` file of `dir`, in file-name order.
pub fn load_seed_dir(dir: &Path) -> Result<Vec<PrimFunc>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| format!("{}: {e}", dir.display()))?.path();
        if p.extension().is_some_and(|x| x == "tir") {
            paths.push(p);
        }
    }
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        let f = parse(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        let v = crate::ir::validate(&f);
        if !v.is_ok() {
            return Err(format!("{}: {}", p.display(), v.messages().join("; ")));
        }
        out.push(f);
    }
    Ok(out)
}

const SKELETONS: &[&str] = &[
    "(primfunc (params (var A.0 int32)) (buffers (buffer A.0 int32 (shape 16))) (body (nop)))",
    "(primfunc (params (var A.0 float32) (var B.1 float32)) \
     (buffers (buffer A.0 float32 (shape 16)) (buffer B.1 float32 (shape 16))) (body (nop)))",
    "(primfunc (params (var A.0 int32) (var n.1 int32)) (buffers (buffer A.0 int32 (shape 4 8))) (body (nop)))",
    "(primfunc (params (var A.0 uint32) (var B.1 int32)) \
     (buffers (buffer A.0 uint32 (shape 8)) (buffer B.1 int32 (shape 8))) (body (nop)))",
];

/// A random valid function: a small skeleton grown by 3 to 8 random
/// mutations, each kept only while the function stays under `max_nodes`.
pub fn generate_seed(rng: &mut impl Rng, max_nodes: usize) -> PrimFunc {
    let mut f = parse(SKELETONS.choose(rng).unwrap()).expect("skeleton parses");
    for _ in 0..rng.gen_range(3..=8) {
        let m = *Mutator::ALL.choose(rng).unwrap();
        if let Some(g) = m.apply(&f, rng) {
            if node_count(&g) <= max_nodes && is_valid(&g) {
                f = g;
            }
        }
    }
    f
}
