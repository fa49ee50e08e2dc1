//! Boolean edge coverage over hand-placed probe sites.
//!
//! Sites are registered once, when the global registry is first touched,
//! from the static label lists of the pass library and the interpreter plus
//! a few generated families (per-pass node visits, interpreter node kinds by
//! loop depth, operator/dtype pairs, trap kinds). Afterwards the registry is
//! frozen and every [`CoverageMap`] has the same length.

mod sites;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use thiserror::Error;

pub use sites::{
    binop_site, call_site, cast_site, interp_node_site, node_kind_index, pass_visit_site,
    trap_site, NODE_KINDS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("duplicate probe label '{0}'")]
    DuplicateLabel(String),
    #[error("coverage length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("malformed coverage hex: {0}")]
    BadHex(String),
}

/// Dense label-to-id table.
#[derive(Debug, Default, Clone)]
pub struct SiteRegistry {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl SiteRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_site(&mut self, label: &str) -> Result<SiteId, CoverageError> {
        if self.index.contains_key(label) {
            return Err(CoverageError::DuplicateLabel(label.to_string()));
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        Ok(SiteId(id))
    }

    pub fn lookup(&self, label: &str) -> Option<SiteId> {
        self.index.get(label).copied().map(SiteId)
    }

    pub fn label(&self, id: SiteId) -> &str {
        &self.labels[id.0 as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn empty_map(&self) -> CoverageMap {
        CoverageMap::new(self.len())
    }
}

static REGISTRY: OnceLock<SiteRegistry> = OnceLock::new();

/// The process-wide registry of every probe site in the library.
pub fn registry() -> &'static SiteRegistry {
    REGISTRY.get_or_init(sites::build)
}

/// Id of a statically listed probe label.
///
/// # Panics
///
/// Panics when `label` was never registered; that is a programming error
/// caught by the probe-listing test.
pub fn site(label: &str) -> SiteId {
    registry()
        .lookup(label)
        .unwrap_or_else(|| panic!("probe label '{label}' is not registered"))
}

/// Fixed-length bit vector over the registered sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoverageMap {
    len: usize,
    words: Vec<u64>,
}

impl CoverageMap {
    pub fn new(len: usize) -> Self {
        CoverageMap {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "site {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    fn check_len(&self, other: &CoverageMap) -> Result<(), CoverageError> {
        if self.len == other.len {
            Ok(())
        } else {
            Err(CoverageError::LengthMismatch {
                left: self.len,
                right: other.len,
            })
        }
    }

    /// In-place union.
    pub fn merge_from(&mut self, other: &CoverageMap) -> Result<(), CoverageError> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Lowercase hex, least significant site first within each byte pair.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.len.div_ceil(4));
        let bytes = self.len.div_ceil(8);
        for b in 0..bytes {
            let byte = (self.words[b / 8] >> ((b % 8) * 8)) & 0xff;
            let _ = write!(s, "{byte:02x}");
        }
        s
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self, CoverageError> {
        let mut map = CoverageMap::new(len);
        if hex.len() != len.div_ceil(8) * 2 {
            return Err(CoverageError::BadHex(format!(
                "expected {} digits",
                len.div_ceil(8) * 2
            )));
        }
        for (b, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let text =
                std::str::from_utf8(chunk).map_err(|e| CoverageError::BadHex(e.to_string()))?;
            let byte =
                u64::from_str_radix(text, 16).map_err(|e| CoverageError::BadHex(e.to_string()))?;
            map.words[b / 8] |= byte << ((b % 8) * 8);
        }
        if map.iter_ones().count() != map.popcount() {
            return Err(CoverageError::BadHex("bits beyond length".into()));
        }
        Ok(map)
    }
}

/// Bitwise union of two maps from the same campaign.
pub fn merge(total: &CoverageMap, cov: &CoverageMap) -> Result<CoverageMap, CoverageError> {
    let mut out = total.clone();
    out.merge_from(cov)?;
    Ok(out)
}

/// True iff `cov` sets a bit that is clear in `total`.
pub fn has_new(cov: &CoverageMap, total: &CoverageMap) -> Result<bool, CoverageError> {
    cov.check_len(total)?;
    Ok(cov.words.iter().zip(&total.words).any(|(c, t)| c & !t != 0))
}

/// Accumulator for one execution. Probes only ever set bits.
#[derive(Clone, Debug)]
pub struct CoverageHandle {
    map: CoverageMap,
    last_label: Option<&'static str>,
    fault_label: Option<&'static str>,
}

impl Default for CoverageHandle {
    fn default() -> Self {
        Self::new()
    }
}

impl CoverageHandle {
    pub fn new() -> Self {
        CoverageHandle {
            map: registry().empty_map(),
            last_label: None,
            fault_label: None,
        }
    }

    #[inline]
    pub fn hit(&mut self, id: SiteId) {
        let i = id.0 as usize;
        self.map.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn hit_labeled(&mut self, id: SiteId, label: &'static str) {
        self.hit(id);
        self.last_label = Some(label);
    }

    /// Most recent labeled probe.
    pub fn last_label(&self) -> Option<&'static str> {
        self.last_label
    }

    /// Records that the branch at `label` produced a faulty rewrite.
    pub fn note_fault(&mut self, label: &'static str) {
        self.fault_label = Some(label);
    }

    pub fn fault_label(&self) -> Option<&'static str> {
        self.fault_label
    }

    pub fn clear_labels(&mut self) {
        self.last_label = None;
        self.fault_label = None;
    }

    pub fn absorb(&mut self, other: &CoverageHandle) {
        self.map
            .merge_from(&other.map)
            .expect("handles share the global registry");
    }

    pub fn map(&self) -> &CoverageMap {
        &self.map
    }
}

pub fn snapshot(handle: &CoverageHandle) -> CoverageMap {
    handle.map.clone()
}

/// Sets the bit of a statically listed probe label on a handle. The id is
/// resolved once per call site.
#[macro_export]
macro_rules! probe {
    ($cov:expr, $label:literal) => {{
        static ID: ::std::sync::OnceLock<$crate::coverage::SiteId> = ::std::sync::OnceLock::new();
        let id = *ID.get_or_init(|| $crate::coverage::site($label));
        $cov.hit_labeled(id, $label);
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_is_dense_and_unique() {
        let mut r = SiteRegistry::new();
        assert_eq!(r.register_site("a"), Ok(SiteId(0)));
        assert_eq!(r.register_site("b"), Ok(SiteId(1)));
        assert_eq!(
            r.register_site("a"),
            Err(CoverageError::DuplicateLabel("a".into()))
        );
        assert_eq!(r.empty_map().len(), 2);
    }

    #[test]
    fn global_registry_size_is_in_target_band() {
        let n = registry().len();
        assert!((300..=700).contains(&n), "{n} sites");
    }

    #[test]
    fn merge_and_has_new() {
        let mut a = CoverageMap::new(70);
        let mut b = CoverageMap::new(70);
        assert!(!has_new(&a, &b).unwrap());
        a.set(3);
        a.set(69);
        b.set(3);
        assert!(has_new(&a, &b).unwrap());
        let m = merge(&b, &a).unwrap();
        assert!(!has_new(&a, &m).unwrap());
        assert_eq!(merge(&m, &m).unwrap(), m);
        assert_eq!(
            has_new(&a, &CoverageMap::new(3)),
            Err(CoverageError::LengthMismatch { left: 70, right: 3 })
        );
    }

    #[test]
    fn hex_round_trip() {
        let mut a = CoverageMap::new(13);
        a.set(0);
        a.set(9);
        a.set(12);
        let h = a.to_hex();
        assert_eq!(h, "0112");
        assert_eq!(CoverageMap::from_hex(13, &h).unwrap(), a);
        assert!(CoverageMap::from_hex(13, "01ff").is_err());
    }
}
