//! Structured-text records for polynomials and symbols.
//!
//! Frequencies are integer arrays and complex entries are `[re, im]` pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::symbol::{Branches, PolyhomSymbol};
use crate::trigpoly::{CMat, TrigPoly, C64};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TermRecord {
    pub freq: Vec<i32>,
    /// Row-major matrix entries.
    pub entries: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrigPolyRecord {
    pub rank: usize,
    pub matrix_size: usize,
    #[serde(default)]
    pub terms: Vec<TermRecord>,
}

impl From<&TrigPoly> for TrigPolyRecord {
    fn from(p: &TrigPoly) -> Self {
        let terms = p
            .coeffs()
            .iter()
            .map(|(f, m)| TermRecord {
                freq: f.clone(),
                entries: (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect(),
            })
            .collect();
        TrigPolyRecord { rank: p.rank(), matrix_size: p.matrix_size(), terms }
    }
}

impl TryFrom<&TrigPolyRecord> for TrigPoly {
    type Error = Error;

    fn try_from(r: &TrigPolyRecord) -> Result<TrigPoly> {
        if r.matrix_size == 0 {
            return Err(Error::Invalid("matrix_size must be positive".into()));
        }
        let mut p = TrigPoly::zero(r.rank, r.matrix_size);
        for t in &r.terms {
            if t.freq.len() != r.rank {
                return Err(Error::Rank(t.freq.len(), r.rank));
            }
            if t.entries.len() != r.matrix_size || t.entries.iter().any(|row| row.len() != r.matrix_size) {
                return Err(Error::MatrixSize(t.entries.len(), r.matrix_size));
            }
            let m = CMat::from_fn(r.matrix_size, r.matrix_size, |i, j| {
                let [re, im] = t.entries[i][j];
                C64::new(re, im)
            });
            p.add_term(t.freq.clone(), m);
        }
        Ok(p)
    }
}

impl Serialize for TrigPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrigPolyRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TrigPolyRecord::deserialize(d)?;
        TrigPoly::try_from(&r).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BranchRecord {
    pub j: usize,
    pub plus: TrigPoly,
    pub minus: TrigPoly,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CorrectionRecord {
    pub n: i64,
    pub value: TrigPoly,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymbolRecord {
    pub order: i32,
    pub matrix_size: usize,
    /// `None` for a complete expansion.
    #[serde(default)]
    pub watermark: Option<i32>,
    pub branches: Vec<BranchRecord>,
    #[serde(default)]
    pub zero_mode: Option<TrigPoly>,
    #[serde(default)]
    pub corrections: Vec<CorrectionRecord>,
}

impl From<&PolyhomSymbol> for SymbolRecord {
    fn from(a: &PolyhomSymbol) -> Self {
        let corrections = a
            .corrections()
            .map(|m| m.iter().map(|(n, v)| CorrectionRecord { n: *n, value: v.clone() }).collect())
            .unwrap_or_default();
        SymbolRecord {
            order: a.order(),
            matrix_size: a.matrix_size(),
            watermark: a.watermark(),
            branches: a
                .comps()
                .iter()
                .enumerate()
                .map(|(j, c)| BranchRecord { j, plus: c.plus.clone(), minus: c.minus.clone() })
                .collect(),
            zero_mode: a.zero_mode().cloned(),
            corrections,
        }
    }
}

impl TryFrom<&SymbolRecord> for PolyhomSymbol {
    type Error = Error;

    fn try_from(r: &SymbolRecord) -> Result<PolyhomSymbol> {
        let first = r.branches.first().ok_or_else(|| Error::Invalid("symbol without branches".into()))?;
        let (rank, k) = (first.plus.rank(), first.plus.matrix_size());
        if k != r.matrix_size {
            return Err(Error::MatrixSize(k, r.matrix_size));
        }
        let len = r.branches.iter().map(|b| b.j + 1).max().unwrap();
        let mut comps: BTreeMap<usize, Branches> = BTreeMap::new();
        for b in &r.branches {
            for p in [&b.plus, &b.minus] {
                if p.rank() != rank {
                    return Err(Error::Rank(p.rank(), rank));
                }
                if p.matrix_size() != k {
                    return Err(Error::MatrixSize(p.matrix_size(), k));
                }
            }
            comps.insert(b.j, Branches { plus: b.plus.clone(), minus: b.minus.clone() });
        }
        let comps = (0..len).map(|j| comps.remove(&j).unwrap_or_else(|| Branches::zero(rank, k))).collect();
        let mut s = PolyhomSymbol::new(r.order, comps, r.watermark);
        if let Some(z) = &r.zero_mode {
            if r.watermark.is_some() {
                return Err(Error::Invalid("operator data requires a complete expansion".into()));
            }
            if z.rank() != rank {
                return Err(Error::Rank(z.rank(), rank));
            }
            s = s.with_zero_mode(z.clone());
            for c in &r.corrections {
                if c.n == 0 {
                    return Err(Error::Invalid("mode 0 belongs in zero_mode".into()));
                }
                s = s.with_correction(c.n, c.value.clone());
            }
        } else if !r.corrections.is_empty() {
            return Err(Error::Invalid("corrections need a zero mode".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigpoly::{c, cr};

    #[test]
    fn symbol_round_trip() {
        let f = TrigPoly::from_terms(1, &[(vec![1], c(0.5, -0.25)), (vec![0], cr(1.0))]);
        let s = PolyhomSymbol::new(0, vec![Branches::both(f.clone()), Branches { plus: f.clone(), minus: TrigPoly::zero(1, 1) }], None)
            .with_zero_mode(f.clone())
            .with_correction(2, f);
        let json = serde_json::to_string(&SymbolRecord::from(&s)).unwrap();
        let back: SymbolRecord = serde_json::from_str(&json).unwrap();
        let t = PolyhomSymbol::try_from(&back).unwrap();
        assert_eq!(t.tracked_dist(&s), 0.0);
        assert_eq!(t.zero_mode(), s.zero_mode());
        assert_eq!(t.corrections(), s.corrections());
    }
}
