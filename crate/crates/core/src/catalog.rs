//! Named fixture states.
//!
//! Kets are 0-based: `GHZ3` is `|000⟩ + |111⟩ + |222⟩`. Parametric names:
//! `GHZ{d}` (three parties), `GHZ{d}x{N}`, `phi{d}_{j}_{N}` for the
//! `R(d‖d−1,d,…,d)` family.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::{ghz, PureState};
use crate::structure::family_member_d_minus_1;
use crate::C64;

/// Expected invariants used by the self-test.
#[derive(Clone, Debug, Serialize)]
pub struct Expected {
    pub rank: Option<usize>,
    pub local_ranks: Vec<usize>,
    /// 0-based blocks.
    pub partition: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    pub expected: Option<Expected>,
}

fn kets(dims: &[usize], k: &[&str]) -> PureState {
    PureState::from_kets(dims.to_vec(), k).expect("valid fixture")
}

fn theta08() -> PureState {
    PureState::from_terms(vec![2, 2], &[(vec![0, 0], C64::new(0.8, 0.0)), (vec![1, 1], C64::new(0.6, 0.0))])
        .expect("valid fixture")
}

fn tgp10() -> PureState {
    // |000⟩ + (|0⟩+|1⟩)^{⊗3}
    let mut amps = vec![C64::new(1.0, 0.0); 8];
    amps[0] = C64::new(2.0, 0.0);
    PureState::new(vec![2, 2, 2], amps).expect("valid fixture")
}

fn parse_ghz(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("GHZ")?;
    let (d, n) = match rest.split_once('X') {
        Some((d, n)) => (d.parse().ok()?, n.parse().ok()?),
        None => (rest.parse().ok()?, 3),
    };
    Some((d, n))
}

fn parse_phi(name: &str) -> Option<(usize, usize, usize)> {
    let rest = name.strip_prefix("phi")?;
    let mut parts = rest.split('_').map(|p| p.parse::<usize>().ok());
    let d = parts.next()??;
    let j = parts.next()??;
    let n = parts.next()??;
    if parts.next().is_some() {
        return None;
    }
    Some((d, j, n))
}

/// Builds a catalog state by name (case-insensitive for fixed names).
pub fn build(name: &str) -> Result<PureState> {
    let s = match name.to_ascii_lowercase().as_str() {
        "w" => kets(&[2, 2, 2], &["001", "010", "100"]),
        "psi1" => kets(&[2, 3, 3], &["000", "111", "022", "122"]),
        "psi2" => kets(&[2, 3, 3], &["010", "001", "112", "121"]),
        "psi3" => kets(&[2, 3, 3], &["000", "111", "022"]),
        "psi4" => kets(&[2, 3, 3], &["100", "010", "001", "112", "121"]),
        "psi5" => kets(&[2, 3, 3], &["100", "010", "001", "022"]),
        "psi6" => kets(&[2, 3, 3], &["100", "010", "001", "122"]),
        "fig1" => kets(&[2, 4, 2, 2], &["0000", "0110", "1200", "1310", "0001", "0111", "1201", "1311"]),
        "tgp10" => tgp10(),
        "theta08" => theta08(),
        "bell" => ghz(2, 2),
        "incomp224" => kets(&[2, 2, 4], &["000", "011", "102", "113"]),
        "ghz2sq" => {
            let g = ghz(2, 3);
            g.tensor_product(&g, Some(&[0, 1, 2]))?
        }
        "bell12" => kets(&[2, 2, 2], &["000", "110"]),
        "bell23" => kets(&[2, 2, 2], &["000", "011"]),
        "prod3" => kets(&[2, 2, 2], &["000"]),
        _ => {
            let upper = name.to_ascii_uppercase();
            if let Some((d, n)) = parse_ghz(&upper) {
                if d < 1 || n < 1 || d.pow(n.min(20) as u32) > 1 << 22 {
                    return Err(Error::InvalidParameter(format!("catalog entry {name}: size out of range")));
                }
                ghz(d, n)
            } else if let Some((d, j, n)) = parse_phi(&name.to_ascii_lowercase()) {
                family_member_d_minus_1(d, j, n)?
            } else {
                return Err(Error::InvalidParameter(format!("unknown catalog entry {name:?}")));
            }
        }
    };
    Ok(s)
}

fn entry(name: &str, description: &str, rank: Option<usize>, local: &[usize], partition: &[&[usize]]) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        description: description.into(),
        expected: Some(Expected {
            rank,
            local_ranks: local.to_vec(),
            partition: partition.iter().map(|b| b.to_vec()).collect(),
        }),
    }
}

/// Fixed entries listed by the `catalog` command and used for the grid checks.
pub fn entries() -> Vec<CatalogEntry> {
    let all3: &[&[usize]] = &[&[0, 1, 2]];
    vec![
        entry("GHZ2", "|000⟩+|111⟩", Some(2), &[2, 2, 2], all3),
        entry("GHZ3", "|000⟩+|111⟩+|222⟩", Some(3), &[3, 3, 3], all3),
        entry("GHZ2x4", "four-qubit GHZ", Some(2), &[2, 2, 2, 2], &[&[0, 1, 2, 3]]),
        entry("W", "|001⟩+|010⟩+|100⟩", Some(3), &[2, 2, 2], all3),
        entry("Psi1", "|000⟩+|111⟩+(|0⟩+|1⟩)|22⟩", Some(3), &[2, 3, 3], all3),
        entry("Psi2", "|010⟩+|001⟩+|112⟩+|121⟩", Some(4), &[2, 3, 3], all3),
        entry("Psi3", "|000⟩+|111⟩+|022⟩", Some(3), &[2, 3, 3], all3),
        entry("Psi4", "|100⟩+|010⟩+|001⟩+|112⟩+|121⟩", Some(4), &[2, 3, 3], all3),
        entry("Psi5", "|100⟩+|010⟩+|001⟩+|022⟩", Some(4), &[2, 3, 3], all3),
        entry("Psi6", "|100⟩+|010⟩+|001⟩+|122⟩", Some(4), &[2, 3, 3], all3),
        entry(
            "fig1",
            "|0000⟩+|0110⟩+|1200⟩+|1310⟩+|0001⟩+|0111⟩+|1201⟩+|1311⟩",
            Some(4),
            &[2, 4, 2, 1],
            &[&[0, 1, 2], &[3]],
        ),
        entry("tgp10", "|000⟩+(|0⟩+|1⟩)(|0⟩+|1⟩)(|0⟩+|1⟩)", Some(2), &[2, 2, 2], all3),
        entry("theta08", "0.8|00⟩+0.6|11⟩", Some(2), &[2, 2], &[&[0, 1]]),
        entry("Bell", "|00⟩+|11⟩", Some(2), &[2, 2], &[&[0, 1]]),
        entry("incomp224", "|000⟩+|011⟩+|102⟩+|113⟩", Some(4), &[2, 2, 4], all3),
        entry("GHZ2sq", "GHZ2 ⊗ GHZ2 with each party holding both copies", Some(4), &[4, 4, 4], all3),
        entry("Bell12", "(|00⟩+|11⟩)|0⟩", Some(2), &[2, 2, 1], &[&[0, 1], &[2]]),
        entry("Bell23", "|0⟩(|00⟩+|11⟩)", Some(2), &[1, 2, 2], &[&[0], &[1, 2]]),
        entry("prod3", "|000⟩", Some(1), &[1, 1, 1], &[&[0], &[1], &[2]]),
        entry("phi3_1_3", "|000⟩+|111⟩+|022⟩ family member j=1", Some(3), &[2, 3, 3], all3),
        entry("phi3_2_3", "|000⟩+|111⟩+|022⟩+|122⟩ family member j=2", Some(3), &[2, 3, 3], all3),
        entry("phi3_1_4", "four-party family member d=3, j=1", Some(3), &[2, 3, 3, 3], &[&[0, 1, 2, 3]]),
    ]
}

/// Catalog name of a state that matches an entry exactly after normalization.
pub fn recognize(s: &PureState, candidates: &[&str]) -> Option<String> {
    candidates.iter().find_map(|&name| {
        let c = build(name).ok()?;
        if c.dims() != s.dims() {
            return None;
        }
        let (a, b) = (c.normalized(), s.normalized());
        let close = a.amps().iter().zip(b.amps()).all(|(x, y)| (x - y).norm() < 1e-12);
        close.then(|| name.to_string())
    })
}

/// Pairs `(src, dst)` known not to be LOCC convertible.
pub const LOCC_COUNTEREXAMPLES: &[(&str, &str)] = &[("GHZ2", "tgp10")];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds() {
        for e in entries() {
            let s = build(&e.name).unwrap();
            let exp = e.expected.unwrap();
            assert_eq!(s.parties(), exp.local_ranks.len(), "{}", e.name);
        }
    }

    #[test]
    fn parametric_names() {
        assert_eq!(build("GHZ5").unwrap().dims(), &[5, 5, 5]);
        assert_eq!(build("GHZ2x3").unwrap(), build("GHZ2").unwrap());
        assert_eq!(build("ghz3x4").unwrap().dims(), &[3, 3, 3, 3]);
        assert_eq!(build("phi4_2_3").unwrap().dims(), &[3, 4, 4]);
        assert!(build("nonsense").is_err());
        assert!(build("phi3_3_3").is_err());
    }

    #[test]
    fn recognition_is_exact() {
        let s = build("tgp10").unwrap().scaled(C64::new(3.0, 0.0));
        assert_eq!(recognize(&s, &["GHZ2", "tgp10"]).as_deref(), Some("tgp10"));
        assert_eq!(recognize(&build("W").unwrap(), &["GHZ2", "tgp10"]), None);
    }
}
