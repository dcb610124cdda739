//! Circular (ECFP-style) fingerprints and Tanimoto similarity.
//!
//! Identifiers are 64-bit FNV-1a hashes over a fixed byte encoding, so a
//! fingerprint is bit-identical on every platform. Changing the encoding
//! requires bumping [`FORMAT_VERSION`].

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::molgraph::MolGraph;

pub const FORMAT_VERSION: &str = "ecfp:v1";
pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_WIDTH: usize = 2048;
pub const MAX_RADIUS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
    #[error("width {0} is not a positive power of two")]
    InvalidWidth(usize),
    #[error("radius {0} exceeds the maximum of {MAX_RADIUS}")]
    RadiusTooLarge(u32),
    #[error("malformed fingerprint string: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    radius: u32,
    popcount: u32,
}

impl Fingerprint {
    pub fn empty(width: usize, radius: u32) -> Result<Fingerprint, FingerprintError> {
        if width == 0 || !width.is_power_of_two() {
            return Err(FingerprintError::InvalidWidth(width));
        }
        Ok(Fingerprint {
            words: vec![0; width.div_ceil(64)],
            width,
            radius,
            popcount: 0,
        })
    }

    pub fn set(&mut self, bit: usize) {
        let (w, b) = (bit / 64, bit % 64);
        let mask = 1u64 << b;
        if self.words[w] & mask == 0 {
            self.words[w] |= mask;
            self.popcount += 1;
        }
    }

    pub fn contains(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] & (1u64 << (bit % 64)) != 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.contains(b))
    }

    /// `ecfp:v1:<radius>:<width>:<hex>`; bytes are little-endian within each
    /// 64-bit word, so bit `i` lives in byte `i / 8` at position `i % 8`.
    pub fn to_hex_string(&self) -> String {
        let bytes: Vec<u8> = self
            .words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(self.width.div_ceil(8))
            .collect();
        format!("{FORMAT_VERSION}:{}:{}:{}", self.radius, self.width, hex::encode(bytes))
    }

    pub fn from_hex_string(s: &str) -> Result<Fingerprint, FingerprintError> {
        let malformed = |m: &str| FingerprintError::Malformed(m.to_string());
        let rest = s
            .strip_prefix(FORMAT_VERSION)
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(|| malformed("missing ecfp:v1 header"))?;
        let mut parts = rest.splitn(3, ':');
        let radius: u32 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| malformed("bad radius"))?;
        let width: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| malformed("bad width"))?;
        let payload = parts.next().ok_or_else(|| malformed("missing payload"))?;
        let bytes = hex::decode(payload).map_err(|e| malformed(&e.to_string()))?;
        let mut fp = Fingerprint::empty(width, radius)?;
        if bytes.len() != width.div_ceil(8) {
            return Err(malformed("payload length does not match width"));
        }
        for (i, byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte & (1 << bit) != 0 {
                    let idx = i * 8 + bit;
                    if idx >= width {
                        return Err(malformed("bit set beyond width"));
                    }
                    fp.set(idx);
                }
            }
        }
        Ok(fp)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex_string())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Per-atom identifiers for every radius `0..=radius`; `result[r][atom]`.
pub fn atom_identifiers(mol: &MolGraph, radius: u32) -> Vec<Vec<u64>> {
    let n = mol.atom_count();
    let initial: Vec<u64> = (0..n)
        .map(|i| {
            let a = &mol.atoms()[i];
            fnv1a64(&[
                0x00,
                a.element.atomic_number(),
                a.charge as u8,
                mol.degree(i).min(255) as u8,
                mol.hydrogen_count(i),
                a.aromatic as u8,
            ])
        })
        .collect();
    let mut rounds = vec![initial];
    let mut buf = Vec::new();
    for r in 1..=radius {
        let prev = rounds.last().unwrap();
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u8, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, b)| (mol.bonds()[b].order.code(), prev[nb]))
                    .collect();
                env.sort_unstable();
                buf.clear();
                buf.push(0x01);
                buf.push(r as u8);
                buf.extend_from_slice(&prev[i].to_le_bytes());
                for (code, id) in env {
                    buf.push(code);
                    buf.extend_from_slice(&id.to_le_bytes());
                }
                fnv1a64(&buf)
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

/// The unfolded identifier set of all atoms at all radii.
pub fn circular_identifiers(mol: &MolGraph, radius: u32) -> BTreeSet<u64> {
    atom_identifiers(mol, radius).into_iter().flatten().collect()
}

pub fn circular_fingerprint(
    mol: &MolGraph,
    radius: u32,
    width: usize,
) -> Result<Fingerprint, FingerprintError> {
    if radius > MAX_RADIUS {
        return Err(FingerprintError::RadiusTooLarge(radius));
    }
    let mut fp = Fingerprint::empty(width, radius)?;
    for id in atom_identifiers(mol, radius).into_iter().flatten() {
        fp.set((id % width as u64) as usize);
    }
    Ok(fp)
}

/// `|a ∩ b| / |a ∪ b|`, with two empty fingerprints defined as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.width != b.width {
        return Err(FingerprintError::WidthMismatch(a.width, b.width));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
