use std::collections::BTreeMap;

use super::{Atom, Bond, BondOrder, Element, MolGraph, SmilesError};

/// Parses a SMILES string into a [`MolGraph`].
///
/// Never panics; every malformed input yields a typed [`SmilesError`].
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    Parser::new(text).run()
}

#[derive(Clone, Copy)]
enum BondToken {
    Order(BondOrder),
    /// `/` or `\`: a single bond carrying discarded stereo.
    Directional,
}

struct OpenRing {
    atom: usize,
    bond: Option<BondToken>,
    position: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    pending: Option<(BondToken, usize)>,
    rings: BTreeMap<u32, OpenRing>,
    had_stereo: bool,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            branches: Vec::new(),
            pending: None,
            rings: BTreeMap::new(),
            had_stereo: false,
        }
    }

    fn syntax<T>(&self, position: usize, message: impl Into<String>) -> Result<T, SmilesError> {
        Err(SmilesError::Syntax {
            position,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(mut self) -> Result<MolGraph, SmilesError> {
        if self.bytes.is_empty() {
            return self.syntax(0, "empty SMILES");
        }
        // Set right after '(' or '.', cleared by the next atom.
        let mut expect_atom = true;
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return self.syntax(start, "branch opened before any atom");
                    };
                    if self.pending.is_some() {
                        return self.syntax(start, "bond symbol before branch");
                    }
                    self.branches.push((prev, start));
                    self.pos += 1;
                    expect_atom = true;
                }
                b')' => {
                    if expect_atom {
                        return self.syntax(start, "empty branch");
                    }
                    if self.pending.is_some() {
                        return self.syntax(start, "dangling bond at end of branch");
                    }
                    let Some((atom, _)) = self.branches.pop() else {
                        return self.syntax(start, "unmatched ')'");
                    };
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'.' => {
                    if expect_atom || self.pending.is_some() {
                        return self.syntax(start, "misplaced '.'");
                    }
                    self.prev = None;
                    self.pos += 1;
                    expect_atom = true;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() {
                        return self.syntax(start, "two consecutive bond symbols");
                    }
                    if self.prev.is_none() {
                        return self.syntax(start, "bond symbol without a preceding atom");
                    }
                    let token = match c {
                        b'-' => BondToken::Order(BondOrder::Single),
                        b'=' => BondToken::Order(BondOrder::Double),
                        b'#' => BondToken::Order(BondOrder::Triple),
                        b':' => BondToken::Order(BondOrder::Aromatic),
                        _ => {
                            self.had_stereo = true;
                            BondToken::Directional
                        }
                    };
                    self.pending = Some((token, start));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    if expect_atom {
                        return self.syntax(start, "ring closure before any atom");
                    }
                    let number = self.ring_number()?;
                    self.ring_bond(number, start)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom)?;
                    expect_atom = false;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom)?;
                    expect_atom = false;
                }
            }
        }

        let end = self.bytes.len();
        if let Some((_, position)) = self.pending {
            return self.syntax(position, "bond symbol at end of input");
        }
        if let Some(&(_, position)) = self.branches.last() {
            return self.syntax(position, "unclosed '('");
        }
        if expect_atom {
            return self.syntax(end, "input ends where an atom was expected");
        }
        if let Some((number, open)) = self.rings.iter().next() {
            return Err(SmilesError::RingClosure {
                position: open.position,
                message: format!("ring bond {number} never closed"),
            });
        }
        MolGraph::from_parts(self.atoms, self.bonds, self.text, self.had_stereo)
    }

    fn add_atom(&mut self, atom: Atom) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        let aromatic = atom.aromatic;
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let token = self.pending.take().map(|(t, _)| t);
            let order = resolve_order(token, self.atoms[prev].aromatic, aromatic);
            self.bonds.push(Bond {
                a: prev,
                b: idx,
                order,
            });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let start = self.pos;
        let c = self.bytes[self.pos];
        if c.is_ascii_digit() {
            self.pos += 1;
            return Ok((c - b'0') as u32);
        }
        // '%nn' or '%(n...)'
        self.pos += 1;
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let digits_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == digits_start || self.peek() != Some(b')') || self.pos - digits_start > 5 {
                return self.syntax(start, "malformed '%(n)' ring number");
            }
            let n = self.text[digits_start..self.pos].parse().unwrap_or(0);
            self.pos += 1;
            return Ok(n);
        }
        match (self.bytes.get(self.pos), self.bytes.get(self.pos + 1)) {
            (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                self.pos += 2;
                Ok(((a - b'0') * 10 + (b - b'0')) as u32)
            }
            _ => self.syntax(start, "'%' must be followed by two digits"),
        }
    }

    fn ring_bond(&mut self, number: u32, position: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return self.syntax(position, "ring closure without a current atom");
        };
        let token = self.pending.take().map(|(t, _)| t);
        match self.rings.remove(&number) {
            None => {
                self.rings.insert(
                    number,
                    OpenRing {
                        atom: current,
                        bond: token,
                        position,
                    },
                );
            }
            Some(open) => {
                let ring_err = |message: &str| {
                    Err(SmilesError::RingClosure {
                        position,
                        message: message.to_string(),
                    })
                };
                if open.atom == current {
                    return ring_err("ring bond closes on the atom that opened it");
                }
                let exists = self.bonds.iter().any(|b| {
                    (b.a == open.atom && b.b == current) || (b.a == current && b.b == open.atom)
                });
                if exists {
                    return ring_err("ring bond duplicates an existing bond");
                }
                let token = match (open.bond, token) {
                    (Some(a), Some(b)) => {
                        if !same_token(a, b) {
                            return ring_err("conflicting bond symbols on ring closure");
                        }
                        Some(a)
                    }
                    (a, b) => a.or(b),
                };
                let order = resolve_order(
                    token,
                    self.atoms[open.atom].aromatic,
                    self.atoms[current].aromatic,
                );
                self.bonds.push(Bond {
                    a: open.atom,
                    b: current,
                    order,
                });
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bytes[self.pos];
        let next = self.bytes.get(self.pos + 1).copied();
        let (element, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::CL, false, 2),
            (b'B', Some(b'r')) => (Element::BR, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => {
                let shown = self.text[start..].chars().next().unwrap_or('?');
                return self.syntax(start, format!("unexpected character '{shown}'"));
            }
        };
        self.pos += len;
        Ok(Atom::organic(element, aromatic))
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;

        let isotope = match self.number(4) {
            Some(0) => return self.syntax(open, "isotope must be positive"),
            other => other.map(|v| v as u16),
        };

        let (element, aromatic) = self.bracket_symbol(open)?;

        if self.peek() == Some(b'@') {
            self.had_stereo = true;
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else {
                let rest = &self.bytes[self.pos..];
                if [&b"TH"[..], b"AL", b"SP", b"TB", b"OH"]
                    .iter()
                    .any(|p| rest.starts_with(p))
                {
                    self.pos += 2;
                    if self.number(2).is_none() {
                        return self.syntax(open, "chirality class without a number");
                    }
                }
            }
        }

        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = match self.number(1) {
                Some(n) => n as u8,
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.number(2) {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
            if charge.abs() > 15 {
                return self.syntax(open, "charge out of range");
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            // Atom-map classes are accepted and dropped.
            if self.number(6).is_none() {
                return self.syntax(open, "atom class without a number");
            }
        }

        if self.peek() != Some(b']') {
            return self.syntax(open, "unterminated or malformed bracket atom");
        }
        self.pos += 1;

        Ok(Atom {
            element,
            charge: charge as i8,
            explicit_h: Some(hydrogens),
            aromatic,
            isotope,
        })
    }

    fn bracket_symbol(&mut self, open: usize) -> Result<(Element, bool), SmilesError> {
        let Some(c) = self.peek() else {
            return self.syntax(open, "unterminated bracket atom");
        };
        if c.is_ascii_uppercase() {
            if let Some(l) = self.bytes.get(self.pos + 1).filter(|b| b.is_ascii_lowercase()) {
                let two = [c, *l];
                if let Some(e) = std::str::from_utf8(&two).ok().and_then(Element::from_symbol) {
                    self.pos += 2;
                    return Ok((e, false));
                }
            }
            let one = [c];
            if let Some(e) = std::str::from_utf8(&one).ok().and_then(Element::from_symbol) {
                self.pos += 1;
                return Ok((e, false));
            }
            return self.syntax(open, "unknown element symbol");
        }
        if c.is_ascii_lowercase() {
            let upper = [c.to_ascii_uppercase()];
            let e = std::str::from_utf8(&upper).ok().and_then(Element::from_symbol);
            if let Some(e) = e.filter(|e| e.can_be_aromatic()) {
                let follow = self.bytes.get(self.pos + 1).copied();
                // "se" and "as" are aromatic in some dialects; not supported here.
                if matches!((c, follow), (b's', Some(b'e')) | (b'a', Some(b's'))) {
                    return self.syntax(open, "aromatic flag not supported for this element");
                }
                self.pos += 1;
                return Ok((e, true));
            }
            return self.syntax(open, "aromatic flag not supported for this element");
        }
        self.syntax(open, "expected element symbol")
    }

    /// Reads up to `max_digits` decimal digits.
    fn number(&mut self, max_digits: usize) -> Option<u32> {
        let start = self.pos;
        while self.pos - start < max_digits && self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].parse().unwrap_or(0))
    }
}

fn same_token(a: BondToken, b: BondToken) -> bool {
    match (a, b) {
        (BondToken::Order(x), BondToken::Order(y)) => x == y,
        (BondToken::Directional, BondToken::Directional) => true,
        (BondToken::Directional, BondToken::Order(o)) | (BondToken::Order(o), BondToken::Directional) => {
            o == BondOrder::Single
        }
    }
}

fn resolve_order(token: Option<BondToken>, a_aromatic: bool, b_aromatic: bool) -> BondOrder {
    match token {
        Some(BondToken::Order(o)) => o,
        Some(BondToken::Directional) => BondOrder::Single,
        None if a_aromatic && b_aromatic => BondOrder::Aromatic,
        None => BondOrder::Single,
    }
}
