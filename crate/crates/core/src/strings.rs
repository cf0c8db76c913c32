//! Labelled character strings, their concatenation and the two pair products.
//!
//! A character is a 1-based position together with the tag of the string
//! instance it was created in, so equal-looking strings from different
//! instances never collide. Pairs are stored ordered, exactly as the pair
//! products generate them, and compared through an unordered key.

use std::collections::HashMap;

use crate::error::{LqtError, Result};
use crate::qmath::check_permutation;

/// Identifies the string instance a character belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Char {
    pub tag: Tag,
    /// 1-based position inside the parent string.
    pub pos: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct LabelledString {
    chars: Vec<Char>,
}

impl LabelledString {
    /// Characters `1_tag, …, len_tag`.
    pub fn new(len: usize, tag: Tag) -> Self {
        LabelledString { chars: (1..=len).map(|pos| Char { tag, pos }).collect() }
    }

    pub fn empty() -> Self {
        LabelledString::default()
    }

    pub fn from_chars(chars: Vec<Char>) -> Self {
        LabelledString { chars }
    }

    pub fn chars(&self) -> &[Char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// `a ⊞ b`.
pub fn concat(a: &LabelledString, b: &LabelledString) -> LabelledString {
    LabelledString { chars: a.chars.iter().chain(&b.chars).copied().collect() }
}

/// Unordered pair key; the smaller character comes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey(pub Char, pub Char);

impl PairKey {
    pub fn new(a: Char, b: Char) -> Self {
        if a <= b {
            PairKey(a, b)
        } else {
            PairKey(b, a)
        }
    }

    pub fn contains(&self, c: Char) -> bool {
        self.0 == c || self.1 == c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PairString {
    pairs: Vec<(Char, Char)>,
}

impl PairString {
    pub fn from_pairs(pairs: Vec<(Char, Char)>) -> Self {
        PairString { pairs }
    }

    pub fn pairs(&self) -> &[(Char, Char)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = PairKey> + '_ {
        self.pairs.iter().map(|&(a, b)| PairKey::new(a, b))
    }

    pub fn concat(&self, other: &PairString) -> PairString {
        PairString { pairs: self.pairs.iter().chain(&other.pairs).copied().collect() }
    }
}

/// `n × m`: every `(i_n, j_m)`, lexicographic in `(i, j)`.
pub fn times(n: &LabelledString, m: &LabelledString) -> PairString {
    let pairs = n.chars.iter().flat_map(|&i| m.chars.iter().map(move |&j| (i, j))).collect();
    PairString { pairs }
}

/// `n ⊙ n`: every `(i_n, j_n)` with `j < i`, ordered by `i` then `j`.
pub fn odot(n: &LabelledString) -> PairString {
    let pairs = n.chars.iter().enumerate().flat_map(|(i, &ci)| n.chars[..i].iter().map(move |&cj| (ci, cj))).collect();
    PairString { pairs }
}

/// Positional permutation between two pair strings with the same unordered content.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairPermutation {
    /// Pair `i` of the source lands at slot `perm[i]` of the target.
    pub perm: Vec<usize>,
    /// Whether the target stores pair `i` with its entries exchanged.
    pub flipped: Vec<bool>,
}

impl PairPermutation {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Reorders `items` (indexed like the source) into target order.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        let mut out: Vec<Option<T>> = vec![None; items.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = Some(items[i].clone());
        }
        out.into_iter().map(|x| x.expect("bijection")).collect()
    }
}

/// Matches `from` onto `to` through unordered pair keys.
pub fn match_pairs(from: &PairString, to: &PairString) -> Result<PairPermutation> {
    if from.len() != to.len() {
        return Err(LqtError::InvalidPermutation(format!(
            "pair strings of length {} and {} cannot be matched",
            from.len(),
            to.len()
        )));
    }
    let slots: HashMap<PairKey, usize> = to.keys().enumerate().map(|(i, k)| (k, i)).collect();
    if slots.len() != to.len() {
        return Err(LqtError::InvalidPermutation("target pair string repeats a pair".into()));
    }
    let mut perm = Vec::with_capacity(from.len());
    let mut flipped = Vec::with_capacity(from.len());
    for &(a, b) in from.pairs() {
        let slot = *slots
            .get(&PairKey::new(a, b))
            .ok_or_else(|| LqtError::InvalidPermutation(format!("pair {a:?},{b:?} missing from target")))?;
        perm.push(slot);
        flipped.push(to.pairs()[slot] != (a, b));
    }
    check_permutation(&perm, from.len())?;
    Ok(PairPermutation { perm, flipped })
}

/// `(n ⊞ e)^⊙2 ≅ (e ⊙ e) ⊞ (e × n) ⊞ (n ⊙ n)`.
///
/// Cross pairs of the left side pair a later `e` character with an earlier
/// `n` character, which is already the orientation `e × n` uses, so no pair
/// is flipped.
pub fn odot_decomposition_perm(n: &LabelledString, e: &LabelledString) -> PairPermutation {
    let lhs = odot(&concat(n, e));
    let rhs = odot(e).concat(&times(e, n)).concat(&odot(n));
    match_pairs(&lhs, &rhs).expect("both sides hold the same unordered pairs")
}

/// `n1 × n2 ≅ n2 × n1`; every pair is flipped.
pub fn times_symmetry_perm(n1: &LabelledString, n2: &LabelledString) -> PairPermutation {
    match_pairs(&times(n1, n2), &times(n2, n1)).expect("same unordered pairs")
}

/// `e × (n1 ⊞ n2) ≅ e × (n2 ⊞ n1)`.
pub fn boxplus_symmetry_perm(e: &LabelledString, n1: &LabelledString, n2: &LabelledString) -> PairPermutation {
    match_pairs(&times(e, &concat(n1, n2)), &times(e, &concat(n2, n1))).expect("same unordered pairs")
}
