//! Folding a d-order tensor into a d'-order tensor with short modes.
//!
//! Each original mode length is covered by an ordered product of small factors
//! `n[k][l]` (one row per original mode, one column per folded mode). An original
//! coordinate `i_k` is written in the mixed radix `n[k][0..d']` (last digit
//! fastest), and folded coordinate `l` interleaves the `l`-th digits of every
//! original mode, again last mode fastest. Cells of the folded box whose
//! preimage falls outside the original dims are padding and carry no data.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{row_major_strides, DenseTensor};

/// Largest factor allowed in a folding matrix.
pub const MAX_FACTOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldingSpec {
    dims: Vec<usize>,
    factors: Vec<Vec<usize>>,
    folded_dims: Vec<usize>,
    padded_dims: Vec<usize>,
    /// `digit_place[k·d' + l] = ∏_{m>l} n[k][m]`
    digit_place: Vec<usize>,
    /// `col_weight[k·d' + l] = ∏_{m>k} n[m][l]`
    col_weight: Vec<usize>,
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// `rest / place`, leaving the remainder in `rest`. Digits are below
/// `MAX_FACTOR`, so a branch-free count of comparisons replaces the divide.
#[inline]
fn leading_digit(rest: &mut usize, place: usize) -> usize {
    let r = *rest;
    let digit = (1..MAX_FACTOR).map(|m| usize::from(r >= m * place)).sum::<usize>();
    *rest = r - digit * place;
    digit
}

/// Exponents (a, b, c) with `m = 2^a 3^b 5^c`, or `None` if m has another prime factor.
fn smooth_exponents(mut m: usize) -> Option<(usize, usize, usize)> {
    let mut e = [0usize; 3];
    for (slot, p) in [2usize, 3, 5].into_iter().enumerate() {
        while m.is_multiple_of(p) {
            m /= p;
            e[slot] += 1;
        }
    }
    (m == 1).then_some((e[0], e[1], e[2]))
}

/// Factors for one mode: the smallest product ≥ `n` built from `slots` factors in
/// 1..=5, using as many 2s as possible. Layout: 2s, then 3s, 4s, 5s, then trailing 1s.
fn mode_factors(n: usize, slots: usize) -> Vec<usize> {
    let mut m = n.max(1);
    loop {
        if let Some((a, b, c)) = smooth_exponents(m) {
            // Merge pairs of 2s into 4s only as far as needed to fit the slots.
            let fours = (a + b + c).saturating_sub(slots);
            if fours <= a / 2 {
                let twos = a - 2 * fours;
                let mut row = Vec::with_capacity(slots);
                row.extend(std::iter::repeat_n(2, twos));
                row.extend(std::iter::repeat_n(3, b));
                row.extend(std::iter::repeat_n(4, fours));
                row.extend(std::iter::repeat_n(5, c));
                row.resize(slots, 1);
                return row;
            }
        }
        m += 1;
    }
}

impl FoldingSpec {
    /// Chooses a folding for `dims` automatically.
    ///
    /// The folded order is `ceil(log2 N_max)`, raised to at least 2 and to `d + 1`.
    pub fn auto(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Argument(format!("cannot fold dims {dims:?}")));
        }
        let n_max = dims.iter().copied().max().unwrap();
        let d_prime = ceil_log2(n_max).max(2).max(dims.len() + 1);
        let factors = dims.iter().map(|&n| mode_factors(n, d_prime)).collect();
        Self::from_factors(dims, factors)
    }

    /// Uses a hand-written `d × d'` factor matrix.
    pub fn from_factors(dims: &[usize], factors: Vec<Vec<usize>>) -> Result<Self> {
        let d = dims.len();
        if d == 0 || factors.len() != d {
            return Err(Error::Argument(format!(
                "factor matrix has {} rows for a tensor of order {d}",
                factors.len()
            )));
        }
        let d_prime = factors[0].len();
        if d_prime < 2 || d_prime <= d {
            return Err(Error::Argument(format!(
                "folded order {d_prime} must be at least 2 and greater than {d}"
            )));
        }
        for (k, row) in factors.iter().enumerate() {
            if row.len() != d_prime {
                return Err(Error::Argument(format!(
                    "factor matrix row {k} has {} entries, expected {d_prime}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&f| f == 0 || f > MAX_FACTOR) {
                return Err(Error::Argument(format!(
                    "factor {bad} in row {k} outside 1..={MAX_FACTOR}"
                )));
            }
        }
        let padded_dims: Vec<usize> = factors.iter().map(|r| r.iter().product()).collect();
        for (k, (&p, &n)) in padded_dims.iter().zip(dims).enumerate() {
            if p < n {
                return Err(Error::Argument(format!(
                    "factors of mode {k} cover {p} indices, mode has {n}"
                )));
            }
        }
        let folded_dims: Vec<usize> = (0..d_prime)
            .map(|l| factors.iter().map(|r| r[l]).product())
            .collect();
        let digit_place = factors.iter().flat_map(|r| row_major_strides(r)).collect();
        let col_weight = (0..d)
            .flat_map(|k| (0..d_prime).map(move |l| (k, l)))
            .map(|(k, l)| factors[k + 1..].iter().map(|r| r[l]).product())
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            factors,
            folded_dims,
            padded_dims,
            digit_place,
            col_weight,
        })
    }

    /// Parses an override file: one row of whitespace-separated factors per mode.
    pub fn parse_matrix(text: &str) -> Result<Vec<Vec<usize>>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split_whitespace()
                    .map(|tok| {
                        tok.parse::<usize>()
                            .map_err(|e| Error::Argument(format!("bad factor {tok:?}: {e}")))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_matrix_text(&self) -> String {
        let mut s = String::new();
        for row in &self.factors {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn folded_order(&self) -> usize {
        self.folded_dims.len()
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.factors
    }

    pub fn folded_dims(&self) -> &[usize] {
        &self.folded_dims
    }

    pub fn padded_dims(&self) -> &[usize] {
        &self.padded_dims
    }

    pub fn folded_len(&self) -> usize {
        self.folded_dims.iter().product()
    }

    /// Folds a coordinate inside the padded box without bounds checks.
    #[inline]
    pub fn fold_into(&self, idx: &[usize], out: &mut [usize]) {
        let dp = out.len();
        out.fill(0);
        for (k, &i) in idx.iter().enumerate() {
            let mut rest = i;
            let places = &self.digit_place[k * dp..(k + 1) * dp];
            let weights = &self.col_weight[k * dp..(k + 1) * dp];
            for ((o, &place), &weight) in out.iter_mut().zip(places).zip(weights) {
                *o += leading_digit(&mut rest, place) * weight;
            }
        }
    }

    #[inline]
    pub fn unfold_into(&self, fidx: &[usize], out: &mut [usize]) {
        let dp = fidx.len();
        out.fill(0);
        for (l, &f) in fidx.iter().enumerate() {
            let mut rest = f;
            for (k, o) in out.iter_mut().enumerate() {
                let at = k * dp + l;
                *o += leading_digit(&mut rest, self.col_weight[at]) * self.digit_place[at];
            }
        }
    }

    pub fn fold_index(&self, idx: &[usize]) -> Result<Vec<usize>> {
        check_box(idx, &self.padded_dims, "padded")?;
        let mut out = vec![0; self.folded_order()];
        self.fold_into(idx, &mut out);
        Ok(out)
    }

    /// Inverse of [`fold_index`](Self::fold_index). The result may lie in the
    /// padded region beyond the original dims.
    pub fn unfold_index(&self, fidx: &[usize]) -> Result<Vec<usize>> {
        check_box(fidx, &self.folded_dims, "folded")?;
        let mut out = vec![0; self.order()];
        self.unfold_into(fidx, &mut out);
        Ok(out)
    }

    pub fn is_padding(&self, fidx: &[usize]) -> Result<bool> {
        let idx = self.unfold_index(fidx)?;
        Ok(idx.iter().zip(&self.dims).any(|(i, n)| i >= n))
    }

    /// Materializes the folded tensor, filling padding cells with `fill`.
    /// Returns the values (row-major over `folded_dims`, whose order may exceed
    /// the dense tensor limit) and a mask that is `true` on real cells.
    pub fn fold_tensor(&self, t: &DenseTensor, fill: f64) -> Result<(Vec<f64>, Vec<bool>)> {
        if t.dims() != self.dims {
            return Err(Error::Argument(format!(
                "folding spec for {:?} applied to tensor with dims {:?}",
                self.dims,
                t.dims()
            )));
        }
        let strides = row_major_strides(&self.folded_dims);
        let mut values = vec![fill; self.folded_len()];
        let mut mask = vec![false; values.len()];
        let mut idx = vec![0; self.order()];
        let mut fidx = vec![0; self.folded_order()];
        for (flat, &v) in t.values().iter().enumerate() {
            t.unravel_into(flat, &mut idx);
            self.fold_into(&idx, &mut fidx);
            let off: usize = fidx.iter().zip(&strides).map(|(a, b)| a * b).sum();
            values[off] = v;
            mask[off] = true;
        }
        Ok((values, mask))
    }
}

fn check_box(idx: &[usize], dims: &[usize], what: &str) -> Result<()> {
    if idx.len() != dims.len() {
        return Err(Error::Index(format!(
            "index has {} coordinates, {what} box has {}",
            idx.len(),
            dims.len()
        )));
    }
    if let Some(k) = (0..idx.len()).find(|&k| idx[k] >= dims[k]) {
        return Err(Error::Index(format!(
            "coordinate {} out of {what} bounds {} in mode {k}",
            idx[k], dims[k]
        )));
    }
    Ok(())
}
