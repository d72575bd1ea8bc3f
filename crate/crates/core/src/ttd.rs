//! Classical tensor-train decomposition by sequential truncated SVDs.
//!
//! Cores are stored as `(r_{k-1}, N_k, r_k)` row-major with `r_0 = r_d = 1`.
//! The `.tctt` layout (little-endian): magic `TCTT`, u16 version = 1, u16 d,
//! d u64 dims, d+1 u64 ranks, then the cores back to back as binary64.

use nalgebra::DMatrix;

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::folding::FoldingSpec;
use crate::tensor::{mean_std, DenseTensor};

pub const TCTT_MAGIC: &[u8; 4] = b"TCTT";
pub const TCTT_VERSION: u16 = 1;

/// Truncation rule for [`tt_svd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TtTarget {
    /// Every internal rank at most this value.
    MaxRank(usize),
    /// Relative Frobenius error at most this value.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtCores {
    dims: Vec<usize>,
    ranks: Vec<usize>,
    cores: Vec<Vec<f64>>,
}

/// SVD with singular values in descending order and the largest-magnitude
/// entry of every left singular vector made positive.
struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v_t: DMatrix<f64>,
}

fn svd(m: DMatrix<f64>) -> Svd {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out_u = DMatrix::zeros(u.nrows(), order.len());
    let mut out_vt = DMatrix::zeros(order.len(), v_t.ncols());
    let mut s = Vec::with_capacity(order.len());
    for (c, &o) in order.iter().enumerate() {
        let col = u.column(o);
        let pivot = col.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        out_u.set_column(c, &(col * sign));
        out_vt.set_row(c, &(v_t.row(o) * sign));
        s.push(svd.singular_values[o]);
    }
    Svd { u: out_u, s, v_t: out_vt }
}

/// TT-SVD of a row-major array with the given dims.
pub fn tt_svd_values(dims: &[usize], values: &[f64], target: TtTarget) -> Result<TtCores> {
    match target {
        TtTarget::MaxRank(r) if r < 1 => return Err(Error::Argument("TT rank must be at least 1".into())),
        TtTarget::Tolerance(e) if !(e > 0.0) => {
            return Err(Error::Argument(format!("TT tolerance {e} must be positive")))
        }
        _ => {}
    }
    let d = dims.len();
    if d == 0 || dims.contains(&0) || dims.iter().product::<usize>() != values.len() {
        return Err(Error::Argument(format!("{} values do not fill dims {dims:?}", values.len())));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta2 = match target {
        TtTarget::Tolerance(e) if d > 1 => (e * norm).powi(2) / (d - 1) as f64,
        _ => 0.0,
    };
    let mut ranks = vec![1usize; d + 1];
    let mut cores = Vec::with_capacity(d);
    let mut rest: Vec<f64> = values.to_vec();
    let mut cols = values.len();
    for k in 0..d - 1 {
        let rows = ranks[k] * dims[k];
        cols /= dims[k];
        let f = svd(DMatrix::from_row_slice(rows, cols, &rest));
        let full = f.s.len();
        let r = match target {
            TtTarget::MaxRank(max) => max.min(full),
            TtTarget::Tolerance(_) => {
                // Smallest r whose discarded energy fits in delta².
                let mut tail = 0.0;
                let mut r = full;
                while r > 1 && tail + f.s[r - 1] * f.s[r - 1] <= delta2 {
                    tail += f.s[r - 1] * f.s[r - 1];
                    r -= 1;
                }
                r
            }
        };
        ranks[k + 1] = r;
        let mut core = Vec::with_capacity(rows * r);
        for a in 0..rows {
            for c in 0..r {
                core.push(f.u[(a, c)]);
            }
        }
        cores.push(core);
        rest = Vec::with_capacity(r * cols);
        for c in 0..r {
            for b in 0..cols {
                rest.push(f.s[c] * f.v_t[(c, b)]);
            }
        }
    }
    cores.push(rest);
    Ok(TtCores {
        dims: dims.to_vec(),
        ranks,
        cores,
    })
}

pub fn tt_svd(t: &DenseTensor, target: TtTarget) -> Result<TtCores> {
    tt_svd_values(t.dims(), t.values(), target)
}

impl TtCores {
    /// Builds cores from parts, checking every shape.
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, cores: Vec<Vec<f64>>) -> Result<Self> {
        let d = dims.len();
        if d == 0 || ranks.len() != d + 1 || cores.len() != d || ranks[0] != 1 || ranks[d] != 1 {
            return Err(Error::Argument(format!("inconsistent TT shapes: dims {dims:?}, ranks {ranks:?}")));
        }
        for k in 0..d {
            if dims[k] == 0 || ranks[k] == 0 || cores[k].len() != ranks[k] * dims[k] * ranks[k + 1] {
                return Err(Error::Argument(format!("core {k} has the wrong size")));
            }
        }
        Ok(Self { dims, ranks, cores })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn cores(&self) -> &[Vec<f64>] {
        &self.cores
    }

    /// `Σ_k r_{k-1}·N_k·r_k`.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    /// Entry at `idx` as the product `G_1[:, i_1, :] · .. · G_d[:, i_d, :]`.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.dims.len() || idx.iter().zip(&self.dims).any(|(i, n)| i >= n) {
            return Err(Error::Index(format!("index {idx:?} out of bounds for dims {:?}", self.dims)));
        }
        let mut v = vec![1.0];
        for (k, &i) in idx.iter().enumerate() {
            let (r0, n, r1) = (self.ranks[k], self.dims[k], self.ranks[k + 1]);
            let core = &self.cores[k];
            let mut next = vec![0.0; r1];
            for (a, &va) in v.iter().enumerate().take(r0) {
                let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                for (o, &g) in next.iter_mut().zip(row) {
                    *o += va * g;
                }
            }
            v = next;
        }
        Ok(v[0])
    }

    /// All entries, row-major, by contracting the cores left to right.
    pub fn full_values(&self) -> Vec<f64> {
        // acc is (∏_{m<k} N_m) × r_k, row-major.
        let mut acc = vec![1.0];
        let mut lead = 1usize;
        for k in 0..self.dims.len() {
            let (r0, n, r1) = (self.ranks[k], self.dims[k], self.ranks[k + 1]);
            let core = &self.cores[k];
            let mut next = vec![0.0; lead * n * r1];
            for p in 0..lead {
                for a in 0..r0 {
                    let w = acc[p * r0 + a];
                    if w == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let src = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                        let dst = &mut next[(p * n + i) * r1..(p * n + i + 1) * r1];
                        for (o, &g) in dst.iter_mut().zip(src) {
                            *o += w * g;
                        }
                    }
                }
            }
            acc = next;
            lead *= n;
        }
        acc
    }

    pub fn reconstruct_full(&self) -> Result<DenseTensor> {
        DenseTensor::new(self.dims.clone(), self.full_values())
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.dims.len() + 8 + 8 * self.param_count());
        out.extend_from_slice(TCTT_MAGIC);
        out.extend_from_slice(&TCTT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for &n in &self.dims {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for &r in &self.ranks {
            out.extend_from_slice(&(r as u64).to_le_bytes());
        }
        for v in self.cores.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(TCTT_MAGIC)?;
        let at = r.offset();
        let version = r.u16("version")?;
        if version != TCTT_VERSION {
            return Err(Error::format(at, format!("unsupported .tctt version {version}")));
        }
        let at = r.offset();
        let d = r.u16("order")? as usize;
        if d == 0 {
            return Err(Error::format(at, "order 0"));
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(r.length("mode length", u32::MAX as u64)?);
        }
        let mut ranks = Vec::with_capacity(d + 1);
        for _ in 0..=d {
            ranks.push(r.length("rank", u32::MAX as u64)?);
        }
        let at = r.offset();
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let len = ranks[k]
                .checked_mul(dims[k])
                .and_then(|x| x.checked_mul(ranks[k + 1]))
                .filter(|&x| x.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::format(r.offset(), format!("truncated core {k}")))?;
            let mut core = Vec::with_capacity(len);
            for _ in 0..len {
                core.push(r.f64("core value")?);
            }
            cores.push(core);
        }
        r.finish()?;
        Self::new(dims, ranks, cores).map_err(|e| Error::format(at, e.to_string()))
    }
}

/// Parameter count of a rank-`r` TT of `dims`, with ranks capped by the unfolding sizes.
pub fn tt_param_count(dims: &[usize], r: usize) -> usize {
    let d = dims.len();
    let total: usize = dims.iter().product();
    let mut ranks = vec![1usize; d + 1];
    let mut left = 1usize;
    for k in 0..d - 1 {
        left *= dims[k];
        ranks[k + 1] = r.min(left).min(total / left).min(ranks[k] * dims[k]);
    }
    (0..d).map(|k| ranks[k] * dims[k] * ranks[k + 1]).sum()
}

/// Result of a plain TT-SVD on the folded tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantN {
    pub cores: TtCores,
    pub rank: usize,
    /// Fitness on the real (non-padding) cells, in original units.
    pub fitness: f64,
}

/// Standardizes `t`, folds it with `spec` (padding filled with the mean) and
/// fits a TT whose rank is chosen by binary search so that its parameter
/// count is the closest to `param_budget`.
pub fn variant_n(t: &DenseTensor, spec: &FoldingSpec, param_budget: usize) -> Result<VariantN> {
    let (mean, std) = mean_std(t.values());
    if !(std > 0.0) {
        return Err(Error::Domain("cannot decompose a constant tensor".into()));
    }
    let z = t.map(|v| (v - mean) / std)?;
    let (folded, mask) = spec.fold_tensor(&z, 0.0)?;
    let dims = spec.folded_dims();
    let max_rank = tt_param_count(dims, usize::MAX);
    let cost = |r: usize| tt_param_count(dims, r);
    let full_rank = (1..).find(|&r| cost(r) == max_rank).unwrap();
    let rank = if cost(1) >= param_budget {
        if cost(1) > param_budget {
            log::warn!(
                "parameter budget {param_budget} is below the rank-1 cost {}; using rank 1",
                cost(1)
            );
        }
        1
    } else {
        // Largest rank whose cost stays within budget, then the closer neighbour.
        let (mut lo, mut hi) = (1usize, full_rank);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if cost(mid) <= param_budget {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        if lo < full_rank && cost(lo + 1).abs_diff(param_budget) < param_budget - cost(lo) {
            lo + 1
        } else {
            lo
        }
    };
    let cores = tt_svd_values(dims, &folded, TtTarget::MaxRank(rank))?;
    let approx = cores.full_values();
    let (mut err, mut norm) = (0.0, 0.0);
    for ((&zv, &a), &real) in folded.iter().zip(&approx).zip(&mask) {
        if real {
            let (x, xh) = (zv * std + mean, a * std + mean);
            err += (x - xh) * (x - xh);
            norm += x * x;
        }
    }
    Ok(VariantN {
        cores,
        rank,
        fitness: 1.0 - (err / norm).sqrt(),
    })
}
